#ifndef DEAR_BASELINES_HPP
#define DEAR_BASELINES_HPP

#include "dear/imaging.hpp"

namespace dear {

// Center-aligned bilinear resampling to floor(s*H) x floor(s*W).
Image bilinear_upscale(const Image& img, double s);
Image bilinear_resize(const Image& img, int out_h, int out_w);

// Iterative boundary fill: every pass assigns each missing pixel adjacent to
// at least one valid pixel the mean of its valid 8-neighbors, until nothing
// is missing. Fails on a fully masked image.
Image naive_inpaint(const MaskedImage& input);

Mask nearest_upscale_mask(const Mask& mask, int out_h, int out_w);

enum class StackOrder {
    kInpaintFirst,  // fill at LR, then upscale
    kSrFirst,       // upscale the holed raster, then fill at HR
};

// Two-stage pipeline built from the naive primitives.
Image stack_pipeline(const MaskedImage& input, StackOrder order, double s);

}  // namespace dear

#endif  // DEAR_BASELINES_HPP
