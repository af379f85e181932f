#ifndef DEAR_IMAGING_HPP
#define DEAR_IMAGING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dear/common.hpp"

namespace dear {

// H x W x C raster, interleaved row-major, values in [0,1]. All imaging
// values are plain data and immutable by convention once constructed;
// operations return new values.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c),
        data(size_t(h) * size_t(w) * size_t(c), 0.0) {
        if (h < 1 || w < 1 || c < 1) throw invalid_argument_error("Image: bad dimensions");
    }

    double& at(int y, int x, int c) {
        return data[(size_t(y) * width + size_t(x)) * channels + size_t(c)];
    }
    double at(int y, int x, int c) const {
        return data[(size_t(y) * width + size_t(x)) * channels + size_t(c)];
    }
    size_t pixel_count() const { return size_t(height) * size_t(width); }
};

// Binary mask aligned with an Image; 1 = missing pixel, 0 = valid.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), data(size_t(h) * size_t(w), 0) {
        if (h < 1 || w < 1) throw invalid_argument_error("Mask: bad dimensions");
    }
    uint8_t& at(int y, int x) { return data[size_t(y) * width + size_t(x)]; }
    uint8_t at(int y, int x) const { return data[size_t(y) * width + size_t(x)]; }
    double coverage() const {
        size_t s = 0;
        for (uint8_t v : data) s += v;
        return double(s) / double(data.size());
    }
};

struct MaskedImage {
    Image raster;  // masked pixels zero-filled
    Mask mask;
};

// N x 2 continuous (y, x) coordinates in [-1,1]^2, plus the lattice they
// index into. Pixel center i of n maps to -1 + (2i+1)/n.
struct CoordGrid {
    std::vector<double> coords;  // 2*N, (y,x) pairs in row-major pixel order
    int source_height = 0;
    int source_width = 0;
    size_t count() const { return coords.size() / 2; }
};

inline double pixel_center_coord(int i, int n) { return -1.0 + (2.0 * i + 1.0) / double(n); }

// Nearest pixel index for a coordinate in [-1,1]; clamped to the lattice.
inline int nearest_pixel(double coord, int n) {
    int i = int(std::floor((coord + 1.0) * 0.5 * n));
    if (i < 0) i = 0;
    if (i >= n) i = n - 1;
    return i;
}

CoordGrid make_coord_grid(int height, int width);

// Catmull-Rom (a = -0.5) separable resize with kernel widening on reduction
// (the kernel is stretched by the scale factor, so minification is
// antialiased). Output values are clamped to [0,1].
Image resize_bicubic(const Image& img, int out_h, int out_w);

// Integer-factor reduction; height and width must be divisible by `factor`.
Image downsample(const Image& img, int factor);

MaskedImage apply_mask(const Image& img, const Mask& mask);

// 8-bit PNG I/O (RGB or grayscale).
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

Mask read_mask(const std::string& path);      // grayscale PNG, threshold 0.5
void write_mask(const Mask& mask, const std::string& path);

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace dear

#endif  // DEAR_IMAGING_HPP
