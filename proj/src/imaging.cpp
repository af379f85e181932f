#include "dear/imaging.hpp"

#include <cmath>

namespace dear {

CoordGrid make_coord_grid(int height, int width) {
    if (height < 1 || width < 1)
        throw invalid_argument_error("make_coord_grid: dimensions must be positive");
    CoordGrid grid;
    grid.source_height = height;
    grid.source_width = width;
    grid.coords.resize(size_t(height) * size_t(width) * 2);
    size_t k = 0;
    for (int i = 0; i < height; ++i) {
        const double cy = pixel_center_coord(i, height);
        for (int j = 0; j < width; ++j) {
            grid.coords[k++] = cy;
            grid.coords[k++] = pixel_center_coord(j, width);
        }
    }
    return grid;
}

namespace {

// Catmull-Rom kernel, a = -0.5.
double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0) return ((1.5 * t - 2.5) * t) * t + 1.0;
    if (t < 2.0) return (((-0.5 * t) + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

struct TapSet {
    std::vector<int> index;     // flattened: taps per output position
    std::vector<double> weight;
    int taps = 0;
};

// Precomputes clamped source taps and normalized weights for one axis.
TapSet make_taps(int in_n, int out_n) {
    const double scale = double(in_n) / double(out_n);
    const double support = scale > 1.0 ? 2.0 * scale : 2.0;
    const int taps = int(std::ceil(support)) * 2 + 1;
    TapSet ts;
    ts.taps = taps;
    ts.index.resize(size_t(out_n) * taps);
    ts.weight.resize(size_t(out_n) * taps);
    const double kscale = scale > 1.0 ? 1.0 / scale : 1.0;
    for (int o = 0; o < out_n; ++o) {
        const double u = (o + 0.5) * scale - 0.5;
        const int lo = int(std::floor(u - support + 0.5));
        double wsum = 0.0;
        for (int t = 0; t < taps; ++t) {
            const int i = lo + t;
            double w = cubic_weight((i - u) * kscale);
            int ci = i < 0 ? 0 : (i >= in_n ? in_n - 1 : i);
            ts.index[size_t(o) * taps + t] = ci;
            ts.weight[size_t(o) * taps + t] = w;
            wsum += w;
        }
        const double inv = 1.0 / wsum;
        for (int t = 0; t < taps; ++t) ts.weight[size_t(o) * taps + t] *= inv;
    }
    return ts;
}

}  // namespace

Image resize_bicubic(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw invalid_argument_error("resize_bicubic: output dimensions must be positive");
    const TapSet ty = make_taps(img.height, out_h);
    const TapSet tx = make_taps(img.width, out_w);
    const int C = img.channels;

    // horizontal pass
    Image tmp(img.height, out_w, C);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < out_w; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int t = 0; t < tx.taps; ++t)
                    acc += tx.weight[size_t(x) * tx.taps + t] *
                           img.at(y, tx.index[size_t(x) * tx.taps + t], c);
                tmp.at(y, x, c) = acc;
            }
    // vertical pass
    Image out(out_h, out_w, C);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int t = 0; t < ty.taps; ++t)
                    acc += ty.weight[size_t(y) * ty.taps + t] *
                           tmp.at(ty.index[size_t(y) * ty.taps + t], x, c);
                out.at(y, x, c) = clamp01(acc);
            }
    return out;
}

Image downsample(const Image& img, int factor) {
    if (factor < 1) throw invalid_argument_error("downsample: factor must be >= 1");
    if (img.height % factor != 0 || img.width % factor != 0)
        throw invalid_argument_error("downsample: dimensions not divisible by factor");
    return resize_bicubic(img, img.height / factor, img.width / factor);
}

MaskedImage apply_mask(const Image& img, const Mask& mask) {
    if (img.height != mask.height || img.width != mask.width)
        throw invalid_argument_error("apply_mask: image and mask shapes differ");
    MaskedImage out;
    out.raster = img;
    out.mask = mask;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < img.channels; ++c) out.raster.at(y, x, c) = 0.0;
    return out;
}

}  // namespace dear
