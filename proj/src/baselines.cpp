#include "dear/baselines.hpp"

#include <cmath>

namespace dear {

Image bilinear_resize(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw invalid_argument_error("bilinear_resize: bad output size");
    Image out(out_h, out_w, img.channels);
    const double sy = double(img.height) / out_h;
    const double sx = double(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double u = (y + 0.5) * sy - 0.5;
        int y0 = int(std::floor(u));
        const double fy = u - y0;
        int y1 = y0 + 1;
        y0 = std::clamp(y0, 0, img.height - 1);
        y1 = std::clamp(y1, 0, img.height - 1);
        for (int x = 0; x < out_w; ++x) {
            const double v = (x + 0.5) * sx - 0.5;
            int x0 = int(std::floor(v));
            const double fx = v - x0;
            int x1 = x0 + 1;
            x0 = std::clamp(x0, 0, img.width - 1);
            x1 = std::clamp(x1, 0, img.width - 1);
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
                const double bot = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
                out.at(y, x, c) = clamp01((1.0 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

Image bilinear_upscale(const Image& img, double s) {
    if (s < 1.0) throw invalid_argument_error("bilinear_upscale: scale must be >= 1");
    return bilinear_resize(img, int(std::floor(s * img.height)), int(std::floor(s * img.width)));
}

Image naive_inpaint(const MaskedImage& input) {
    const Image& src = input.raster;
    const Mask& mask = input.mask;
    if (src.height != mask.height || src.width != mask.width)
        throw invalid_argument_error("naive_inpaint: mask size mismatch");

    Image work = src;
    std::vector<uint8_t> valid(mask.data.size());
    int64_t missing = 0;
    for (size_t i = 0; i < mask.data.size(); ++i) {
        valid[i] = mask.data[i] ? 0 : 1;
        if (mask.data[i]) ++missing;
    }
    if (missing == int64_t(mask.data.size()))
        throw invalid_argument_error("naive_inpaint: fully masked image has no seed pixels");

    const int h = src.height, w = src.width, ch = src.channels;
    std::vector<double> fill(static_cast<size_t>(ch));
    int passes = 0;
    while (missing > 0) {
        if (++passes > h + w)
            throw invalid_argument_error("naive_inpaint: exceeded the H+W pass bound");
        // fills are computed against the validity snapshot of this pass
        std::vector<uint8_t> next_valid = valid;
        std::vector<double> next_data = work.data;
        int64_t filled = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (valid[size_t(y) * w + x]) continue;
                int n = 0;
                std::fill(fill.begin(), fill.end(), 0.0);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        if (!valid[size_t(yy) * w + xx]) continue;
                        ++n;
                        for (int c = 0; c < ch; ++c) fill[size_t(c)] += work.at(yy, xx, c);
                    }
                if (n == 0) continue;
                for (int c = 0; c < ch; ++c)
                    next_data[(size_t(y) * w + size_t(x)) * ch + size_t(c)] =
                        fill[size_t(c)] / n;
                next_valid[size_t(y) * w + x] = 1;
                ++filled;
            }
        work.data = std::move(next_data);
        valid = std::move(next_valid);
        missing -= filled;
        if (filled == 0)
            throw invalid_argument_error("naive_inpaint: no progress (disconnected mask?)");
    }
    return work;
}

Mask nearest_upscale_mask(const Mask& mask, int out_h, int out_w) {
    Mask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const int sy = std::min(mask.height - 1, int((y + 0.5) * mask.height / out_h));
            const int sx = std::min(mask.width - 1, int((x + 0.5) * mask.width / out_w));
            out.at(y, x) = mask.at(sy, sx) ? 1 : 0;
        }
    return out;
}

Image stack_pipeline(const MaskedImage& input, StackOrder order, double s) {
    if (s < 1.0) throw invalid_argument_error("stack_pipeline: scale must be >= 1");
    if (order == StackOrder::kInpaintFirst) {
        Image filled = naive_inpaint(input);
        return bilinear_upscale(filled, s);
    }
    // SR first: the holed raster is resampled as-is, the mask is upscaled by
    // nearest neighbor and re-binarized, and the fill runs at high resolution
    // on the smeared boundaries.
    Image up = bilinear_upscale(input.raster, s);
    Mask up_mask = nearest_upscale_mask(input.mask, up.height, up.width);
    MaskedImage hr_masked;
    hr_masked.raster = std::move(up);
    hr_masked.mask = std::move(up_mask);
    return naive_inpaint(hr_masked);
}

}  // namespace dear
