#include <algorithm>
#include <cmath>

#include "dear/dataset.hpp"

namespace dear {

namespace {

void fill_disk(Mask& m, double cy, double cx, double r) {
    const int y0 = std::max(0, int(std::floor(cy - r)));
    const int y1 = std::min(m.height - 1, int(std::ceil(cy + r)));
    const int x0 = std::max(0, int(std::floor(cx - r)));
    const int x1 = std::min(m.width - 1, int(std::ceil(cx + r)));
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx <= r2) m.at(y, x) = 1;
        }
}

void draw_stroke(Mask& m, Rng& rng) {
    const double d = std::min(m.height, m.width);
    double y = rng.uniform(0.0, m.height - 1.0);
    double x = rng.uniform(0.0, m.width - 1.0);
    double angle = rng.uniform(0.0, 6.283185307179586);
    const int segments = rng.uniform_int(3, 8);
    const double radius = std::max(1.0, rng.uniform(0.015, 0.05) * d);
    for (int s = 0; s < segments; ++s) {
        const double len = rng.uniform(0.08, 0.25) * d;
        const double ny = y + len * std::sin(angle);
        const double nx = x + len * std::cos(angle);
        const int steps = std::max(1, int(std::ceil(len / (radius * 0.5))));
        for (int t = 0; t <= steps; ++t) {
            const double f = double(t) / steps;
            fill_disk(m, y + f * (ny - y), x + f * (nx - x), radius);
        }
        y = std::clamp(ny, 0.0, m.height - 1.0);
        x = std::clamp(nx, 0.0, m.width - 1.0);
        angle += rng.uniform(-1.2, 1.2);
    }
}

void draw_ellipse(Mask& m, Rng& rng) {
    const double d = std::min(m.height, m.width);
    const double cy = rng.uniform(0.0, m.height - 1.0);
    const double cx = rng.uniform(0.0, m.width - 1.0);
    const double ay = std::max(1.0, rng.uniform(0.03, 0.09) * d);
    const double ax = std::max(1.0, rng.uniform(0.03, 0.09) * d);
    const double rot = rng.uniform(0.0, 3.141592653589793);
    const double cr = std::cos(rot), sr = std::sin(rot);
    const double ext = std::max(ay, ax);
    const int y0 = std::max(0, int(std::floor(cy - ext)));
    const int y1 = std::min(m.height - 1, int(std::ceil(cy + ext)));
    const int x0 = std::max(0, int(std::floor(cx - ext)));
    const int x1 = std::min(m.width - 1, int(std::ceil(cx + ext)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double u = (cr * dx + sr * dy) / ax;
            const double v = (-sr * dx + cr * dy) / ay;
            if (u * u + v * v <= 1.0) m.at(y, x) = 1;
        }
}

}  // namespace

Mask generate_irregular_mask(int height, int width, uint64_t seed, double lo, double hi) {
    if (height < 1 || width < 1)
        throw invalid_argument_error("generate_irregular_mask: bad dimensions");
    if (hi <= 0.0) {
        if (lo != 0.0) throw invalid_argument_error("generate_irregular_mask: lo > hi");
        return Mask(height, width);
    }
    if (lo < 0.0 || lo >= hi || hi > 0.9)
        throw invalid_argument_error("generate_irregular_mask: need 0 <= lo < hi <= 0.9");

    const int kAttempts = 64;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        Rng rng(mix_seed(seed, uint64_t(attempt)));
        Mask m(height, width);
        bool overshoot = false;
        // keep adding shapes until the floor is reached; an overshoot past
        // the ceiling voids the attempt
        for (int shape = 0; shape < 4096; ++shape) {
            if (m.coverage() >= lo) break;
            if (rng.uniform() < 0.7)
                draw_stroke(m, rng);
            else
                draw_ellipse(m, rng);
            if (m.coverage() > hi) {
                overshoot = true;
                break;
            }
        }
        const double cov = m.coverage();
        if (!overshoot && cov >= lo && cov <= hi) return m;
    }
    throw generation_error("generate_irregular_mask: could not hit coverage window");
}

}  // namespace dear
