#ifndef DEAR_TESTS_SUPPORT_HPP
#define DEAR_TESTS_SUPPORT_HPP

#include <cmath>
#include <functional>

#include "dear/dataset.hpp"
#include "dear/model.hpp"

namespace dear::testsup {

// Small architecture used by gradient checks and fast unit tests.
inline ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.latent_channels = 4;
    cfg.feature_channels = 4;
    cfg.n_resblocks = 1;
    cfg.mlp_hidden = 8;
    return cfg;
}

inline Image smooth_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 3);
    for (int c = 0; c < 3; ++c) {
        const double fy = rng.uniform(0.5, 2.0), fx = rng.uniform(0.5, 2.0);
        const double py = rng.uniform(0.0, 6.28), px = rng.uniform(0.0, 6.28);
        const double amp = rng.uniform(0.25, 0.4);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(y, x, c) = 0.5 + amp * std::sin(fy * 6.283 * y / h + py) *
                                            std::cos(fx * 6.283 * x / w + px);
    }
    return img;
}

// Smooth waves plus a soft radial blob; richer than smooth_image but still
// easy to reconstruct from context, which is what the overfit fixtures need.
inline Image synth_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 3);
    for (int c = 0; c < 3; ++c) {
        const double fy1 = rng.uniform(0.5, 2.5), fx1 = rng.uniform(0.5, 2.5);
        const double fy2 = rng.uniform(2.0, 5.0), fx2 = rng.uniform(2.0, 5.0);
        const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
        const double cy = rng.uniform(0.2, 0.8) * h, cx = rng.uniform(0.2, 0.8) * w;
        const double rad = rng.uniform(0.15, 0.35) * std::min(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = 0.5 +
                           0.25 * std::sin(fy1 * 6.283 * y / h + p1) *
                               std::cos(fx1 * 6.283 * x / w + p2) +
                           0.12 * std::sin(fy2 * 6.283 * y / h + p2) *
                               std::sin(fx2 * 6.283 * x / w + p1);
                const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (rad * rad);
                v += 0.15 * std::exp(-d2);
                img.at(y, x, c) = clamp01(v);
            }
    }
    return img;
}

// Central finite differences over every model parameter for a scalar loss
// built from a bound graph. Returns the max relative error.
inline double model_param_grad_check(
    Model& model,
    const std::function<ad::VarId(ad::Graph&, const BoundParams&)>& loss_builder,
    double h = 1e-5) {
    auto eval = [&](const std::vector<ad::Tensor>& xs,
                    std::vector<ad::Tensor>* grads) -> double {
        model.bank().tensors = xs;
        ad::Graph g;
        BoundParams p = model.bind(g);
        ad::VarId loss = loss_builder(g, p);
        if (grads) {
            g.backward(loss);
            grads->clear();
            for (ad::VarId id : p.vars) grads->push_back(g.grad_of(id));
        }
        return g.val(loss).data[0];
    };
    auto res = ad::gradient_check(eval, model.bank().tensors, h);
    return res.max_rel_err;
}

}  // namespace dear::testsup

#endif  // DEAR_TESTS_SUPPORT_HPP
