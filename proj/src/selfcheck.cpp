#include "dear/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <filesystem>

#include "dear/baselines.hpp"
#include "dear/dataset.hpp"
#include "dear/metrics.hpp"
#include "dear/model.hpp"

namespace dear {

namespace {

using ad::Graph;
using ad::Tensor;
using ad::VarId;

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.latent_channels = 4;
    cfg.feature_channels = 4;
    cfg.n_resblocks = 1;
    cfg.mlp_hidden = 8;
    return cfg;
}

MaskedImage small_input(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 3);
    for (auto& v : img.data) v = rng.uniform();
    Mask m = generate_irregular_mask(h, w, seed + 1, 0.1, 0.3);
    return apply_mask(img, m);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

CheckResult check_coord_roundtrip() {
    CheckResult r{"coordinate round trip", true, ""};
    for (int n : {1, 3, 7, 64}) {
        CoordGrid g = make_coord_grid(n, n);
        for (int i = 0; i < n; ++i)
            if (nearest_pixel(g.coords[size_t(i) * size_t(n) * 2], n) != i) r.pass = false;
    }
    return r;
}

CheckResult check_bicubic_constant() {
    CheckResult r{"bicubic constant preservation", true, ""};
    Image c(16, 16, 3);
    for (auto& v : c.data) v = 0.37;
    Image d = downsample(c, 4);
    double err = 0.0;
    for (double v : d.data) err = std::max(err, std::abs(v - 0.37));
    r.pass = err < 1e-12;
    r.detail = "max dev " + fmt(err);
    return r;
}

CheckResult check_png_roundtrip() {
    CheckResult r{"png write/read round trip", true, ""};
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "dear_selftest";
    fs::create_directories(dir);
    Rng rng(5);
    Image img(9, 11, 3);
    for (auto& v : img.data) v = rng.uniform();
    const std::string p = (dir / "rt.png").string();
    write_image(img, p);
    Image back = read_image(p);
    double err = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i)
        err = std::max(err, std::abs(img.data[i] - back.data[i]));
    fs::remove_all(dir);
    r.pass = err <= 1.0 / 510.0 + 1e-12;
    r.detail = "max err " + fmt(err) + " (bound 1/510)";
    return r;
}

CheckResult check_filter_sums() {
    CheckResult r{"low/high-pass kernel group sums", true, ""};
    ModelConfig cfg = small_config();
    const int kk = cfg.latent_kernel * cfg.latent_kernel;
    double worst_lp = 0.0, worst_hp = 0.0;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        Model model(cfg, seed + 1000);
        MaskedImage in = small_input(9, 9, seed);
        Graph g;
        BoundParams p = model.bind(g);
        VarId flt = model.filter_latent(g, p, g.leaf(Model::input_planes(cfg, in)));
        VarId lp = model.predict_lowpass(g, p, flt);
        VarId hp = model.highpass_from_lowpass(g, lp);
        const Tensor& lpt = g.val(lp);
        const Tensor& hpt = g.val(hp);
        const int groups = lpt.dim(0) / kk;
        const int64_t plane = int64_t(lpt.dim(1)) * lpt.dim(2);
        for (int c = 0; c < groups; ++c)
            for (int64_t i = 0; i < plane; ++i) {
                double ls = 0.0, hs = 0.0;
                for (int t = 0; t < kk; ++t) {
                    const size_t ix = size_t(c * kk + t) * plane + size_t(i);
                    if (lpt.data[ix] < 0.0) r.pass = false;
                    ls += lpt.data[ix];
                    hs += hpt.data[ix];
                }
                worst_lp = std::max(worst_lp, std::abs(ls - 1.0));
                worst_hp = std::max(worst_hp, std::abs(hs - double(kk - 1)));
            }
    }
    if (worst_lp > 1e-5 || worst_hp > 1e-4) r.pass = false;
    r.detail = "lp dev " + fmt(worst_lp) + ", hp dev " + fmt(worst_hp);
    return r;
}

CheckResult check_ensemble_weights() {
    CheckResult r{"ensemble weight invariants", true, ""};
    QueryBatch center = build_queries(4, 4, {pixel_center_coord(1, 4), pixel_center_coord(2, 4)});
    if (center.weights[0] != 1.0 || center.weights[1] != 0.0) r.pass = false;
    const double mid_y = 0.5 * (pixel_center_coord(1, 4) + pixel_center_coord(2, 4));
    QueryBatch cell = build_queries(4, 4, {mid_y, mid_y});
    for (int j = 0; j < 4; ++j)
        if (cell.weights[size_t(j)] != 0.25) r.pass = false;
    Rng rng(9);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        QueryBatch qb = build_queries(5, 7, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        double s = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (qb.weights[size_t(j)] < 0.0) r.pass = false;
            s += qb.weights[size_t(j)];
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    if (worst > 1e-6) r.pass = false;
    r.detail = "worst sum dev " + fmt(worst);
    return r;
}

double op_grad_err(const std::function<VarId(Graph&, const std::vector<VarId>&)>& op,
                   std::vector<Tensor> inputs, uint64_t probe_seed) {
    Rng rng(probe_seed);
    Tensor probe;
    {
        Graph g0;
        std::vector<VarId> vars;
        for (const auto& t : inputs) vars.push_back(g0.input(t));
        probe = ad::random_uniform(rng, g0.val(op(g0, vars)).shape, -1.0, 1.0);
    }
    auto eval = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) -> double {
        Graph g;
        std::vector<VarId> vars;
        for (const auto& t : xs) vars.push_back(g.input(t));
        VarId loss = g.dot_const(op(g, vars), probe);
        if (grads) {
            g.backward(loss);
            grads->clear();
            for (VarId id : vars) grads->push_back(g.grad_of(id));
        }
        return g.val(loss).data[0];
    };
    return ad::gradient_check(eval, std::move(inputs), 1e-5).max_rel_err;
}

CheckResult check_gradients() {
    CheckResult r{"gradient micro-checks vs finite differences", true, ""};
    Rng rng(21);
    double worst = 0.0;

    // element-wise latent filtering
    Tensor z = ad::random_uniform(rng, {2, 4, 4}, -1.0, 1.0);
    Tensor k = ad::random_uniform(rng, {18, 4, 4}, -0.5, 0.5);
    worst = std::max(worst, op_grad_err(
                                [](Graph& g, const std::vector<VarId>& v) {
                                    return g.elementwise_filter(v[0], v[1], 3);
                                },
                                {z, k}, 31));

    // attention
    ModelConfig cfg = small_config();
    Model model(cfg, 33);
    Mask m(2, 2);
    m.at(0, 1) = 1;
    Tensor f = ad::random_uniform(rng, {4, 3}, -1.0, 1.0);
    worst = std::max(worst, op_grad_err(
                                [&](Graph& g, const std::vector<VarId>& v) {
                                    return model.unmask_attend(g, v[0], m);
                                },
                                {f}, 37));

    // per-pixel reconstruction kernels
    Image img(5, 5, 3);
    for (auto& v : img.data) v = rng.uniform();
    Tensor kr = ad::random_uniform(rng, {9, 5, 5}, -1.0, 1.0);
    Tensor raster = Model::rgb_planes(img);
    worst = std::max(worst, op_grad_err(
                                [&](Graph& g, const std::vector<VarId>& v) {
                                    return g.kernel_reconstruct(v[0], raster, 3);
                                },
                                {kr}, 41));

    r.pass = worst <= 1e-4;
    r.detail = "max rel err " + fmt(worst);
    return r;
}

CheckResult check_metric_anchors() {
    CheckResult r{"metric oracle anchors", true, ""};
    Image zero(16, 16, 3);
    Image tenth(16, 16, 3);
    for (auto& v : tenth.data) v = 0.1;
    if (std::abs(psnr(zero, tenth) - 20.0) > 1e-9) r.pass = false;
    if (psnr(zero, zero) != 99.0) r.pass = false;
    Rng rng(43);
    Image a(16, 16, 3), b(16, 16, 3);
    for (auto& v : a.data) v = rng.uniform();
    for (auto& v : b.data) v = rng.uniform();
    if (ssim(a, a) != 1.0) r.pass = false;
    if (ssim(a, b) != ssim(b, a)) r.pass = false;
    if (l1_metric(a, a) != 0.0) r.pass = false;
    return r;
}

}  // namespace

std::vector<CheckResult> run_selfchecks() {
    std::vector<CheckResult> out;
    out.push_back(check_coord_roundtrip());
    out.push_back(check_bicubic_constant());
    out.push_back(check_png_roundtrip());
    out.push_back(check_filter_sums());
    out.push_back(check_ensemble_weights());
    out.push_back(check_gradients());
    out.push_back(check_metric_anchors());
    return out;
}

}  // namespace dear
