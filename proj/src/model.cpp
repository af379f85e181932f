#include "dear/model.hpp"

#include <cmath>

namespace dear {

using ad::Graph;
using ad::Tensor;
using ad::VarId;

namespace {

Tensor he_uniform(Rng& rng, std::vector<int> shape, int fan_in) {
    const double limit = std::sqrt(6.0 / double(fan_in));
    return ad::random_uniform(rng, std::move(shape), -limit, limit);
}

void add_conv(ParamBank& bank, Rng& rng, const std::string& name, int cout, int cin, int k) {
    bank.add(name + ".w", he_uniform(rng, {cout, cin, k, k}, cin * k * k));
    bank.add(name + ".b", Tensor({cout}));
}

// transposed conv weights are stored [Cin][Cout][k][k]
void add_tconv(ParamBank& bank, Rng& rng, const std::string& name, int cin, int cout, int k) {
    bank.add(name + ".w", he_uniform(rng, {cin, cout, k, k}, cin * k * k));
    bank.add(name + ".b", Tensor({cout}));
}

void add_linear(ParamBank& bank, Rng& rng, const std::string& name, int din, int dout) {
    bank.add(name + ".w", he_uniform(rng, {din, dout}, din));
    bank.add(name + ".b", Tensor({dout}));
}

void add_trunk(ParamBank& bank, Rng& rng, const std::string& prefix, const ModelConfig& cfg) {
    const int cz = cfg.latent_channels;
    add_conv(bank, rng, prefix + ".stem0", cz, cfg.input_channels(), 7);
    add_conv(bank, rng, prefix + ".stem1", cz, cz, 4);
    add_conv(bank, rng, prefix + ".stem2", cz, cz, 4);
    for (int i = 0; i < cfg.n_resblocks; ++i) {
        const std::string rb = prefix + ".res" + std::to_string(i);
        add_conv(bank, rng, rb + ".c0", cz, cz, 3);
        add_conv(bank, rng, rb + ".c1", cz, cz, 3);
    }
}

ParamBank build_bank(const ModelConfig& cfg, uint64_t seed) {
    ParamBank bank;
    Rng rng(seed);
    const int cz = cfg.latent_channels;
    const int c = cfg.feature_channels;
    add_trunk(bank, rng, "enc", cfg);
    add_tconv(bank, rng, "dec.t0", cz, cz, 4);
    add_tconv(bank, rng, "dec.t1", cz, c, 4);
    if (cfg.detail_enhance || cfg.importance) add_trunk(bank, rng, "flt", cfg);
    if (cfg.detail_enhance) {
        const int kk = cfg.latent_kernel * cfg.latent_kernel;
        add_conv(bank, rng, "flt.head", cz * kk, cz, 3);
    }
    if (cfg.importance) {
        const int kk = cfg.recon_kernel * cfg.recon_kernel;
        add_tconv(bank, rng, "imp.t0", cz, cz, 4);
        add_tconv(bank, rng, "imp.t1", cz, kk, 4);
        add_conv(bank, rng, "imp.head", 1, kk, 1);
    }
    add_linear(bank, rng, "mlp.l0", cfg.mlp_input_dim(), cfg.mlp_hidden);
    add_linear(bank, rng, "mlp.l1", cfg.mlp_hidden, cfg.mlp_hidden);
    add_linear(bank, rng, "mlp.l2", cfg.mlp_hidden, cfg.mlp_hidden);
    add_linear(bank, rng, "mlp.l3", cfg.mlp_hidden, 3);
    return bank;
}

}  // namespace

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg), bank_(build_bank(cfg, seed)) {}

Model::Model(ModelConfig cfg, ParamBank bank) : cfg_(cfg), bank_(std::move(bank)) {}

BoundParams Model::bind(ad::Graph& g) const {
    BoundParams bp;
    bp.vars.reserve(bank_.tensors.size());
    for (const auto& t : bank_.tensors) bp.vars.push_back(g.param(&t));
    return bp;
}

Tensor Model::rgb_planes(const Image& img) {
    Tensor t({img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at3(c, y, x) = img.at(y, x, c);
    return t;
}

Tensor Model::input_planes(const ModelConfig& cfg, const MaskedImage& input) {
    const Image& img = input.raster;
    if (img.channels != 3) throw invalid_argument_error("model input must be RGB");
    Tensor t({cfg.input_channels(), img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at3(c, y, x) = img.at(y, x, c);
    if (cfg.mask_channel)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at3(3, y, x) = input.mask.at(y, x) ? 1.0 : 0.0;
    return t;
}

Model::Maps Model::forward_maps(ad::Graph& g, const BoundParams& p,
                                const MaskedImage& input) const {
    const int h = input.raster.height, w = input.raster.width;
    VarId in = g.leaf(input_planes(cfg_, input));

    VarId flt = -1;
    if (cfg_.detail_enhance || cfg_.importance) flt = filter_latent(g, p, in);

    VarId z = encode(g, p, in);
    VarId z_hat = z;
    if (cfg_.detail_enhance) {
        VarId lowpass = predict_lowpass(g, p, flt);
        VarId highpass = highpass_from_lowpass(g, lowpass);
        z_hat = g.elementwise_filter(z, highpass, cfg_.latent_kernel);
    }
    VarId f = decode(g, p, z_hat, h, w);

    Maps maps;
    maps.h = h;
    maps.w = w;
    maps.f_rows = g.chw_to_rows(f);
    maps.e_rows = cfg_.unmask_attention ? unmask_attend(g, maps.f_rows, input.mask)
                                        : maps.f_rows;
    if (cfg_.importance) {
        VarId kernels = predict_recon_kernels(g, p, flt, h, w);
        maps.recon = reconstruct_lr(g, kernels, rgb_planes(input.raster));
        maps.w_map = importance_map(g, p, kernels);
        maps.w_rows = g.chw_to_rows(maps.w_map);
    } else {
        maps.w_rows = g.leaf(Tensor({h * w, 1}, 1.0));
    }
    return maps;
}

Image Model::render_grid(const MaskedImage& input, int out_h, int out_w, int chunk,
                         int workers) const {
    const int h = input.raster.height, w = input.raster.width;

    // shared maps once per image
    Graph g;
    BoundParams p = bind(g);
    Maps maps = forward_maps(g, p, input);
    const Tensor f_rows = g.val(maps.f_rows);
    const Tensor e_rows = g.val(maps.e_rows);
    const Tensor w_rows = g.val(maps.w_rows);

    Image out(out_h, out_w, 3);
    const int64_t total = int64_t(out_h) * out_w;
    if (chunk < 1) chunk = 16384;
    const int64_t n_chunks = (total + chunk - 1) / chunk;

    parallel_for(n_chunks, workers, [&](int64_t ci) {
        const int64_t lo = ci * chunk;
        const int64_t hi = std::min(total, lo + chunk);
        std::vector<double> coords;
        coords.reserve(size_t(hi - lo) * 2);
        for (int64_t i = lo; i < hi; ++i) {
            const int y = int(i / out_w), x = int(i % out_w);
            coords.push_back(pixel_center_coord(y, out_h));
            coords.push_back(pixel_center_coord(x, out_w));
        }
        QueryBatch qb = build_queries(h, w, coords, cfg_.ensemble_invdist);

        Graph cg;
        BoundParams cp = bind(cg);
        Maps cmaps;
        cmaps.h = h;
        cmaps.w = w;
        cmaps.f_rows = cg.leaf(f_rows);
        cmaps.e_rows = cg.leaf(e_rows);
        cmaps.w_rows = cg.leaf(w_rows);
        VarId colors = predict_colors(cg, cp, cmaps, qb);
        const Tensor& cv = cg.val(colors);
        for (int64_t i = lo; i < hi; ++i) {
            const int y = int(i / out_w), x = int(i % out_w);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = clamp01(cv.data[size_t(i - lo) * 3 + size_t(c)]);
        }
    });
    return out;
}

Image Model::render(const MaskedImage& input, double scale, int chunk, int workers) const {
    if (scale < 1.0) throw invalid_argument_error("render: scale must be >= 1");
    const int out_h = int(std::floor(scale * input.raster.height));
    const int out_w = int(std::floor(scale * input.raster.width));
    return render_grid(input, out_h, out_w, chunk, workers);
}

Image Model::importance_image(const MaskedImage& input) const {
    const int h = input.raster.height, w = input.raster.width;
    Image img(h, w, 1);
    if (!cfg_.importance) {
        for (auto& v : img.data) v = 1.0;
        return img;
    }
    Graph g;
    BoundParams p = bind(g);
    VarId in = g.leaf(input_planes(cfg_, input));
    VarId flt = filter_latent(g, p, in);
    VarId kernels = predict_recon_kernels(g, p, flt, h, w);
    VarId wmap = importance_map(g, p, kernels);
    const Tensor& t = g.val(wmap);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(y, x, 0) = t.at3(0, y, x);
    return img;
}

}  // namespace dear
