#include "dear/model.hpp"

namespace dear {

using ad::Graph;
using ad::Tensor;
using ad::VarId;

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct ConvRef {
    VarId w, b;
};

ConvRef find(const ParamBank& bank, const BoundParams& p, const std::string& name) {
    const int wi = bank.index_of(name + ".w");
    const int bi = bank.index_of(name + ".b");
    if (wi < 0 || bi < 0) throw invalid_argument_error("missing parameter group: " + name);
    return {p.vars[size_t(wi)], p.vars[size_t(bi)]};
}

}  // namespace

// Shared trunk: 7x7 stride-1 stem, two 4x4 stride-2 stems (overall x4
// reduction), then the residual stack.
VarId Model::trunk(Graph& g, const BoundParams& p, const std::string& prefix,
                   VarId input) const {
    const Tensor& in = g.val(input);
    if (in.dim(1) < 8 || in.dim(2) < 8)
        throw invalid_argument_error("encoder input must be at least 8x8");
    ConvRef s0 = find(bank_, p, prefix + ".stem0");
    ConvRef s1 = find(bank_, p, prefix + ".stem1");
    ConvRef s2 = find(bank_, p, prefix + ".stem2");
    VarId x = g.relu(g.conv2d(input, s0.w, s0.b, 1));
    x = g.relu(g.conv2d(x, s1.w, s1.b, 2));
    x = g.relu(g.conv2d(x, s2.w, s2.b, 2));
    for (int i = 0; i < cfg_.n_resblocks; ++i) {
        const std::string rb = prefix + ".res" + std::to_string(i);
        ConvRef c0 = find(bank_, p, rb + ".c0");
        ConvRef c1 = find(bank_, p, rb + ".c1");
        VarId y = g.conv2d(x, c0.w, c0.b, 1);
        y = g.relu(y);
        y = g.conv2d(y, c1.w, c1.b, 1);
        x = g.add(x, y);
    }
    return x;
}

VarId Model::encode(Graph& g, const BoundParams& p, VarId input) const {
    return trunk(g, p, "enc", input);
}

VarId Model::filter_latent(Graph& g, const BoundParams& p, VarId input) const {
    return trunk(g, p, "flt", input);
}

VarId Model::predict_lowpass(Graph& g, const BoundParams& p, VarId flt_latent) const {
    ConvRef head = find(bank_, p, "flt.head");
    VarId logits = g.conv2d(flt_latent, head.w, head.b, 1);
    return g.softmax_channel_blocks(logits, cfg_.latent_kernel * cfg_.latent_kernel);
}

VarId Model::highpass_from_lowpass(Graph& g, VarId lowpass) const {
    if (!cfg_.highpass_delta_form) return g.one_minus(lowpass);
    // delta form: identity kernel minus the low-pass kernel
    const Tensor& lp = g.val(lowpass);
    const int kk = cfg_.latent_kernel * cfg_.latent_kernel;
    const int center = kk / 2;
    Tensor delta(lp.shape);
    const int cb = lp.dim(0);
    const int64_t plane = int64_t(lp.dim(1)) * lp.dim(2);
    for (int c = 0; c < cb; ++c)
        if (c % kk == center)
            for (int64_t i = 0; i < plane; ++i) delta.data[size_t(c) * plane + size_t(i)] = 1.0;
    return g.sub(g.leaf(std::move(delta)), lowpass);
}

VarId Model::decode(Graph& g, const BoundParams& p, VarId z_hat, int out_h, int out_w) const {
    ConvRef t0 = find(bank_, p, "dec.t0");
    ConvRef t1 = find(bank_, p, "dec.t1");
    const int mid_h = ceil_div(out_h, 2), mid_w = ceil_div(out_w, 2);
    VarId x = g.relu(g.conv_transpose2d(z_hat, t0.w, t0.b, 2, mid_h, mid_w));
    return g.conv_transpose2d(x, t1.w, t1.b, 2, out_h, out_w);
}

VarId Model::extract_features(Graph& g, const BoundParams& p, VarId input, int h, int w) const {
    VarId z = encode(g, p, input);
    VarId z_hat = z;
    if (cfg_.detail_enhance) {
        VarId flt = filter_latent(g, p, input);
        VarId highpass = highpass_from_lowpass(g, predict_lowpass(g, p, flt));
        z_hat = g.elementwise_filter(z, highpass, cfg_.latent_kernel);
    }
    return decode(g, p, z_hat, h, w);
}

}  // namespace dear
