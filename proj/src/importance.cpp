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

// Two stride-2 transposed convolutions lift the filter-branch latent back to
// input resolution as one K*K kernel per pixel.
VarId Model::predict_recon_kernels(Graph& g, const BoundParams& p, VarId flt_latent, int h,
                                   int w) const {
    ConvRef t0 = find(bank_, p, "imp.t0");
    ConvRef t1 = find(bank_, p, "imp.t1");
    VarId x = g.relu(g.conv_transpose2d(flt_latent, t0.w, t0.b, 2, ceil_div(h, 2), ceil_div(w, 2)));
    return g.conv_transpose2d(x, t1.w, t1.b, 2, h, w);
}

// One kernel per pixel, shared across RGB, applied to the corrupted raster.
VarId Model::reconstruct_lr(Graph& g, VarId kernels, Tensor masked_rgb) const {
    return g.kernel_reconstruct(kernels, std::move(masked_rgb), cfg_.recon_kernel);
}

// 1x1 convolution over the kernel field squashed to (0,1).
VarId Model::importance_map(Graph& g, const BoundParams& p, VarId kernels) const {
    ConvRef head = find(bank_, p, "imp.head");
    return g.sigmoid(g.conv2d(kernels, head.w, head.b, 1));
}

}  // namespace dear
