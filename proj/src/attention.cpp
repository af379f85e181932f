#include <cmath>

#include "dear/model.hpp"

namespace dear {

using ad::Graph;
using ad::Tensor;
using ad::VarId;

// Zeroes the rows of masked pixels: F_M = (1 - M) * F.
VarId Model::mask_feature_rows(Graph& g, VarId f_rows, const Mask& mask) {
    const Tensor& f = g.val(f_rows);
    const int n = f.dim(0);
    if (n != mask.height * mask.width)
        throw invalid_argument_error("mask_feature_rows: mask/feature size mismatch");
    Tensor keep({n});
    for (int i = 0; i < n; ++i) keep.data[size_t(i)] = mask.data[size_t(i)] ? 0.0 : 1.0;
    return g.scale_rows(f_rows, std::move(keep));
}

// E = softmax(F_M F^T / sqrt(C)) F. Single head, no learned projections;
// the scaling dimension is the feature channel count. With key stride > 1
// the key/value rows are a strided pixel subset, shrinking the score matrix
// to HW x (HW/stride^2); rows remain convex combinations of feature rows.
VarId Model::unmask_attend(Graph& g, VarId f_rows, const Mask& mask) const {
    const Tensor& f = g.val(f_rows);
    const int n = f.dim(0), c = f.dim(1);
    const int stride = std::max(1, cfg_.attention_key_stride);
    if (n > cfg_.attention_budget)
        throw resource_limit_error(
            "unmask_attend: " + std::to_string(n) + " pixels exceed the attention budget of " +
            std::to_string(cfg_.attention_budget) + "; lower the input resolution");
    VarId fm = mask_feature_rows(g, f_rows, mask);
    VarId keys = f_rows;
    if (stride > 1) {
        std::vector<int> idx;
        for (int y = 0; y < mask.height; y += stride)
            for (int x = 0; x < mask.width; x += stride) idx.push_back(y * mask.width + x);
        keys = g.gather_rows(f_rows, std::move(idx));
    }
    VarId scores = g.scale(g.matmul_nt(fm, keys), 1.0 / std::sqrt(double(c)));
    VarId attn = g.softmax_rows(scores);
    return g.matmul(attn, keys);
}

}  // namespace dear
