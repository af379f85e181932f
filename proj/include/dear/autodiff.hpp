#ifndef DEAR_AUTODIFF_HPP
#define DEAR_AUTODIFF_HPP

#include <functional>
#include <vector>

#include "dear/tensor.hpp"

namespace dear::ad {

using VarId = int;

// Reverse-mode tape. A graph is built per forward pass; `backward` walks the
// tape in reverse creation order. Every op accumulates gradients with a fixed
// iteration order, so results are bit-identical across runs and worker counts.
class Graph {
public:
    // Constant input; no gradient is tracked.
    VarId leaf(Tensor value);
    // Differentiable leaf whose value lives outside the graph (parameters).
    VarId param(const Tensor* value);
    // Differentiable leaf owned by the graph (used by gradient checks).
    VarId input(Tensor value);

    const Tensor& val(VarId id) const;
    const Tensor& grad_of(VarId id) const;
    bool requires_grad(VarId id) const;

    // Seeds d(root)=1 and propagates. `root` must be scalar (numel == 1).
    void backward(VarId root);

    // ---- elementwise ----
    VarId add(VarId a, VarId b);
    VarId sub(VarId a, VarId b);
    VarId mul(VarId a, VarId b);
    VarId scale(VarId a, double s);
    VarId add_scaled(VarId a, VarId b, double s);  // a + s*b
    VarId one_minus(VarId a);                      // 1 - a
    VarId relu(VarId a);
    VarId sigmoid(VarId a);

    // ---- convolution (ceil-mode "same" padding: out = ceil(in/stride)) ----
    // x: [Cin][H][W], w: [Cout][Cin][k][k], b: [Cout]
    VarId conv2d(VarId x, VarId w, VarId b, int stride);
    // Adjoint of conv2d. x: [Cin][inH][inW] with inH == ceil(outH/stride);
    // w: [Cin][Cout][k][k], b: [Cout]. Produces [Cout][outH][outW].
    VarId conv_transpose2d(VarId x, VarId w, VarId b, int stride, int out_h, int out_w);

    // ---- softmax ----
    // x: [C*block][H][W]; softmax over each contiguous channel block per position.
    VarId softmax_channel_blocks(VarId x, int block);
    // x: [N][M]; softmax per row (max-subtracted).
    VarId softmax_rows(VarId x);

    // ---- matrix ----
    VarId matmul(VarId a, VarId b);     // [N][K] x [K][M]
    VarId matmul_nt(VarId a, VarId b);  // [N][K] x [M][K]^T -> [N][M]
    VarId linear(VarId x, VarId w, VarId b);  // [N][D] x [D][H] + b[H]

    // ---- layout / gather ----
    VarId chw_to_rows(VarId x);                       // [C][H][W] -> [H*W][C]
    VarId rows_to_chw(VarId x, int h, int w);         // inverse
    VarId gather_rows(VarId x, std::vector<int> idx); // [R][C] -> [idx.size()][C]
    VarId concat_cols(const std::vector<VarId>& parts);
    VarId scale_rows(VarId x, Tensor row_weights);    // out[i][:] = x[i][:] * w[i]

    // ---- task-specific kernels ----
    // z: [C][H][W], k: [C*K*K][H][W]; out = z + sum_t k[c,t]*z[c, y+dy, x+dx]
    // (zero padded). Residual form: zero kernels give the identity.
    VarId elementwise_filter(VarId z, VarId k, int ksize);
    // k: [K*K][H][W] (variable), raster: [C][H][W] (constant input image).
    // out[c][y][x] = sum_t k[t][y][x] * raster[c][y+dy][x+dx], zero padded.
    VarId kernel_reconstruct(VarId k, Tensor raster, int ksize);
    // colors: [N*G][C], weights: [N*G]; out[q][c] = sum_g w[qG+g]*colors[qG+g][c]
    VarId weighted_group_sum(VarId colors, Tensor weights, int group);

    // ---- reductions ----
    VarId mean_abs_diff(VarId a, Tensor target);  // scalar
    VarId sum(VarId a);                           // scalar
    VarId dot_const(VarId a, Tensor probe);       // scalar projection <a, probe>

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;               // owned value (unused when external)
        const Tensor* external = nullptr;
        Tensor grad;
        bool rg = false;
        std::function<void()> back;
    };

    const Tensor& v(VarId id) const {
        const Node& n = nodes_[size_t(id)];
        return n.external ? *n.external : n.value;
    }
    Tensor& g(VarId id) { return nodes_[size_t(id)].grad; }
    VarId push(Tensor value, bool rg, std::function<void()> back);

    std::vector<Node> nodes_;
};

// Central finite-difference check helper shared by tests and selftest.
// Evaluates `loss(inputs)` where inputs are graph-owned differentiable
// leaves, compares analytic gradients to central differences.
struct GradCheckResult {
    double max_rel_err = 0.0;
    double analytic_at_max = 0.0;
    double numeric_at_max = 0.0;
};

GradCheckResult gradient_check(
    const std::function<double(const std::vector<Tensor>&, std::vector<Tensor>* grads)>& eval,
    std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace dear::ad

#endif  // DEAR_AUTODIFF_HPP
