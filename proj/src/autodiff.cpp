#define EIGEN_DONT_PARALLELIZE
#include "dear/autodiff.hpp"

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <cstring>
#include <memory>

namespace dear::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;

struct ConvGeom {
    int in_h, in_w, out_h, out_w, k, stride, pad_y, pad_x;
};

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// "same"-style geometry: out = ceil(in/stride), asymmetric padding when the
// total is odd (extra pixel at the bottom/right).
ConvGeom conv_geom(int in_h, int in_w, int k, int stride) {
    ConvGeom geom{};
    geom.in_h = in_h;
    geom.in_w = in_w;
    geom.k = k;
    geom.stride = stride;
    geom.out_h = ceil_div(in_h, stride);
    geom.out_w = ceil_div(in_w, stride);
    int tot_y = std::max(0, (geom.out_h - 1) * stride + k - in_h);
    int tot_x = std::max(0, (geom.out_w - 1) * stride + k - in_w);
    geom.pad_y = tot_y / 2;
    geom.pad_x = tot_x / 2;
    return geom;
}

// src: [C][H][W] -> col: [outH*outW][C*k*k]
Tensor im2col(const Tensor& src, const ConvGeom& g) {
    const int C = src.dim(0);
    const int kk = g.k * g.k;
    Tensor col({g.out_h * g.out_w, C * kk});
    const double* x = src.data.data();
    double* out = col.data.data();
    const int64_t plane = int64_t(g.in_h) * g.in_w;
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            double* row = out + (int64_t(oy) * g.out_w + ox) * C * kk;
            for (int c = 0; c < C; ++c) {
                const double* xp = x + c * plane;
                for (int ky = 0; ky < g.k; ++ky) {
                    const int iy = oy * g.stride - g.pad_y + ky;
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int ix = ox * g.stride - g.pad_x + kx;
                        double v = 0.0;
                        if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w)
                            v = xp[int64_t(iy) * g.in_w + ix];
                        row[(c * g.k + ky) * g.k + kx] = v;
                    }
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: accumulates col rows back into dst [C][H][W].
void col2im_acc(const Tensor& col, const ConvGeom& g, Tensor& dst) {
    const int C = dst.dim(0);
    const int kk = g.k * g.k;
    double* x = dst.data.data();
    const double* in = col.data.data();
    const int64_t plane = int64_t(g.in_h) * g.in_w;
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            const double* row = in + (int64_t(oy) * g.out_w + ox) * C * kk;
            for (int c = 0; c < C; ++c) {
                double* xp = x + c * plane;
                for (int ky = 0; ky < g.k; ++ky) {
                    const int iy = oy * g.stride - g.pad_y + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int ix = ox * g.stride - g.pad_x + kx;
                        if (ix < 0 || ix >= g.in_w) continue;
                        xp[int64_t(iy) * g.in_w + ix] += row[(c * g.k + ky) * g.k + kx];
                    }
                }
            }
        }
    }
}

// [C][H][W] -> [H*W][C]
Tensor planes_to_rows(const Tensor& x) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor rows({H * W, C});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H * W; ++i)
            rows.data[size_t(i) * C + c] = x.data[size_t(c) * H * W + i];
    return rows;
}

void rows_to_planes_acc(const Tensor& rows, int C, int H, int W, Tensor& dst) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H * W; ++i)
            dst.data[size_t(c) * H * W + i] += rows.data[size_t(i) * C + c];
}

}  // namespace

VarId Graph::push(Tensor value, bool rg, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.rg = rg;
    if (rg) n.grad = Tensor(n.value.shape);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return VarId(nodes_.size() - 1);
}

VarId Graph::leaf(Tensor value) { return push(std::move(value), false, nullptr); }

VarId Graph::param(const Tensor* value) {
    Node n;
    n.external = value;
    n.rg = true;
    n.grad = Tensor(value->shape);
    nodes_.push_back(std::move(n));
    return VarId(nodes_.size() - 1);
}

VarId Graph::input(Tensor value) { return push(std::move(value), true, nullptr); }

const Tensor& Graph::val(VarId id) const { return v(id); }

const Tensor& Graph::grad_of(VarId id) const { return nodes_[size_t(id)].grad; }

bool Graph::requires_grad(VarId id) const { return nodes_[size_t(id)].rg; }

void Graph::backward(VarId root) {
    Node& r = nodes_[size_t(root)];
    assert(r.rg && v(root).numel() == 1);
    r.grad.fill(0.0);
    r.grad.data[0] = 1.0;
    for (int i = root; i >= 0; --i) {
        Node& n = nodes_[size_t(i)];
        if (n.rg && n.back) n.back();
    }
}

// ---------------- elementwise ----------------

VarId Graph::add(VarId a, VarId b) {
    const Tensor& A = v(a);
    const Tensor& B = v(b);
    assert(A.same_shape(B));
    Tensor out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] += B.data[size_t(i)];
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, b, id]() {
            const Tensor& go = g(id);
            if (requires_grad(a)) {
                Tensor& ga = g(a);
                for (int64_t i = 0; i < go.numel(); ++i) ga.data[size_t(i)] += go.data[size_t(i)];
            }
            if (requires_grad(b)) {
                Tensor& gb = g(b);
                for (int64_t i = 0; i < go.numel(); ++i) gb.data[size_t(i)] += go.data[size_t(i)];
            }
        };
    }
    return id;
}

VarId Graph::sub(VarId a, VarId b) { return add_scaled(a, b, -1.0); }

VarId Graph::add_scaled(VarId a, VarId b, double s) {
    const Tensor& A = v(a);
    const Tensor& B = v(b);
    assert(A.same_shape(B));
    Tensor out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] += s * B.data[size_t(i)];
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, b, s, id]() {
            const Tensor& go = g(id);
            if (requires_grad(a)) {
                Tensor& ga = g(a);
                for (int64_t i = 0; i < go.numel(); ++i) ga.data[size_t(i)] += go.data[size_t(i)];
            }
            if (requires_grad(b)) {
                Tensor& gb = g(b);
                for (int64_t i = 0; i < go.numel(); ++i)
                    gb.data[size_t(i)] += s * go.data[size_t(i)];
            }
        };
    }
    return id;
}

VarId Graph::mul(VarId a, VarId b) {
    const Tensor& A = v(a);
    const Tensor& B = v(b);
    assert(A.same_shape(B));
    Tensor out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] *= B.data[size_t(i)];
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, b, id]() {
            const Tensor& go = g(id);
            const Tensor& A2 = v(a);
            const Tensor& B2 = v(b);
            if (requires_grad(a)) {
                Tensor& ga = g(a);
                for (int64_t i = 0; i < go.numel(); ++i)
                    ga.data[size_t(i)] += go.data[size_t(i)] * B2.data[size_t(i)];
            }
            if (requires_grad(b)) {
                Tensor& gb = g(b);
                for (int64_t i = 0; i < go.numel(); ++i)
                    gb.data[size_t(i)] += go.data[size_t(i)] * A2.data[size_t(i)];
            }
        };
    }
    return id;
}

VarId Graph::scale(VarId a, double s) {
    Tensor out = v(a);
    for (auto& x : out.data) x *= s;
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, s, id]() {
            const Tensor& go = g(id);
            Tensor& ga = g(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga.data[size_t(i)] += s * go.data[size_t(i)];
        };
    }
    return id;
}

VarId Graph::one_minus(VarId a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = 1.0 - x;
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, id]() {
            const Tensor& go = g(id);
            Tensor& ga = g(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga.data[size_t(i)] -= go.data[size_t(i)];
        };
    }
    return id;
}

VarId Graph::relu(VarId a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, id]() {
            const Tensor& go = g(id);
            const Tensor& A = v(a);
            Tensor& ga = g(a);
            for (int64_t i = 0; i < go.numel(); ++i)
                if (A.data[size_t(i)] > 0.0) ga.data[size_t(i)] += go.data[size_t(i)];
        };
    }
    return id;
}

VarId Graph::sigmoid(VarId a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, id]() {
            const Tensor& go = g(id);
            const Tensor& Y = v(id);
            Tensor& ga = g(a);
            for (int64_t i = 0; i < go.numel(); ++i) {
                double y = Y.data[size_t(i)];
                ga.data[size_t(i)] += go.data[size_t(i)] * y * (1.0 - y);
            }
        };
    }
    return id;
}

// ---------------- convolution ----------------

VarId Graph::conv2d(VarId x, VarId w, VarId b, int stride) {
    const Tensor& X = v(x);
    const Tensor& W = v(w);
    const Tensor& B = v(b);
    const int cin = X.dim(0), H = X.dim(1), Wd = X.dim(2);
    const int cout = W.dim(0), k = W.dim(2);
    assert(W.dim(1) == cin && W.dim(3) == k && B.dim(0) == cout);
    ConvGeom geom = conv_geom(H, Wd, k, stride);
    const int kk = k * k;
    const int rows = geom.out_h * geom.out_w;

    auto col = std::make_shared<Tensor>(im2col(X, geom));
    // wmat: [cin*k*k][cout]
    Tensor wmat({cin * kk, cout});
    for (int oc = 0; oc < cout; ++oc)
        for (int j = 0; j < cin * kk; ++j)
            wmat.data[size_t(j) * cout + oc] = W.data[size_t(oc) * cin * kk + j];

    Tensor yrows({rows, cout});
    {
        CMapM mc(col->data.data(), rows, cin * kk);
        CMapM mw(wmat.data.data(), cin * kk, cout);
        MapM my(yrows.data.data(), rows, cout);
        my.noalias() = mc * mw;
    }
    Tensor out({cout, geom.out_h, geom.out_w});
    for (int oc = 0; oc < cout; ++oc) {
        const double bias = B.data[size_t(oc)];
        for (int i = 0; i < rows; ++i)
            out.data[size_t(oc) * rows + i] = yrows.data[size_t(i) * cout + oc] + bias;
    }

    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, w, b, id, geom, col, wmat, cin, cout, k, rows]() {
            const int kk2 = k * k;
            const Tensor& go = g(id);
            Tensor dyrows({rows, cout});
            for (int oc = 0; oc < cout; ++oc)
                for (int i = 0; i < rows; ++i)
                    dyrows.data[size_t(i) * cout + oc] = go.data[size_t(oc) * rows + i];
            if (requires_grad(b)) {
                Tensor& gb = g(b);
                for (int oc = 0; oc < cout; ++oc) {
                    double s = 0.0;
                    for (int i = 0; i < rows; ++i) s += dyrows.data[size_t(i) * cout + oc];
                    gb.data[size_t(oc)] += s;
                }
            }
            if (requires_grad(w)) {
                Tensor dwmat({cin * kk2, cout});
                CMapM mc(col->data.data(), rows, cin * kk2);
                CMapM mdy(dyrows.data.data(), rows, cout);
                MapM mdw(dwmat.data.data(), cin * kk2, cout);
                mdw.noalias() = mc.transpose() * mdy;
                Tensor& gw = g(w);
                for (int oc = 0; oc < cout; ++oc)
                    for (int j = 0; j < cin * kk2; ++j)
                        gw.data[size_t(oc) * cin * kk2 + j] += dwmat.data[size_t(j) * cout + oc];
            }
            if (requires_grad(x)) {
                Tensor dcol({rows, cin * kk2});
                CMapM mdy(dyrows.data.data(), rows, cout);
                CMapM mw(wmat.data.data(), cin * kk2, cout);
                MapM mdc(dcol.data.data(), rows, cin * kk2);
                mdc.noalias() = mdy * mw.transpose();
                col2im_acc(dcol, geom, g(x));
            }
        };
    }
    return id;
}

VarId Graph::conv_transpose2d(VarId x, VarId w, VarId b, int stride, int out_h, int out_w) {
    const Tensor& X = v(x);
    const Tensor& W = v(w);
    const Tensor& B = v(b);
    const int cin = X.dim(0), ih = X.dim(1), iw = X.dim(2);
    const int cout = W.dim(1), k = W.dim(2);
    assert(W.dim(0) == cin && W.dim(3) == k && B.dim(0) == cout);
    ConvGeom geom = conv_geom(out_h, out_w, k, stride);
    assert(geom.out_h == ih && geom.out_w == iw);
    const int kk = k * k;
    const int rows = ih * iw;

    auto xrows = std::make_shared<Tensor>(planes_to_rows(X));
    // wmat2: [cin][cout*k*k]
    Tensor wmat2({cin, cout * kk});
    std::memcpy(wmat2.data.data(), W.data.data(), sizeof(double) * W.data.size());

    Tensor coly({rows, cout * kk});
    {
        CMapM mx(xrows->data.data(), rows, cin);
        CMapM mw(wmat2.data.data(), cin, cout * kk);
        MapM mc(coly.data.data(), rows, cout * kk);
        mc.noalias() = mx * mw;
    }
    Tensor out({cout, out_h, out_w});
    col2im_acc(coly, geom, out);
    for (int oc = 0; oc < cout; ++oc) {
        const double bias = B.data[size_t(oc)];
        double* p = out.data.data() + size_t(oc) * out_h * out_w;
        for (int i = 0; i < out_h * out_w; ++i) p[i] += bias;
    }

    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, w, b, id, geom, xrows, wmat2, cin, cout, k, rows,
                                   out_h, out_w]() {
            const int kk2 = k * k;
            const Tensor& go = g(id);
            Tensor dcoly = im2col(go, geom);  // [rows][cout*k*k]
            if (requires_grad(b)) {
                Tensor& gb = g(b);
                for (int oc = 0; oc < cout; ++oc) {
                    double s = 0.0;
                    const double* p = go.data.data() + size_t(oc) * out_h * out_w;
                    for (int i = 0; i < out_h * out_w; ++i) s += p[i];
                    gb.data[size_t(oc)] += s;
                }
            }
            if (requires_grad(w)) {
                Tensor dwmat({cin, cout * kk2});
                CMapM mx(xrows->data.data(), rows, cin);
                CMapM mdc(dcoly.data.data(), rows, cout * kk2);
                MapM mdw(dwmat.data.data(), cin, cout * kk2);
                mdw.noalias() = mx.transpose() * mdc;
                Tensor& gw = g(w);
                for (int64_t i = 0; i < gw.numel(); ++i)
                    gw.data[size_t(i)] += dwmat.data[size_t(i)];
            }
            if (requires_grad(x)) {
                Tensor dxrows({rows, cin});
                CMapM mdc(dcoly.data.data(), rows, cout * kk2);
                CMapM mw(wmat2.data.data(), cin, cout * kk2);
                MapM mdx(dxrows.data.data(), rows, cin);
                mdx.noalias() = mdc * mw.transpose();
                const Tensor& X2 = v(x);
                rows_to_planes_acc(dxrows, cin, X2.dim(1), X2.dim(2), g(x));
            }
        };
    }
    return id;
}

// ---------------- softmax ----------------

VarId Graph::softmax_channel_blocks(VarId x, int block) {
    const Tensor& X = v(x);
    const int cb = X.dim(0), H = X.dim(1), Wd = X.dim(2);
    assert(cb % block == 0);
    const int C = cb / block;
    const int64_t plane = int64_t(H) * Wd;
    Tensor out(X.shape);
    for (int c = 0; c < C; ++c) {
        for (int64_t i = 0; i < plane; ++i) {
            double m = -1e300;
            for (int t = 0; t < block; ++t)
                m = std::max(m, X.data[size_t(c * block + t) * plane + i]);
            double s = 0.0;
            for (int t = 0; t < block; ++t) {
                double e = std::exp(X.data[size_t(c * block + t) * plane + i] - m);
                out.data[size_t(c * block + t) * plane + i] = e;
                s += e;
            }
            const double inv = 1.0 / s;
            for (int t = 0; t < block; ++t)
                out.data[size_t(c * block + t) * plane + i] *= inv;
        }
    }
    bool rg = requires_grad(x);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, id, block, C, plane]() {
            const Tensor& go = g(id);
            const Tensor& Y = v(id);
            Tensor& gx = g(x);
            for (int c = 0; c < C; ++c) {
                for (int64_t i = 0; i < plane; ++i) {
                    double dot = 0.0;
                    for (int t = 0; t < block; ++t) {
                        size_t ix = size_t(c * block + t) * plane + size_t(i);
                        dot += go.data[ix] * Y.data[ix];
                    }
                    for (int t = 0; t < block; ++t) {
                        size_t ix = size_t(c * block + t) * plane + size_t(i);
                        gx.data[ix] += Y.data[ix] * (go.data[ix] - dot);
                    }
                }
            }
        };
    }
    return id;
}

VarId Graph::softmax_rows(VarId x) {
    const Tensor& X = v(x);
    const int N = X.dim(0), M = X.dim(1);
    Tensor out(X.shape);
    using EArr = Eigen::Array<double, Eigen::Dynamic, 1>;
    for (int i = 0; i < N; ++i) {
        const double* xi = X.data.data() + size_t(i) * M;
        double* yi = out.data.data() + size_t(i) * M;
        // reductions stay scalar with a fixed order: Eigen's vectorized
        // redux peels to an address-dependent alignment boundary, which
        // perturbs low bits across runs
        double mx = xi[0];
        for (int j = 1; j < M; ++j) mx = std::max(mx, xi[j]);
        Eigen::Map<const EArr> vx(xi, M);
        Eigen::Map<EArr> vy(yi, M);
        vy = (vx - mx).exp();  // elementwise, order-free
        double s = 0.0;
        for (int j = 0; j < M; ++j) s += yi[j];
        const double inv = 1.0 / s;
        for (int j = 0; j < M; ++j) yi[j] *= inv;
    }
    bool rg = requires_grad(x);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, id, N, M]() {
            const Tensor& go = g(id);
            const Tensor& Y = v(id);
            Tensor& gx = g(x);
            for (int i = 0; i < N; ++i) {
                const double* yi = Y.data.data() + size_t(i) * M;
                const double* gi = go.data.data() + size_t(i) * M;
                double* oi = gx.data.data() + size_t(i) * M;
                double dot = 0.0;
                for (int j = 0; j < M; ++j) dot += yi[j] * gi[j];
                for (int j = 0; j < M; ++j) oi[j] += yi[j] * (gi[j] - dot);
            }
        };
    }
    return id;
}

// ---------------- matrix ----------------

VarId Graph::matmul(VarId a, VarId b) {
    const Tensor& A = v(a);
    const Tensor& B = v(b);
    const int N = A.dim(0), K = A.dim(1), M = B.dim(1);
    assert(B.dim(0) == K);
    Tensor out({N, M});
    {
        CMapM ma(A.data.data(), N, K);
        CMapM mb(B.data.data(), K, M);
        MapM mo(out.data.data(), N, M);
        mo.noalias() = ma * mb;
    }
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, b, id, N, K, M]() {
            const Tensor& go = g(id);
            CMapM mg(go.data.data(), N, M);
            if (requires_grad(a)) {
                const Tensor& B2 = v(b);
                CMapM mb(B2.data.data(), K, M);
                MapM mga(g(a).data.data(), N, K);
                mga.noalias() += mg * mb.transpose();
            }
            if (requires_grad(b)) {
                const Tensor& A2 = v(a);
                CMapM ma(A2.data.data(), N, K);
                MapM mgb(g(b).data.data(), K, M);
                mgb.noalias() += ma.transpose() * mg;
            }
        };
    }
    return id;
}

VarId Graph::matmul_nt(VarId a, VarId b) {
    const Tensor& A = v(a);
    const Tensor& B = v(b);
    const int N = A.dim(0), K = A.dim(1), M = B.dim(0);
    assert(B.dim(1) == K);
    Tensor out({N, M});
    {
        CMapM ma(A.data.data(), N, K);
        CMapM mb(B.data.data(), M, K);
        MapM mo(out.data.data(), N, M);
        mo.noalias() = ma * mb.transpose();
    }
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, b, id, N, K, M]() {
            const Tensor& go = g(id);
            CMapM mg(go.data.data(), N, M);
            if (requires_grad(a)) {
                const Tensor& B2 = v(b);
                CMapM mb(B2.data.data(), M, K);
                MapM mga(g(a).data.data(), N, K);
                mga.noalias() += mg * mb;
            }
            if (requires_grad(b)) {
                const Tensor& A2 = v(a);
                CMapM ma(A2.data.data(), N, K);
                MapM mgb(g(b).data.data(), M, K);
                mgb.noalias() += mg.transpose() * ma;
            }
        };
    }
    return id;
}

VarId Graph::linear(VarId x, VarId w, VarId b) {
    const Tensor& X = v(x);
    const Tensor& W = v(w);
    const Tensor& B = v(b);
    const int N = X.dim(0), D = X.dim(1), H = W.dim(1);
    assert(W.dim(0) == D && B.dim(0) == H);
    Tensor out({N, H});
    {
        CMapM mx(X.data.data(), N, D);
        CMapM mw(W.data.data(), D, H);
        MapM mo(out.data.data(), N, H);
        mo.noalias() = mx * mw;
    }
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < H; ++j) out.data[size_t(i) * H + j] += B.data[size_t(j)];
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, w, b, id, N, D, H]() {
            const Tensor& go = g(id);
            CMapM mg(go.data.data(), N, H);
            if (requires_grad(b)) {
                Tensor& gb = g(b);
                for (int j = 0; j < H; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < N; ++i) s += go.data[size_t(i) * H + j];
                    gb.data[size_t(j)] += s;
                }
            }
            if (requires_grad(w)) {
                const Tensor& X2 = v(x);
                CMapM mx(X2.data.data(), N, D);
                MapM mgw(g(w).data.data(), D, H);
                mgw.noalias() += mx.transpose() * mg;
            }
            if (requires_grad(x)) {
                const Tensor& W2 = v(w);
                CMapM mw(W2.data.data(), D, H);
                MapM mgx(g(x).data.data(), N, D);
                mgx.noalias() += mg * mw.transpose();
            }
        };
    }
    return id;
}

// ---------------- layout / gather ----------------

VarId Graph::chw_to_rows(VarId x) {
    const Tensor& X = v(x);
    const int C = X.dim(0), H = X.dim(1), Wd = X.dim(2);
    Tensor out = planes_to_rows(X);
    bool rg = requires_grad(x);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, id, C, H, Wd]() {
            rows_to_planes_acc(g(id), C, H, Wd, g(x));
        };
    }
    return id;
}

VarId Graph::rows_to_chw(VarId x, int h, int w) {
    const Tensor& X = v(x);
    const int C = X.dim(1);
    assert(X.dim(0) == h * w);
    Tensor out({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < h * w; ++i)
            out.data[size_t(c) * h * w + i] = X.data[size_t(i) * C + c];
    bool rg = requires_grad(x);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, x, id, C, h, w]() {
            const Tensor& go = g(id);
            Tensor& gx = g(x);
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < h * w; ++i)
                    gx.data[size_t(i) * C + c] += go.data[size_t(c) * h * w + i];
        };
    }
    return id;
}

VarId Graph::gather_rows(VarId x, std::vector<int> idx) {
    const Tensor& X = v(x);
    const int C = X.dim(1);
    const int n = int(idx.size());
    Tensor out({n, C});
    for (int i = 0; i < n; ++i)
        std::memcpy(out.data.data() + size_t(i) * C, X.data.data() + size_t(idx[size_t(i)]) * C,
                    sizeof(double) * size_t(C));
    bool rg = requires_grad(x);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto ix = std::make_shared<std::vector<int>>(std::move(idx));
        nodes_[size_t(id)].back = [this, x, id, ix, n, C]() {
            const Tensor& go = g(id);
            Tensor& gx = g(x);
            for (int i = 0; i < n; ++i) {
                double* dst = gx.data.data() + size_t((*ix)[size_t(i)]) * C;
                const double* src = go.data.data() + size_t(i) * C;
                for (int c = 0; c < C; ++c) dst[c] += src[c];
            }
        };
    }
    return id;
}

VarId Graph::concat_cols(const std::vector<VarId>& parts) {
    assert(!parts.empty());
    const int N = v(parts[0]).dim(0);
    int total = 0;
    bool rg = false;
    for (VarId p : parts) {
        assert(v(p).dim(0) == N);
        total += v(p).dim(1);
        rg = rg || requires_grad(p);
    }
    Tensor out({N, total});
    int off = 0;
    for (VarId p : parts) {
        const Tensor& P = v(p);
        const int c = P.dim(1);
        for (int i = 0; i < N; ++i)
            std::memcpy(out.data.data() + size_t(i) * total + off,
                        P.data.data() + size_t(i) * c, sizeof(double) * size_t(c));
        off += c;
    }
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto ps = std::make_shared<std::vector<VarId>>(parts);
        nodes_[size_t(id)].back = [this, ps, id, N, total]() {
            const Tensor& go = g(id);
            int off2 = 0;
            for (VarId p : *ps) {
                const int c = v(p).dim(1);
                if (requires_grad(p)) {
                    Tensor& gp = g(p);
                    for (int i = 0; i < N; ++i) {
                        const double* src = go.data.data() + size_t(i) * total + off2;
                        double* dst = gp.data.data() + size_t(i) * c;
                        for (int j = 0; j < c; ++j) dst[j] += src[j];
                    }
                }
                off2 += c;
            }
        };
    }
    return id;
}

VarId Graph::scale_rows(VarId x, Tensor row_weights) {
    const Tensor& X = v(x);
    const int N = X.dim(0), C = X.dim(1);
    assert(row_weights.numel() == N);
    Tensor out = X;
    for (int i = 0; i < N; ++i) {
        const double wgt = row_weights.data[size_t(i)];
        double* p = out.data.data() + size_t(i) * C;
        for (int c = 0; c < C; ++c) p[c] *= wgt;
    }
    bool rg = requires_grad(x);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto rw = std::make_shared<Tensor>(std::move(row_weights));
        nodes_[size_t(id)].back = [this, x, id, rw, N, C]() {
            const Tensor& go = g(id);
            Tensor& gx = g(x);
            for (int i = 0; i < N; ++i) {
                const double wgt = rw->data[size_t(i)];
                const double* src = go.data.data() + size_t(i) * C;
                double* dst = gx.data.data() + size_t(i) * C;
                for (int c = 0; c < C; ++c) dst[c] += wgt * src[c];
            }
        };
    }
    return id;
}

// ---------------- task-specific ----------------

VarId Graph::elementwise_filter(VarId z, VarId k, int ksize) {
    if (ksize % 2 == 0) throw invalid_argument_error("elementwise_filter: kernel size must be odd");
    const Tensor& Z = v(z);
    const Tensor& K = v(k);
    const int C = Z.dim(0), H = Z.dim(1), Wd = Z.dim(2);
    const int kk = ksize * ksize, r = ksize / 2;
    assert(K.dim(0) == C * kk && K.dim(1) == H && K.dim(2) == Wd);
    const int64_t plane = int64_t(H) * Wd;
    Tensor out = Z;  // residual term
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x2 = 0; x2 < Wd; ++x2) {
                double acc = 0.0;
                for (int t = 0; t < kk; ++t) {
                    const int dy = t / ksize - r, dx = t % ksize - r;
                    const int iy = y + dy, ix = x2 + dx;
                    if (iy < 0 || iy >= H || ix < 0 || ix >= Wd) continue;
                    acc += K.data[size_t(c * kk + t) * plane + size_t(y) * Wd + x2] *
                           Z.data[size_t(c) * plane + size_t(iy) * Wd + ix];
                }
                out.data[size_t(c) * plane + size_t(y) * Wd + x2] += acc;
            }
        }
    }
    bool rg = requires_grad(z) || requires_grad(k);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, z, k, id, C, H, Wd, ksize]() {
            const int kk2 = ksize * ksize, r2 = ksize / 2;
            const int64_t plane = int64_t(H) * Wd;
            const Tensor& go = g(id);
            const Tensor& Z2 = v(z);
            const Tensor& K2 = v(k);
            if (requires_grad(z)) {
                Tensor& gz = g(z);
                for (int64_t i = 0; i < go.numel(); ++i) gz.data[size_t(i)] += go.data[size_t(i)];
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < H; ++y)
                        for (int x2 = 0; x2 < Wd; ++x2) {
                            const double gv = go.data[size_t(c) * plane + size_t(y) * Wd + x2];
                            if (gv == 0.0) continue;
                            for (int t = 0; t < kk2; ++t) {
                                const int dy = t / ksize - r2, dx = t % ksize - r2;
                                const int iy = y + dy, ix = x2 + dx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= Wd) continue;
                                gz.data[size_t(c) * plane + size_t(iy) * Wd + ix] +=
                                    gv * K2.data[size_t(c * kk2 + t) * plane + size_t(y) * Wd + x2];
                            }
                        }
            }
            if (requires_grad(k)) {
                Tensor& gk = g(k);
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < H; ++y)
                        for (int x2 = 0; x2 < Wd; ++x2) {
                            const double gv = go.data[size_t(c) * plane + size_t(y) * Wd + x2];
                            if (gv == 0.0) continue;
                            for (int t = 0; t < kk2; ++t) {
                                const int dy = t / ksize - r2, dx = t % ksize - r2;
                                const int iy = y + dy, ix = x2 + dx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= Wd) continue;
                                gk.data[size_t(c * kk2 + t) * plane + size_t(y) * Wd + x2] +=
                                    gv * Z2.data[size_t(c) * plane + size_t(iy) * Wd + ix];
                            }
                        }
            }
        };
    }
    return id;
}

VarId Graph::kernel_reconstruct(VarId k, Tensor raster, int ksize) {
    if (ksize % 2 == 0) throw invalid_argument_error("kernel_reconstruct: kernel size must be odd");
    const Tensor& K = v(k);
    const int C = raster.dim(0), H = raster.dim(1), Wd = raster.dim(2);
    const int kk = ksize * ksize, r = ksize / 2;
    assert(K.dim(0) == kk && K.dim(1) == H && K.dim(2) == Wd);
    const int64_t plane = int64_t(H) * Wd;
    Tensor out({C, H, Wd});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x2 = 0; x2 < Wd; ++x2) {
                double acc = 0.0;
                for (int t = 0; t < kk; ++t) {
                    const int dy = t / ksize - r, dx = t % ksize - r;
                    const int iy = y + dy, ix = x2 + dx;
                    if (iy < 0 || iy >= H || ix < 0 || ix >= Wd) continue;
                    acc += K.data[size_t(t) * plane + size_t(y) * Wd + x2] *
                           raster.data[size_t(c) * plane + size_t(iy) * Wd + ix];
                }
                out.data[size_t(c) * plane + size_t(y) * Wd + x2] = acc;
            }
    bool rg = requires_grad(k);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto img = std::make_shared<Tensor>(std::move(raster));
        nodes_[size_t(id)].back = [this, k, id, img, C, H, Wd, ksize]() {
            const int kk2 = ksize * ksize, r2 = ksize / 2;
            const int64_t plane = int64_t(H) * Wd;
            const Tensor& go = g(id);
            Tensor& gk = g(k);
            for (int y = 0; y < H; ++y)
                for (int x2 = 0; x2 < Wd; ++x2)
                    for (int t = 0; t < kk2; ++t) {
                        const int dy = t / ksize - r2, dx = t % ksize - r2;
                        const int iy = y + dy, ix = x2 + dx;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= Wd) continue;
                        double acc = 0.0;
                        for (int c = 0; c < C; ++c)
                            acc += go.data[size_t(c) * plane + size_t(y) * Wd + x2] *
                                   img->data[size_t(c) * plane + size_t(iy) * Wd + ix];
                        gk.data[size_t(t) * plane + size_t(y) * Wd + x2] += acc;
                    }
        };
    }
    return id;
}

VarId Graph::weighted_group_sum(VarId colors, Tensor weights, int group) {
    const Tensor& X = v(colors);
    const int NG = X.dim(0), C = X.dim(1);
    assert(NG % group == 0 && weights.numel() == NG);
    const int N = NG / group;
    Tensor out({N, C});
    for (int q = 0; q < N; ++q)
        for (int j = 0; j < group; ++j) {
            const double wgt = weights.data[size_t(q * group + j)];
            const double* src = X.data.data() + size_t(q * group + j) * C;
            double* dst = out.data.data() + size_t(q) * C;
            for (int c = 0; c < C; ++c) dst[c] += wgt * src[c];
        }
    bool rg = requires_grad(colors);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto wts = std::make_shared<Tensor>(std::move(weights));
        nodes_[size_t(id)].back = [this, colors, id, wts, N, C, group]() {
            const Tensor& go = g(id);
            Tensor& gx = g(colors);
            for (int q = 0; q < N; ++q)
                for (int j = 0; j < group; ++j) {
                    const double wgt = wts->data[size_t(q * group + j)];
                    const double* src = go.data.data() + size_t(q) * C;
                    double* dst = gx.data.data() + size_t(q * group + j) * C;
                    for (int c = 0; c < C; ++c) dst[c] += wgt * src[c];
                }
        };
    }
    return id;
}

// ---------------- reductions ----------------

VarId Graph::mean_abs_diff(VarId a, Tensor target) {
    const Tensor& A = v(a);
    assert(A.same_shape(target));
    const int64_t n = A.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::abs(A.data[size_t(i)] - target.data[size_t(i)]);
    Tensor out({1});
    out.data[0] = s / double(n);
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto tgt = std::make_shared<Tensor>(std::move(target));
        nodes_[size_t(id)].back = [this, a, id, tgt, n]() {
            const double g0 = g(id).data[0] / double(n);
            const Tensor& A2 = v(a);
            Tensor& ga = g(a);
            for (int64_t i = 0; i < n; ++i) {
                const double d = A2.data[size_t(i)] - tgt->data[size_t(i)];
                if (d > 0.0)
                    ga.data[size_t(i)] += g0;
                else if (d < 0.0)
                    ga.data[size_t(i)] -= g0;
            }
        };
    }
    return id;
}

VarId Graph::sum(VarId a) {
    const Tensor& A = v(a);
    Tensor out({1});
    double s = 0.0;
    for (double x : A.data) s += x;
    out.data[0] = s;
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[size_t(id)].back = [this, a, id]() {
            const double g0 = g(id).data[0];
            Tensor& ga = g(a);
            for (auto& x : ga.data) x += g0;
        };
    }
    return id;
}

VarId Graph::dot_const(VarId a, Tensor probe) {
    const Tensor& A = v(a);
    assert(A.numel() == probe.numel());
    Tensor out({1});
    double s = 0.0;
    for (int64_t i = 0; i < A.numel(); ++i) s += A.data[size_t(i)] * probe.data[size_t(i)];
    out.data[0] = s;
    bool rg = requires_grad(a);
    VarId id = push(std::move(out), rg, nullptr);
    if (rg) {
        auto p = std::make_shared<Tensor>(std::move(probe));
        nodes_[size_t(id)].back = [this, a, id, p]() {
            const double g0 = g(id).data[0];
            Tensor& ga = g(a);
            for (int64_t i = 0; i < ga.numel(); ++i)
                ga.data[size_t(i)] += g0 * p->data[size_t(i)];
        };
    }
    return id;
}

// ---------------- finite differences ----------------

GradCheckResult gradient_check(
    const std::function<double(const std::vector<Tensor>&, std::vector<Tensor>* grads)>& eval,
    std::vector<Tensor> inputs, double h) {
    std::vector<Tensor> grads;
    eval(inputs, &grads);
    GradCheckResult res;
    for (size_t t = 0; t < inputs.size(); ++t) {
        for (int64_t i = 0; i < inputs[t].numel(); ++i) {
            const double keep = inputs[t].data[size_t(i)];
            inputs[t].data[size_t(i)] = keep + h;
            const double fp = eval(inputs, nullptr);
            inputs[t].data[size_t(i)] = keep - h;
            const double fm = eval(inputs, nullptr);
            inputs[t].data[size_t(i)] = keep;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = grads[t].data[size_t(i)];
            const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
            const double rel = std::abs(num - ana) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.analytic_at_max = ana;
                res.numeric_at_max = num;
            }
        }
    }
    return res;
}

}  // namespace dear::ad
