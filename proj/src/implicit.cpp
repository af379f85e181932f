#include <cmath>

#include "dear/model.hpp"

namespace dear {

using ad::Graph;
using ad::Tensor;
using ad::VarId;

namespace {

struct LinRef {
    VarId w, b;
};

LinRef find(const ParamBank& bank, const BoundParams& p, const std::string& name) {
    const int wi = bank.index_of(name + ".w");
    const int bi = bank.index_of(name + ".b");
    if (wi < 0 || bi < 0) throw invalid_argument_error("missing parameter group: " + name);
    return {p.vars[size_t(wi)], p.vars[size_t(bi)]};
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

// For each continuous query, picks the 4 surrounding LR pixel centers
// (clamped at borders; duplicates allowed), the signed offsets scaled by the
// grid spacing, and the ensemble weights. Area rule: a neighbor's weight is
// proportional to the rectangle spanned by the query and the diagonally
// opposite neighbor, which makes queries at a pixel center one-hot.
QueryBatch build_queries(int lr_h, int lr_w, const std::vector<double>& q_coords, bool invdist) {
    const int n = int(q_coords.size() / 2);
    QueryBatch qb;
    qb.count = n;
    qb.q_coords = q_coords;
    qb.neighbor_idx.resize(size_t(n) * 4);
    qb.rel_offsets.resize(size_t(n) * 8);
    qb.weights.resize(size_t(n) * 4);

    const double dy = 2.0 / lr_h, dx = 2.0 / lr_w;
    for (int q = 0; q < n; ++q) {
        const double qy = q_coords[size_t(q) * 2];
        const double qx = q_coords[size_t(q) * 2 + 1];
        const double uy = (qy + 1.0) * 0.5 * lr_h - 0.5;
        const double ux = (qx + 1.0) * 0.5 * lr_w - 0.5;
        const int iy0 = int(std::floor(uy));
        const int ix0 = int(std::floor(ux));
        const double fy = uy - iy0, fx = ux - ix0;

        const int ys[2] = {clampi(iy0, 0, lr_h - 1), clampi(iy0 + 1, 0, lr_h - 1)};
        const int xs[2] = {clampi(ix0, 0, lr_w - 1), clampi(ix0 + 1, 0, lr_w - 1)};
        const double wy[2] = {1.0 - fy, fy};
        const double wx[2] = {1.0 - fx, fx};

        double wsum = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                const int j = a * 2 + b;
                qb.neighbor_idx[size_t(q) * 4 + size_t(j)] = ys[a] * lr_w + xs[b];
                const double py = pixel_center_coord(ys[a], lr_h);
                const double px = pixel_center_coord(xs[b], lr_w);
                qb.rel_offsets[size_t(q) * 8 + size_t(j) * 2] = (qy - py) / dy;
                qb.rel_offsets[size_t(q) * 8 + size_t(j) * 2 + 1] = (qx - px) / dx;
                double wgt;
                if (invdist) {
                    const double ddy = (qy - py) / dy, ddx = (qx - px) / dx;
                    wgt = 1.0 / (std::sqrt(ddy * ddy + ddx * ddx) + 1e-9);
                } else {
                    wgt = wy[a] * wx[b];
                }
                qb.weights[size_t(q) * 4 + size_t(j)] = wgt;
                wsum += wgt;
            }
        if (wsum <= 0.0) wsum = 1.0;
        for (int j = 0; j < 4; ++j) qb.weights[size_t(q) * 4 + size_t(j)] /= wsum;
    }
    return qb;
}

VarId Model::mlp(Graph& g, const BoundParams& p, VarId rows) const {
    LinRef l0 = find(bank_, p, "mlp.l0");
    LinRef l1 = find(bank_, p, "mlp.l1");
    LinRef l2 = find(bank_, p, "mlp.l2");
    LinRef l3 = find(bank_, p, "mlp.l3");
    VarId x = g.relu(g.linear(rows, l0.w, l0.b));
    x = g.relu(g.linear(x, l1.w, l1.b));
    x = g.relu(g.linear(x, l2.w, l2.b));
    return g.linear(x, l3.w, l3.b);
}

VarId Model::per_neighbor_colors(Graph& g, const BoundParams& p, const Maps& maps,
                                 const QueryBatch& qb) const {
    const int n4 = qb.count * 4;
    VarId fp = g.gather_rows(maps.f_rows, qb.neighbor_idx);
    VarId ep = g.gather_rows(maps.e_rows, qb.neighbor_idx);
    VarId wp = g.gather_rows(maps.w_rows, qb.neighbor_idx);
    Tensor chi({n4, 2});
    chi.data = qb.rel_offsets;
    VarId offs = g.leaf(std::move(chi));
    VarId rows = g.concat_cols({fp, ep, wp, offs});
    return mlp(g, p, rows);
}

VarId Model::predict_colors(Graph& g, const BoundParams& p, const Maps& maps,
                            const QueryBatch& qb) const {
    VarId per_neighbor = per_neighbor_colors(g, p, maps, qb);
    Tensor w({qb.count * 4});
    w.data = qb.weights;
    return g.weighted_group_sum(per_neighbor, std::move(w), 4);
}

}  // namespace dear
