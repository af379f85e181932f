#ifndef DEAR_TENSOR_HPP
#define DEAR_TENSOR_HPP

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "dear/common.hpp"

namespace dear::ad {

// Dense row-major double tensor. Shapes used in this project are at most
// rank 4; indexing helpers cover the common layouts ([C][H][W] planes and
// [rows][cols] matrices).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(size_t(count(shape)), 0.0) {}
    Tensor(std::vector<int> s, double fill)
        : shape(std::move(s)), data(size_t(count(shape)), fill) {}

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) { return Tensor(std::move(s), v); }

    int64_t numel() const { return int64_t(data.size()); }
    int rank() const { return int(shape.size()); }
    int dim(int i) const { return shape[size_t(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at2(int i, int j) { return data[size_t(i) * shape[1] + j]; }
    double at2(int i, int j) const { return data[size_t(i) * shape[1] + j]; }
    double& at3(int c, int y, int x) {
        return data[(size_t(c) * shape[1] + y) * shape[2] + x];
    }
    double at3(int c, int y, int x) const {
        return data[(size_t(c) * shape[1] + y) * shape[2] + x];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(std::vector<int> s) const {
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }
};

inline Tensor random_uniform(Rng& rng, std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_normal(Rng& rng, std::vector<int> shape, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.normal() * stddev;
    return t;
}

}  // namespace dear::ad

#endif  // DEAR_TENSOR_HPP
