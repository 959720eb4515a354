#pragma once

#include <cmath>
#include <string>

#include "setgen/core/common.hpp"
#include "setgen/core/rng.hpp"

namespace setgen {

// One trainable parameter: value plus persistent gradient accumulator.
// `decay` marks whether AdamW weight decay applies (off for biases, norms,
// embeddings of special tokens).
template <typename S>
struct Tensor {
    Mat<S> v;
    Mat<S> g;
    bool decay = true;

    Tensor() = default;
    Tensor(Eigen::Index r, Eigen::Index c, bool decay_ = true)
        : v(Mat<S>::Zero(r, c)), g(Mat<S>::Zero(r, c)), decay(decay_) {}

    Eigen::Index rows() const { return v.rows(); }
    Eigen::Index cols() const { return v.cols(); }
    void zero_grad() { g.setZero(); }
};

// Uniform(-a, a) with a = 1/sqrt(fan_in), the usual linear-layer default.
template <typename S>
void init_fan_in(Tensor<S>& t, Eigen::Index fan_in, Rng& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.v.rows(); ++i)
        for (Eigen::Index j = 0; j < t.v.cols(); ++j)
            t.v(i, j) = static_cast<S>((2.0 * rng.uniform() - 1.0) * a);
}

template <typename S>
void init_normal(Tensor<S>& t, double stddev, Rng& rng) {
    for (Eigen::Index i = 0; i < t.v.rows(); ++i)
        for (Eigen::Index j = 0; j < t.v.cols(); ++j)
            t.v(i, j) = static_cast<S>(rng.normal() * stddev);
}

template <typename S>
void init_constant(Tensor<S>& t, double c) {
    t.v.setConstant(static_cast<S>(c));
}

}  // namespace setgen
