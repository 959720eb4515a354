#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "setgen/core/tape.hpp"

namespace setgen::ad {

// Digamma via upward recurrence into the asymptotic region; used for the
// lgamma backward. Accurate to ~1e-13 for x > 0.
inline double digamma(double x) {
    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    acc += std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 -
                   inv2 * (1.0 / 120.0 -
                           inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return acc;
}

template <typename S>
Var<S> leaf(Tape<S>& t, const Mat<S>* v, Mat<S>* g) {
    return Var<S>(t, t.leaf(v, g));
}

template <typename S>
Var<S> constant(Tape<S>& t, Mat<S> v) {
    return Var<S>(t, t.constant(std::move(v)));
}

// C = A * B
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
    require(a.cols() == b.rows(), "matmul: inner dims mismatch");
    Tape<S>& t = *a.tape;
    const int ai = a.id, bi = b.id;
    const bool ng = a.needs_grad() || b.needs_grad();
    int id = t.make(a.val() * b.val(), ng, [ai, bi](Tape<S>& tp, int self) {
        const Mat<S>& g = tp.grad(self);
        tp.acc(ai, g * tp.val(bi).transpose());
        tp.acc(bi, tp.val(ai).transpose() * g);
    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> transpose(Var<S> a) {
    Tape<S>& t = *a.tape;
    const int ai = a.id;
    int id = t.make(a.val().transpose(), a.needs_grad(), [ai](Tape<S>& tp, int self) {
        tp.acc(ai, tp.grad(self).transpose());
    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    Tape<S>& t = *a.tape;
    const int ai = a.id, bi = b.id;
    int id = t.make(a.val() + b.val(), a.needs_grad() || b.needs_grad(),
                    [ai, bi](Tape<S>& tp, int self) {
                        tp.acc(ai, tp.grad(self));
                        tp.acc(bi, tp.grad(self));
                    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    Tape<S>& t = *a.tape;
    const int ai = a.id, bi = b.id;
    int id = t.make(a.val() - b.val(), a.needs_grad() || b.needs_grad(),
                    [ai, bi](Tape<S>& tp, int self) {
                        tp.acc(ai, tp.grad(self));
                        tp.acc(bi, -tp.grad(self));
                    });
    return Var<S>(t, id);
}

// k*A + b, elementwise with scalar constants.
template <typename S>
Var<S> cwise_affine(Var<S> a, double k, double b) {
    Tape<S>& t = *a.tape;
    const int ai = a.id;
    Mat<S> v = (a.val().array() * S(k) + S(b)).matrix();
    int id = t.make(std::move(v), a.needs_grad(), [ai, k](Tape<S>& tp, int self) {
        tp.acc(ai, tp.grad(self) * S(k));
    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> scale(Var<S> a, double k) {
    return cwise_affine(a, k, 0.0);
}

// Elementwise product.
template <typename S>
Var<S> cmul(Var<S> a, Var<S> b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: shape mismatch");
    Tape<S>& t = *a.tape;
    const int ai = a.id, bi = b.id;
    int id = t.make((a.val().array() * b.val().array()).matrix(),
                    a.needs_grad() || b.needs_grad(), [ai, bi](Tape<S>& tp, int self) {
                        const Mat<S>& g = tp.grad(self);
                        tp.acc(ai, (g.array() * tp.val(bi).array()).matrix());
                        tp.acc(bi, (g.array() * tp.val(ai).array()).matrix());
                    });
    return Var<S>(t, id);
}

// A + r broadcast over rows (r is 1 x C).
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> r) {
    require(r.rows() == 1 && r.cols() == a.cols(), "add_rowvec: bad row vector");
    Tape<S>& t = *a.tape;
    const int ai = a.id, ri = r.id;
    Mat<S> v = a.val();
    v.rowwise() += r.val().row(0);
    int id = t.make(std::move(v), a.needs_grad() || r.needs_grad(),
                    [ai, ri](Tape<S>& tp, int self) {
                        const Mat<S>& g = tp.grad(self);
                        tp.acc(ai, g);
                        tp.acc(ri, g.colwise().sum());
                    });
    return Var<S>(t, id);
}

// A .* r broadcast over rows (r is 1 x C).
template <typename S>
Var<S> cmul_rowvec(Var<S> a, Var<S> r) {
    require(r.rows() == 1 && r.cols() == a.cols(), "cmul_rowvec: bad row vector");
    Tape<S>& t = *a.tape;
    const int ai = a.id, ri = r.id;
    Mat<S> v = (a.val().array().rowwise() * r.val().row(0).array()).matrix();
    int id = t.make(std::move(v), a.needs_grad() || r.needs_grad(),
                    [ai, ri](Tape<S>& tp, int self) {
                        const Mat<S>& g = tp.grad(self);
                        tp.acc(ai, (g.array().rowwise() * tp.val(ri).row(0).array()).matrix());
                        tp.acc(ri, (g.array() * tp.val(ai).array()).colwise().sum().matrix());
                    });
    return Var<S>(t, id);
}

// Fill rows x cols with the scalar held in a 1x1 var.
template <typename S>
Var<S> broadcast_scalar(Var<S> s, Eigen::Index rows, Eigen::Index cols) {
    require(s.rows() == 1 && s.cols() == 1, "broadcast_scalar: input must be 1x1");
    Tape<S>& t = *s.tape;
    const int si = s.id;
    int id = t.make(Mat<S>::Constant(rows, cols, s.val()(0, 0)), s.needs_grad(),
                    [si](Tape<S>& tp, int self) {
                        if (tp.needs_grad(si)) tp.grad(si)(0, 0) += tp.grad(self).sum();
                    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    Tape<S>& t = *parts.front().tape;
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    bool ng = false;
    std::vector<int> ids;
    std::vector<Eigen::Index> widths;
    for (const auto& p : parts) {
        require(p.rows() == rows, "concat_cols: row mismatch");
        cols += p.cols();
        ng = ng || p.needs_grad();
        ids.push_back(p.id);
        widths.push_back(p.cols());
    }
    Mat<S> v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.val();
        at += p.cols();
    }
    int id = t.make(std::move(v), ng, [ids, widths](Tape<S>& tp, int self) {
        const Mat<S>& g = tp.grad(self);
        Eigen::Index at = 0;
        for (size_t k = 0; k < ids.size(); ++k) {
            tp.acc(ids[k], g.middleCols(at, widths[k]));
            at += widths[k];
        }
    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
    return concat_cols(std::vector<Var<S>>{a, b});
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index j0, Eigen::Index n) {
    require(j0 >= 0 && n >= 1 && j0 + n <= a.cols(), "slice_cols: out of range");
    Tape<S>& t = *a.tape;
    const int ai = a.id;
    int id = t.make(a.val().middleCols(j0, n), a.needs_grad(), [ai, j0, n](Tape<S>& tp, int self) {
        if (tp.needs_grad(ai)) tp.grad(ai).middleCols(j0, n) += tp.grad(self);
    });
    return Var<S>(t, id);
}

// Select rows of A by index (duplicates allowed); backward scatter-adds.
template <typename S>
Var<S> gather_rows(Var<S> a, std::vector<int> idx) {
    Tape<S>& t = *a.tape;
    const int ai = a.id;
    Mat<S> v(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] >= 0 && idx[i] < a.rows(), "gather_rows: index out of range");
        v.row(static_cast<Eigen::Index>(i)) = a.val().row(idx[i]);
    }
    int id = t.make(std::move(v), a.needs_grad(), [ai, idx](Tape<S>& tp, int self) {
        if (!tp.needs_grad(ai)) return;
        const Mat<S>& g = tp.grad(self);
        Mat<S>& ga = tp.grad(ai);
        for (size_t i = 0; i < idx.size(); ++i)
            ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    });
    return Var<S>(t, id);
}

template <typename S>
Var<S> sum_all(Var<S> a) {
    Tape<S>& t = *a.tape;
    const int ai = a.id;
    Mat<S> v(1, 1);
    v(0, 0) = a.val().sum();
    const Eigen::Index r = a.rows(), c = a.cols();
    int id = t.make(std::move(v), a.needs_grad(), [ai, r, c](Tape<S>& tp, int self) {
        tp.acc(ai, Mat<S>::Constant(r, c, tp.grad(self)(0, 0)));
    });
    return Var<S>(t, id);
}

// Row-wise softmax over columns. `key_mask` (optional, length = cols,
// nonzero = usable) excludes masked columns: they get exactly zero weight and
// never enter the reduction, so perturbing a masked column cannot change the
// output. Throws if every column is masked.
template <typename S>
Var<S> row_softmax(Var<S> a, const std::vector<uint8_t>* key_mask = nullptr) {
    Tape<S>& t = *a.tape;
    const Eigen::Index rows = a.rows(), cols = a.cols();
    if (key_mask) {
        require(static_cast<Eigen::Index>(key_mask->size()) == cols,
                "row_softmax: mask length mismatch");
        bool any = false;
        for (uint8_t m : *key_mask) any = any || (m != 0);
        require(any, "row_softmax: all keys masked");
    }
    const std::vector<uint8_t> mask = key_mask ? *key_mask : std::vector<uint8_t>();
    Mat<S> p(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        S mx = std::numeric_limits<S>::lowest();
        for (Eigen::Index c = 0; c < cols; ++c)
            if (mask.empty() || mask[c]) mx = std::max(mx, a.val()(r, c));
        S denom = S(0);
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (mask.empty() || mask[c]) {
                p(r, c) = std::exp(a.val()(r, c) - mx);
                denom += p(r, c);
            } else {
                p(r, c) = S(0);
            }
        }
        p.row(r) /= denom;
    }
    const int ai = a.id;
    int id = t.make(std::move(p), a.needs_grad(), [ai](Tape<S>& tp, int self) {
        if (!tp.needs_grad(ai)) return;
        const Mat<S>& pv = tp.val(self);
        const Mat<S>& g = tp.grad(self);
        Mat<S> da(pv.rows(), pv.cols());
        for (Eigen::Index r = 0; r < pv.rows(); ++r) {
            const S dot = g.row(r).cwiseProduct(pv.row(r)).sum();
            da.row(r) = pv.row(r).cwiseProduct(g.row(r) - Row<S>::Constant(pv.cols(), dot));
        }
        tp.grad(ai) += da;
    });
    return Var<S>(t, id);
}

namespace detail {

// Shared layer norm core; gamma/beta ids may be -1 (no affine).
template <typename S>
Var<S> layer_norm_impl(Var<S> x, int gi, int bi, double eps) {
    Tape<S>& t = *x.tape;
    const Eigen::Index rows = x.rows(), cols = x.cols();
    Mat<S> xhat(rows, cols);
    Col<S> inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S mu = x.val().row(r).mean();
        const S var = (x.val().row(r).array() - mu).square().mean();
        const S inv = S(1) / std::sqrt(var + S(eps));
        inv_std(r) = inv;
        xhat.row(r) = ((x.val().row(r).array() - mu) * inv).matrix();
    }
    Mat<S> y = xhat;
    if (gi >= 0) y = (y.array().rowwise() * t.val(gi).row(0).array()).matrix();
    if (bi >= 0) y.rowwise() += t.val(bi).row(0);
    const int xi = x.id;
    bool ng = x.needs_grad() || (gi >= 0 && t.needs_grad(gi)) || (bi >= 0 && t.needs_grad(bi));
    int id = t.make(std::move(y), ng, [xi, gi, bi, xhat, inv_std](Tape<S>& tp, int self) {
        const Mat<S>& g = tp.grad(self);
        if (bi >= 0) tp.acc(bi, g.colwise().sum());
        if (gi >= 0) tp.acc(gi, (g.array() * xhat.array()).colwise().sum().matrix());
        if (!tp.needs_grad(xi)) return;
        Mat<S> dxhat = g;
        if (gi >= 0) dxhat = (dxhat.array().rowwise() * tp.val(gi).row(0).array()).matrix();
        const Eigen::Index cols = g.cols();
        Mat<S> dx(g.rows(), cols);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const S m1 = dxhat.row(r).mean();
            const S m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) =
                (inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2)).matrix();
        }
        tp.grad(xi) += dx;
    });
    return Var<S>(t, id);
}

}  // namespace detail

// Per-row layer norm with affine parameters (gamma, beta are 1 x C).
template <typename S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gamma, Var<S> beta, double eps = 1e-5) {
    require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm: bad gamma");
    require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm: bad beta");
    return detail::layer_norm_impl(x, gamma.id, beta.id, eps);
}

// Per-row layer norm without affine (DiT modulation style).
template <typename S>
Var<S> layer_norm_rows_plain(Var<S> x, double eps = 1e-5) {
    return detail::layer_norm_impl(x, -1, -1, eps);
}

namespace detail {

template <typename S, typename FwdFn, typename DerivFn>
Var<S> cwise_unary(Var<S> a, FwdFn fwd, DerivFn deriv) {
    Tape<S>& t = *a.tape;
    const int ai = a.id;
    Mat<S> v = a.val().unaryExpr([&](S x) { return static_cast<S>(fwd(static_cast<double>(x))); });
    int id = t.make(std::move(v), a.needs_grad(), [ai, deriv](Tape<S>& tp, int self) {
        if (!tp.needs_grad(ai)) return;
        const Mat<S>& x = tp.val(ai);
        Mat<S> d = x.unaryExpr([&](S xv) { return static_cast<S>(deriv(static_cast<double>(xv))); });
        tp.grad(ai) += (tp.grad(self).array() * d.array()).matrix();
    });
    return Var<S>(t, id);
}

}  // namespace detail

template <typename S>
Var<S> exp_(Var<S> a) {
    return detail::cwise_unary(
        a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

template <typename S>
Var<S> log_(Var<S> a) {
    return detail::cwise_unary(
        a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

template <typename S>
Var<S> square(Var<S> a) {
    return detail::cwise_unary(
        a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

template <typename S>
Var<S> silu(Var<S> a) {
    return detail::cwise_unary(
        a,
        [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

template <typename S>
Var<S> lgamma_(Var<S> a) {
    return detail::cwise_unary(
        a, [](double x) { return std::lgamma(x); }, [](double x) { return digamma(x); });
}

}  // namespace setgen::ad
