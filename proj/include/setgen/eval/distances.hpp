#pragma once

// Distribution distances: unbiased MMD^2 with an RBF kernel, discrete
// 2-Wasserstein via an exact assignment solver, and the Frechet distance
// between Gaussian moment fits.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "setgen/core/common.hpp"

namespace setgen::eval {

struct KernelConfig {
    // RBF bandwidth; 0 selects the median heuristic on pooled pairwise
    // distances.
    double sigma = 0.0;

    void validate() const { require(sigma >= 0.0, "kernel: sigma must be >= 0"); }
};

// Median of pairwise Euclidean distances over the pooled sample. Returns 1
// when every point coincides (any positive value works: the kernel is then
// constant and the unbiased estimator cancels to 0).
inline double median_heuristic_bandwidth(const Mat<double>& X, const Mat<double>& Y) {
    Mat<double> pooled(X.rows() + Y.rows(), X.cols());
    pooled << X, Y;
    std::vector<double> dists;
    dists.reserve(static_cast<size_t>(pooled.rows()) * (pooled.rows() - 1) / 2);
    for (Eigen::Index i = 0; i < pooled.rows(); ++i)
        for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
            dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    require(!dists.empty(), "median bandwidth: need at least 2 pooled points");
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

// Unbiased estimator:
//   sum_{i != j} k(x_i,x_j) / (n(n-1)) + sum_{i != j} k(y_i,y_j) / (m(m-1))
//   - 2 sum_{i,j} k(x_i,y_j) / (nm),   k(a,b) = exp(-||a-b||^2 / (2 sigma^2))
inline double mmd2_rbf(const Mat<double>& X, const Mat<double>& Y, KernelConfig kc = {}) {
    kc.validate();
    const Eigen::Index n = X.rows(), m = Y.rows();
    require(n >= 2 && m >= 2, "mmd2: need at least 2 samples per side");
    require(X.cols() == Y.cols(), "mmd2: dimension mismatch");
    const double sigma = kc.sigma > 0.0 ? kc.sigma : median_heuristic_bandwidth(X, Y);
    const double inv = 1.0 / (2.0 * sigma * sigma);

    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) xx += std::exp(-(X.row(i) - X.row(j)).squaredNorm() * inv);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            if (i != j) yy += std::exp(-(Y.row(i) - Y.row(j)).squaredNorm() * inv);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            xy += std::exp(-(X.row(i) - Y.row(j)).squaredNorm() * inv);

    return xx / (static_cast<double>(n) * (n - 1)) + yy / (static_cast<double>(m) * (m - 1)) -
           2.0 * xy / (static_cast<double>(n) * m);
}

namespace detail {

// Exact minimum-cost assignment (Hungarian with potentials, O(n^3)).
// Returns the column assigned to each row.
inline std::vector<int> min_cost_assignment(const Mat<double>& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);  // match[col] = row (1-based)
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace detail

// Discrete 2-Wasserstein between equally sized point sets: the square root
// of the minimum mean squared-distance assignment cost. The cost of the
// optimal assignment is re-summed in row order, so an enumeration oracle
// using the same convention agrees exactly.
inline double w2_discrete(const Mat<double>& X, const Mat<double>& Y) {
    require(X.rows() == Y.rows(), "w2: sample sizes differ");
    require(X.cols() == Y.cols(), "w2: dimension mismatch");
    const Eigen::Index n = X.rows();
    require(n >= 1, "w2: empty input");
    Mat<double> cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (X.row(i) - Y.row(j)).squaredNorm();
    const auto assign = detail::min_cost_assignment(cost);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += cost(i, assign[i]);
    return std::sqrt(total / static_cast<double>(n));
}

namespace detail {

// Symmetric PSD square root by eigen-decomposition. Eigenvalues in
// [-clip, 0) count as zero; anything lower means the input was not PSD.
inline Mat<double> psd_sqrt(const Mat<double>& A, double clip = 1e-8) {
    Mat<double> sym = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Mat<double>> eig(sym);
    require(eig.info() == Eigen::Success, "frechet: matrix square root did not converge");
    Col<double> lam = eig.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        require(lam(i) > -clip, "frechet: matrix square root saw eigenvalue " +
                                    std::to_string(lam(i)) + " below -" + std::to_string(clip));
        lam(i) = std::sqrt(std::max(0.0, lam(i)));
    }
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_x - mu_y||^2 + tr(Sx + Sy - 2 (Sx Sy)^{1/2}), with the cross term
// computed as sqrt(sqrt(Sx) Sy sqrt(Sx)) so every root is of a symmetric
// PSD matrix.
inline double frechet_distance(const Mat<double>& X, const Mat<double>& Y) {
    require(X.cols() == Y.cols(), "frechet: dimension mismatch");
    require(X.rows() > X.cols() && Y.rows() > Y.cols(),
            "frechet: need more samples than dimensions");
    const Mat<double> mx = X.colwise().mean();
    const Mat<double> my = Y.colwise().mean();
    const Mat<double> xc = X.rowwise() - mx.row(0);
    const Mat<double> yc = Y.rowwise() - my.row(0);
    const Mat<double> sx = (xc.transpose() * xc) / static_cast<double>(X.rows() - 1);
    const Mat<double> sy = (yc.transpose() * yc) / static_cast<double>(Y.rows() - 1);

    const Mat<double> rx = detail::psd_sqrt(sx);
    const Mat<double> cross = detail::psd_sqrt(rx * sy * rx);
    return (mx - my).squaredNorm() + sx.trace() + sy.trace() - 2.0 * cross.trace();
}

}  // namespace setgen::eval
