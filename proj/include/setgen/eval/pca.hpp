#pragma once

// PCA basis fit on true data and reused for generated data. Components are
// rows of W (top-k eigenvectors of the sample covariance), with a fixed sign
// convention so a refit on the same data is bit-stable.

#include <string>

#include <Eigen/Eigenvalues>

#include "setgen/core/common.hpp"
#include "setgen/util/hash.hpp"

namespace setgen::eval {

struct PcaBasis {
    Mat<double> W;     // [k x D], orthonormal rows
    Mat<double> mean;  // [1 x D]
    int k = 0;
    std::string fingerprint;  // of the data the basis was fit on
};

inline PcaBasis pca_fit(const Mat<double>& X, int k = 30) {
    const Eigen::Index n = X.rows(), d = X.cols();
    require(k >= 1, "pca_fit: k must be positive");
    require(d >= k, "pca_fit: need D >= k");
    require(n > k, "pca_fit: need more samples than components");

    PcaBasis basis;
    basis.k = k;
    basis.fingerprint = hex64(fingerprint_doubles(X.data(), static_cast<size_t>(X.size())));
    basis.mean = X.colwise().mean();
    Mat<double> centered = X.rowwise() - basis.mean.row(0);
    Mat<double> cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Mat<double>> eig(cov);
    require(eig.info() == Eigen::Success, "pca_fit: eigen decomposition failed");
    const auto& vals = eig.eigenvalues();  // ascending
    const double tol = 1e-10 * std::max(1.0, vals(d - 1));
    require(vals(d - k) > tol, "pca_fit: data rank below k");

    basis.W.resize(k, d);
    for (int c = 0; c < k; ++c) {
        Col<double> v = eig.eigenvectors().col(d - 1 - c);
        // sign convention: the largest-magnitude entry is positive
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0.0) v = -v;
        basis.W.row(c) = v.transpose();
    }
    return basis;
}

inline Mat<double> pca_project(const Mat<double>& X, const PcaBasis& basis) {
    require(X.cols() == basis.W.cols(), "pca_project: dimension mismatch");
    return (X.rowwise() - basis.mean.row(0)) * basis.W.transpose();
}

}  // namespace setgen::eval
