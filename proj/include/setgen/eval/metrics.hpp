#pragma once

// Reconstruction metrics: gene-averaged Pearson correlation, elementwise MSE,
// and the NB reconstruction error of a trained VAE on a dataset.

#include <cmath>
#include <string>
#include <vector>

#include "setgen/core/common.hpp"
#include "setgen/setdata/types.hpp"
#include "setgen/vae/model.hpp"

namespace setgen::eval {

// Dense [n_cells x vocab] count matrix; genes absent from a record are 0.
inline Mat<double> dense_counts(const setdata::CountDataset& ds) {
    const int v = ds.vocabulary.size();
    Mat<double> X = Mat<double>::Zero(static_cast<Eigen::Index>(ds.records.size()), v);
    for (size_t r = 0; r < ds.records.size(); ++r) {
        const auto& rec = ds.records[r];
        for (size_t i = 0; i < rec.gene_ids.size(); ++i)
            X(static_cast<Eigen::Index>(r), rec.gene_ids[i]) =
                static_cast<double>(rec.counts[i]);
    }
    return X;
}

struct PearsonResult {
    double value = 0.0;  // mean over genes with variance on both sides
    int genes_used = 0;
    int genes_skipped = 0;  // zero variance in truth or prediction
};

// Sample correlation per gene (column), averaged over genes where both
// columns have nonzero variance. Skipped columns are reported, not errors.
inline PearsonResult pearson(const Mat<double>& X_true, const Mat<double>& X_pred) {
    require(X_true.rows() == X_pred.rows() && X_true.cols() == X_pred.cols(),
            "pearson: shape mismatch");
    require(X_true.rows() >= 2, "pearson: need at least 2 rows");
    PearsonResult res;
    double acc = 0.0;
    for (Eigen::Index g = 0; g < X_true.cols(); ++g) {
        const Col<double> a = (X_true.col(g).array() - X_true.col(g).mean()).matrix();
        const Col<double> b = (X_pred.col(g).array() - X_pred.col(g).mean()).matrix();
        const double na = a.norm(), nb = b.norm();
        if (na == 0.0 || nb == 0.0) {
            ++res.genes_skipped;
            continue;
        }
        acc += a.dot(b) / (na * nb);
        ++res.genes_used;
    }
    require(res.genes_used > 0, "pearson: all genes have zero variance");
    res.value = acc / res.genes_used;
    return res;
}

inline double mse(const Mat<double>& X_true, const Mat<double>& X_pred) {
    require(X_true.rows() == X_pred.rows() && X_true.cols() == X_pred.cols(),
            "mse: shape mismatch");
    require(X_true.size() > 0, "mse: empty input");
    return (X_true - X_pred).squaredNorm() / static_cast<double>(X_true.size());
}

// Mean over cells of the negated NB reconstruction log-likelihood at the
// posterior mean (deterministic pass, no sampling).
template <typename S>
double recon_error(const setdata::CountDataset& ds, vae::VaeParams<S>& p,
                   const vae::VaeConfig& cfg) {
    require(!ds.records.empty(), "recon_error: empty dataset");
    vae::VaeConfig c = cfg;
    c.deterministic = true;
    Rng rng(0);  // unused on the deterministic path
    double total = 0.0;
    for (const auto& rec : ds.records) total += -vae::elbo(rec, p, c, rng).recon_ll;
    return total / static_cast<double>(ds.records.size());
}

}  // namespace setgen::eval
