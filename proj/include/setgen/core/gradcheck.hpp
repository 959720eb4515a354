#pragma once

#include <functional>
#include <string>
#include <vector>

#include "setgen/core/param.hpp"

namespace setgen {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "name(i,j)" of the worst entry
    long checked = 0;
};

// Central-difference check of `loss()` against gradients accumulated in the
// given tensors. `loss` must rebuild the graph, run backward, and return the
// scalar loss; it must zero the grads itself (or the caller does between
// invocations). Only meaningful with S = double.
template <typename S>
GradCheckResult gradcheck(const std::function<double()>& loss,
                          std::vector<std::pair<std::string, Tensor<S>*>> params,
                          double h = 1e-4, long max_entries_per_tensor = 64) {
    for (auto& [name, t] : params) t->zero_grad();
    loss();
    std::vector<Mat<S>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, t] : params) analytic.push_back(t->g);

    GradCheckResult res;
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor<S>& t = *params[k].second;
        const Eigen::Index total = t.v.size();
        // Stride through large tensors so the check stays fast.
        const Eigen::Index step =
            total <= max_entries_per_tensor ? 1 : (total + max_entries_per_tensor - 1) / max_entries_per_tensor;
        for (Eigen::Index lin = 0; lin < total; lin += step) {
            const Eigen::Index i = lin / t.v.cols();
            const Eigen::Index j = lin % t.v.cols();
            const S saved = t.v(i, j);
            t.v(i, j) = saved + static_cast<S>(h);
            for (auto& [n2, t2] : params) t2->zero_grad();
            const double fp = loss();
            t.v(i, j) = saved - static_cast<S>(h);
            for (auto& [n2, t2] : params) t2->zero_grad();
            const double fm = loss();
            t.v(i, j) = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ga = static_cast<double>(analytic[k](i, j));
            const double rel = std::abs(ga - fd) / std::max(std::abs(ga) + std::abs(fd), 1e-6);
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = params[k].first + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
            }
        }
    }
    // Restore analytic grads for any caller that inspects them afterwards.
    for (size_t k = 0; k < params.size(); ++k) params[k].second->g = analytic[k];
    return res;
}

}  // namespace setgen
