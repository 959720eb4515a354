#pragma once

// Mean-shift prediction baselines over (cell type, perturbation) groups.
// Both return dense [n_test x vocab] predictions aligned with test records.

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "setgen/core/common.hpp"
#include "setgen/eval/metrics.hpp"
#include "setgen/setdata/types.hpp"

namespace setgen::eval {

namespace detail {

inline const std::string& attr_of(const setdata::CellRecord& rec, const std::string& attr) {
    auto it = rec.attributes.find(attr);
    require(it != rec.attributes.end(),
            "baseline: record " + rec.cell_id + " missing attribute " + attr);
    return it->second;
}

// Per-(type, perturbation) mean dense profile over the train set.
struct GroupMeans {
    std::map<std::pair<std::string, std::string>, Row<double>> mean;
    std::map<std::pair<std::string, std::string>, long> count;

    static GroupMeans fit(const setdata::CountDataset& train, const std::string& type_attr,
                          const std::string& pert_attr) {
        GroupMeans gm;
        const Mat<double> X = dense_counts(train);
        for (size_t r = 0; r < train.records.size(); ++r) {
            const auto key = std::make_pair(attr_of(train.records[r], type_attr),
                                            attr_of(train.records[r], pert_attr));
            auto [it, fresh] = gm.mean.try_emplace(key, Row<double>::Zero(X.cols()));
            it->second += X.row(static_cast<Eigen::Index>(r));
            gm.count[key] += 1;
        }
        for (auto& [key, sum] : gm.mean) sum /= static_cast<double>(gm.count.at(key));
        return gm;
    }
};

}  // namespace detail

// Perturb-mean baseline: x_hat = mu_type^ctrl + delta_pert, where delta_pert
// averages (mu_{c,p} - mu_c^ctrl) over train types c that saw perturbation p.
// Control test cells get delta = 0. Every train/test type must have a train
// control population; perturbations unseen in train are errors.
inline Mat<double> perturb_mean_baseline(const setdata::CountDataset& train,
                                         const setdata::CountDataset& test,
                                         const std::string& type_attr,
                                         const std::string& pert_attr,
                                         const std::string& ctrl_value) {
    require(!train.records.empty(), "perturb baseline: empty train set");
    const auto gm = detail::GroupMeans::fit(train, type_attr, pert_attr);

    std::set<std::string> types, perts;
    for (const auto& [key, unused] : gm.mean) {
        types.insert(key.first);
        perts.insert(key.second);
    }
    for (const auto& t : types)
        require(gm.mean.count({t, ctrl_value}) > 0,
                "perturb baseline: missing control population for type " + t);

    // Across-type average shift per perturbation.
    std::map<std::string, Row<double>> delta;
    for (const auto& p : perts) {
        if (p == ctrl_value) continue;
        Row<double> acc;
        long n = 0;
        for (const auto& t : types) {
            auto it = gm.mean.find({t, p});
            if (it == gm.mean.end()) continue;
            const Row<double> d = it->second - gm.mean.at({t, ctrl_value});
            acc = (n == 0) ? d : Row<double>(acc + d);
            ++n;
        }
        delta[p] = acc / static_cast<double>(n);
    }

    const int v = test.vocabulary.size();
    require(v == train.vocabulary.size(), "perturb baseline: vocabulary mismatch");
    Mat<double> pred(static_cast<Eigen::Index>(test.records.size()), v);
    for (size_t r = 0; r < test.records.size(); ++r) {
        const std::string& t = detail::attr_of(test.records[r], type_attr);
        const std::string& p = detail::attr_of(test.records[r], pert_attr);
        auto ctrl = gm.mean.find({t, ctrl_value});
        require(ctrl != gm.mean.end(),
                "perturb baseline: missing control population for type " + t);
        Row<double> row = ctrl->second;
        if (p != ctrl_value) {
            auto d = delta.find(p);
            require(d != delta.end(), "perturb baseline: perturbation " + p + " unseen in train");
            row += d->second;
        }
        pred.row(static_cast<Eigen::Index>(r)) = row;
    }
    return pred;
}

// Context-mean baseline: perturbed test cells get their type's pseudo-bulk
// mean over non-control train cells; control test cells pass through
// unchanged.
inline Mat<double> context_mean_baseline(const setdata::CountDataset& train,
                                         const setdata::CountDataset& test,
                                         const std::string& type_attr,
                                         const std::string& pert_attr,
                                         const std::string& ctrl_value) {
    require(!train.records.empty(), "context baseline: empty train set");
    require(test.vocabulary.size() == train.vocabulary.size(),
            "context baseline: vocabulary mismatch");
    const Mat<double> Xtr = dense_counts(train);
    std::map<std::string, Row<double>> sum;
    std::map<std::string, long> n;
    for (size_t r = 0; r < train.records.size(); ++r) {
        if (detail::attr_of(train.records[r], pert_attr) == ctrl_value) continue;
        const std::string& t = detail::attr_of(train.records[r], type_attr);
        auto [it, fresh] = sum.try_emplace(t, Row<double>::Zero(Xtr.cols()));
        it->second += Xtr.row(static_cast<Eigen::Index>(r));
        n[t] += 1;
    }

    const Mat<double> Xte = dense_counts(test);
    Mat<double> pred(Xte.rows(), Xte.cols());
    for (size_t r = 0; r < test.records.size(); ++r) {
        const Eigen::Index i = static_cast<Eigen::Index>(r);
        if (detail::attr_of(test.records[r], pert_attr) == ctrl_value) {
            pred.row(i) = Xte.row(i);
            continue;
        }
        const std::string& t = detail::attr_of(test.records[r], type_attr);
        auto it = sum.find(t);
        require(it != sum.end(),
                "context baseline: type " + t + " has no perturbed train cells");
        pred.row(i) = it->second / static_cast<double>(n.at(t));
    }
    return pred;
}

}  // namespace setgen::eval
