#pragma once

// Classifier-free guidance over the DiT velocity field.
//
// Joint:    v* = v(Null) + omega * (v(y) - v(Null))
// Additive: v* = v(Null) + sum_j omega_j * (v(y_j) - v(Null)), where v(y_j)
//           conditions on attribute j alone.
//
// omega = 0 and omega = 1 short-circuit to a single network call so the
// identities v*(0) == v(Null) and v*(1) == v(y) hold bit-exactly; a single
// assigned attribute in additive mode delegates to the joint formula.

#include <vector>

#include "setgen/flow/dit.hpp"

namespace setgen::flow {

template <typename S>
Mat<S> cfg_velocity_joint(const Mat<S>& z, double t, const ConditionKey& key, double omega,
                          DitParams<S>& p, const ConditionSpace& cs, CfgMode trained_mode) {
    if (key.is_null() || omega == 0.0)
        return dit_velocity(z, t, ConditionKey::null(), p, cs, trained_mode);
    if (omega == 1.0) return dit_velocity(z, t, key, p, cs, trained_mode);
    Mat<S> v_null = dit_velocity(z, t, ConditionKey::null(), p, cs, trained_mode);
    Mat<S> v_cond = dit_velocity(z, t, key, p, cs, trained_mode);
    return v_null + static_cast<S>(omega) * (v_cond - v_null);
}

template <typename S>
Mat<S> cfg_velocity_additive(const Mat<S>& z, double t, const ConditionKey& key,
                             const std::vector<double>& omegas, DitParams<S>& p,
                             const ConditionSpace& cs, CfgMode trained_mode) {
    // One guidance weight per assigned attribute, in canonical attribute order.
    std::vector<ConditionKey> singles;
    for (const std::string& attr : cs.attributes) {
        const auto it = key.values.find(attr);
        if (it == key.values.end()) continue;
        ConditionKey single;
        single.values[attr] = it->second;
        singles.push_back(single);
    }
    require(omegas.size() == singles.size(),
            "cfg additive: got " + std::to_string(omegas.size()) + " weights for " +
                std::to_string(singles.size()) + " assigned attributes");
    if (singles.empty()) return dit_velocity(z, t, ConditionKey::null(), p, cs, trained_mode);
    if (singles.size() == 1)
        return cfg_velocity_joint(z, t, singles[0], omegas[0], p, cs, trained_mode);

    bool all_zero = true;
    for (double w : omegas) all_zero = all_zero && w == 0.0;
    if (all_zero) return dit_velocity(z, t, ConditionKey::null(), p, cs, trained_mode);

    Mat<S> v_null = dit_velocity(z, t, ConditionKey::null(), p, cs, trained_mode);
    Mat<S> acc = v_null;
    for (size_t j = 0; j < singles.size(); ++j) {
        if (omegas[j] == 0.0) continue;
        Mat<S> v_j = dit_velocity(z, t, singles[j], p, cs, trained_mode);
        acc += static_cast<S>(omegas[j]) * (v_j - v_null);
    }
    return acc;
}

}  // namespace setgen::flow
