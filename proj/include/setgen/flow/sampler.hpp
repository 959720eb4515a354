#pragma once

// Fixed-step Euler integration of the probability-flow ODE from t = 0
// (standard normal source) to t = 1 (latent prior), plus the latent sampler
// that wires the guided velocity field into it.

#include <functional>
#include <string>
#include <vector>

#include "setgen/core/rng.hpp"
#include "setgen/flow/cfg.hpp"

namespace setgen::flow {

struct SamplerConfig {
    int steps = 100;
    CfgMode guidance = CfgMode::joint;
    double omega = 1.0;          // joint guidance weight
    std::vector<double> omegas;  // additive weights, one per assigned attribute

    void validate() const {
        require(steps >= 1, "sampler: steps must be >= 1");
    }
};

// z_{k+1} = z_k + (1/N) * v(z_k, k/N). Aborts on a non-finite state.
template <typename S, typename Field>
Mat<S> euler_integrate(Mat<S> z, int steps, Field&& field) {
    require(steps >= 1, "euler: steps must be >= 1");
    const double dt = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(steps);
        Mat<S> v = field(static_cast<const Mat<S>&>(z), t);
        require(v.rows() == z.rows() && v.cols() == z.cols(), "euler: field shape mismatch");
        z += static_cast<S>(dt) * v;
        require(all_finite(z), "euler: non-finite state at step " + std::to_string(k + 1));
    }
    return z;
}

// Guided field for one condition key under the trained network.
template <typename S>
std::function<Mat<S>(const Mat<S>&, double)> guided_field(const ConditionKey& key,
                                                          const SamplerConfig& sc,
                                                          DitParams<S>& p,
                                                          const ConditionSpace& cs,
                                                          CfgMode trained_mode) {
    if (sc.guidance == CfgMode::joint) {
        return [&p, &cs, key, trained_mode, omega = sc.omega](const Mat<S>& z, double t) {
            return cfg_velocity_joint(z, t, key, omega, p, cs, trained_mode);
        };
    }
    return [&p, &cs, key, trained_mode, omegas = sc.omegas](const Mat<S>& z, double t) {
        return cfg_velocity_additive(z, t, key, omegas, p, cs, trained_mode);
    };
}

// Draws n latent grids [m x z_dim]. Each chain runs on its own seed-derived
// stream, so results do not depend on how many chains precede them.
template <typename S>
std::vector<Mat<S>> sample_latents(int n, int m, int z_dim, const ConditionKey& key,
                                   const SamplerConfig& sc, DitParams<S>& p,
                                   const ConditionSpace& cs, CfgMode trained_mode,
                                   const Rng& rng) {
    require(n >= 0, "sample_latents: negative count");
    require(m >= 1 && z_dim >= 1, "sample_latents: bad latent shape");
    sc.validate();
    cs.resolve(key);  // validates attributes/categories up front
    auto field = guided_field(key, sc, p, cs, trained_mode);
    std::vector<Mat<S>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng chain = rng.derive(static_cast<uint64_t>(i));
        Mat<S> z0(m, z_dim);
        for (Eigen::Index r = 0; r < z0.rows(); ++r)
            for (Eigen::Index c = 0; c < z0.cols(); ++c)
                z0(r, c) = static_cast<S>(chain.normal());
        out.push_back(euler_integrate<S>(std::move(z0), sc.steps, field));
    }
    return out;
}

}  // namespace setgen::flow
