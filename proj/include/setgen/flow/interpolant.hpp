#pragma once

// Conditional flow-matching interpolant between a standard-normal source
// z0 and a data latent z1. Linear transport with a small floor sigma_min
// on the source scale:
//   z_t = t * z1 + (1 - (1 - sigma_min) * t) * z0
//   u   = z1 - (1 - sigma_min) * z0
// The target velocity u is constant in t for this path.

#include "setgen/core/common.hpp"

namespace setgen::flow {

struct InterpolantConfig {
    double sigma_min = 1e-4;
    // Weight of an auxiliary velocity-matching term on intermediate
    // features; kept at 0 (pure endpoint flow matching).
    double velocity_weight = 0.0;

    void validate() const {
        require(sigma_min >= 0.0 && sigma_min < 1.0,
                "interpolant: sigma_min must be in [0, 1)");
        require(velocity_weight >= 0.0, "interpolant: velocity_weight must be >= 0");
    }
};

template <typename S>
struct Interpolated {
    Mat<S> z_t;
    Mat<S> u;  // target velocity, same shape as z_t
};

template <typename S>
Interpolated<S> interpolate(const Mat<S>& z1, const Mat<S>& z0, double t,
                            const InterpolantConfig& cfg = {}) {
    cfg.validate();
    require(z1.rows() == z0.rows() && z1.cols() == z0.cols(),
            "interpolate: z1 and z0 shapes differ");
    require(t >= 0.0 && t <= 1.0, "interpolate: t must be in [0, 1]");
    const S a = static_cast<S>(t);
    const S b = static_cast<S>(1.0 - (1.0 - cfg.sigma_min) * t);
    const S c = static_cast<S>(1.0 - cfg.sigma_min);
    Interpolated<S> out;
    out.z_t = a * z1 + b * z0;
    out.u = z1 - c * z0;
    return out;
}

}  // namespace setgen::flow
