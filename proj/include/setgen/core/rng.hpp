#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "setgen/core/common.hpp"
#include "setgen/util/hash.hpp"

namespace setgen {

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; every distribution transform below is hand-rolled so streams
// are bit-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

    // Independent child stream. Depends on the construction seed only, not on
    // the parent's draw history.
    Rng derive(const std::string& name) const {
        return Rng(hash_combine(seed_, fnv1a64(name)));
    }
    Rng derive(uint64_t salt) const { return Rng(hash_combine(seed_, salt)); }

    uint64_t seed() const { return seed_; }
    uint64_t next_u64() { return engine_(); }

    // Uniform on [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;  // rejection, no modulo bias
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (cosine branch only).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0,1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape k, scale theta), Marsaglia-Tsang.
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    // Poisson(mu): Knuth product for small mu, Hormann's PTRS otherwise.
    long long poisson(double mu) {
        if (mu <= 0.0) return 0;
        if (mu < 10.0) {
            const double limit = std::exp(-mu);
            double prod = uniform();
            long long k = 0;
            while (prod > limit) {
                prod *= uniform();
                ++k;
            }
            return k;
        }
        const double b = 0.931 + 2.53 * std::sqrt(mu);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        const double log_mu = std::log(mu);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<long long>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                kf * log_mu - mu - std::lgamma(kf + 1.0))
                return static_cast<long long>(kf);
        }
    }

    // Negative Binomial with mean mu and dispersion alpha (variance
    // mu + alpha*mu^2), drawn as a gamma-Poisson mixture.
    long long negative_binomial(double mu, double alpha) {
        require(alpha > 0.0, "negative_binomial: dispersion must be > 0");
        if (mu <= 0.0) return 0;
        const double r = 1.0 / alpha;
        const double lambda = gamma(r, mu / r);
        return poisson(lambda);
    }

    template <typename S>
    Mat<S> normal_matrix(Eigen::Index rows, Eigen::Index cols, double mean = 0.0,
                         double stddev = 1.0) {
        Mat<S> m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<S>(normal(mean, stddev));
        return m;
    }

    template <typename S>
    Mat<S> uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
        Mat<S> m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<S>(uniform(lo, hi));
        return m;
    }

    // Fisher-Yates in-place shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Serializable engine state (textual, as the standard specifies).
    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937_64 engine_;
    uint64_t seed_;
};

}  // namespace setgen
