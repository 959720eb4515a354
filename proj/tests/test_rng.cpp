#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "setgen/core/rng.hpp"

using setgen::Rng;

namespace {

struct Moments {
    double mean = 0.0, var = 0.0;
};

template <typename Draw>
Moments sample_moments(int n, Draw draw) {
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = draw();
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return {mean, var / (n - 1)};
}

}  // namespace

TEST_CASE("same seed reproduces, different seed diverges") {
    Rng a(42), b(42), c(43);
    bool all_eq = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const double ua = a.uniform(), ub = b.uniform(), uc = c.uniform();
        all_eq = all_eq && (ua == ub);
        any_diff = any_diff || (ua != uc);
    }
    CHECK(all_eq);
    CHECK(any_diff);
}

TEST_CASE("derive gives independent, named, reproducible streams") {
    Rng root(7);
    Rng d1 = root.derive("vae");
    Rng d2 = root.derive("ldm");
    Rng d1b = Rng(7).derive("vae");
    CHECK(d1.uniform() == d1b.uniform());
    CHECK(d1.uniform() != d2.uniform());
    // Deriving must not disturb the parent stream.
    Rng p1(7), p2(7);
    (void)p1.derive("x");
    CHECK(p1.uniform() == p2.uniform());
}

TEST_CASE("uniform range and below") {
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const uint64_t k = r.below(17);
        CHECK(k < 17);
    }
}

TEST_CASE("normal moments") {
    Rng r(2);
    auto m = sample_moments(200000, [&] { return r.normal(); });
    CHECK(m.mean == Catch::Approx(0.0).margin(0.02));
    CHECK(m.var == Catch::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gamma moments across shape regimes") {
    Rng r(3);
    for (double shape : {0.4, 1.0, 2.5, 9.0}) {
        const double scale = 1.7;
        auto m = sample_moments(200000, [&] { return r.gamma(shape, scale); });
        CHECK(m.mean == Catch::Approx(shape * scale).epsilon(0.03));
        CHECK(m.var == Catch::Approx(shape * scale * scale).epsilon(0.06));
    }
}

TEST_CASE("poisson moments across mu regimes") {
    Rng r(4);
    for (double mu : {0.3, 4.0, 25.0, 200.0}) {
        auto m = sample_moments(200000, [&] { return static_cast<double>(r.poisson(mu)); });
        CHECK(m.mean == Catch::Approx(mu).epsilon(0.02));
        CHECK(m.var == Catch::Approx(mu).epsilon(0.05));
    }
}

TEST_CASE("negative binomial moments match mu and mu + alpha mu^2") {
    Rng r(5);
    for (double mu : {2.0, 20.0}) {
        for (double alpha : {0.1, 0.5}) {
            auto m = sample_moments(300000,
                                    [&] { return static_cast<double>(r.negative_binomial(mu, alpha)); });
            CHECK(m.mean == Catch::Approx(mu).epsilon(0.02));
            CHECK(m.var == Catch::Approx(mu + alpha * mu * mu).epsilon(0.05));
        }
    }
}

TEST_CASE("state roundtrip resumes the exact stream") {
    Rng r(99);
    for (int i = 0; i < 37; ++i) (void)r.uniform();
    const std::string st = r.state();
    std::vector<double> ahead(16);
    for (auto& x : ahead) x = r.uniform();
    Rng q(0);
    q.set_state(st);
    for (double expect : ahead) CHECK(q.uniform() == expect);
}

TEST_CASE("shuffle is a permutation and is seed stable") {
    Rng r(6);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    r.shuffle(w);
    auto sorted = w;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
    Rng r2(6);
    auto w2 = v;
    r2.shuffle(w2);
    CHECK(w == w2);
}
