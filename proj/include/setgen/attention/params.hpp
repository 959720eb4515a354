#pragma once

#include <string>

#include "setgen/core/param.hpp"

namespace setgen::attention {

// All parameter structs expose for_each(prefix, fn) visiting every tensor as
// (dotted-name, Tensor&) in a fixed order; init/optimizer/checkpoint code is
// written against that visitor.

template <typename S>
struct Linear {
    Tensor<S> W;  // [in x out]
    Tensor<S> b;  // [1 x out]

    Linear() = default;
    Linear(Eigen::Index in, Eigen::Index out) : W(in, out, true), b(1, out, false) {}

    void init(Rng& rng) { init_fan_in(W, W.rows(), rng); }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        f(p + ".W", W);
        f(p + ".b", b);
    }
};

template <typename S>
struct LayerNormParams {
    Tensor<S> gamma;  // [1 x D], init 1
    Tensor<S> beta;   // [1 x D], init 0

    LayerNormParams() = default;
    explicit LayerNormParams(Eigen::Index d) : gamma(1, d, false), beta(1, d, false) {
        gamma.v.setOnes();
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        f(p + ".gamma", gamma);
        f(p + ".beta", beta);
    }
};

// Gated MLP: down(up(x) .* silu(gate(x))).
template <typename S>
struct MlpParams {
    Linear<S> gate, up, down;

    MlpParams() = default;
    MlpParams(Eigen::Index d, Eigen::Index hidden)
        : gate(d, hidden), up(d, hidden), down(hidden, d) {}

    void init(Rng& rng) {
        gate.init(rng);
        up.init(rng);
        down.init(rng);
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        gate.for_each(p + ".gate", f);
        up.for_each(p + ".up", f);
        down.for_each(p + ".down", f);
    }
};

// Self-attention with projections on both sides (used inside transformer
// blocks; MCAB carries its own projections without an output one).
template <typename S>
struct AttentionParams {
    Linear<S> wq, wk, wv, wo;
    int n_heads = 1;
    int d_model = 0;

    AttentionParams() = default;
    AttentionParams(Eigen::Index d, int heads)
        : wq(d, d), wk(d, d), wv(d, d), wo(d, d), n_heads(heads), d_model(static_cast<int>(d)) {
        require(d % heads == 0, "attention: D_model not divisible by head count");
    }

    void init(Rng& rng) {
        wq.init(rng);
        wk.init(rng);
        wv.init(rng);
        wo.init(rng);
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        wq.for_each(p + ".wq", f);
        wk.for_each(p + ".wk", f);
        wv.for_each(p + ".wv", f);
        wo.for_each(p + ".wo", f);
    }
};

// MCAB of Eqs. 2-4. Pooling mode owns m pseudoinput rows S; unpooling mode is
// built with m=0 and receives its queries (embedding rows) from the caller.
template <typename S>
struct McabParams {
    Tensor<S> pseudo;  // [m x D] pseudoinputs, unit Gaussian init
    Linear<S> linear_s, linear_k, linear_v;
    LayerNormParams<S> ln_q, ln_k, ln_v, ln_f;
    MlpParams<S> mlp;
    int n_heads = 1;

    McabParams() = default;
    McabParams(Eigen::Index m, Eigen::Index d, int heads, Eigen::Index mlp_hidden)
        : pseudo(m, d, false),
          linear_s(d, d),
          linear_k(d, d),
          linear_v(d, d),
          ln_q(d),
          ln_k(d),
          ln_v(d),
          ln_f(d),
          mlp(d, mlp_hidden),
          n_heads(heads) {
        require(d % heads == 0, "mcab: D_model not divisible by head count");
    }

    void init(Rng& rng) {
        init_normal(pseudo, 1.0, rng);
        linear_s.init(rng);
        linear_k.init(rng);
        linear_v.init(rng);
        mlp.init(rng);
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        if (pseudo.rows() > 0) f(p + ".pseudo", pseudo);
        linear_s.for_each(p + ".linear_s", f);
        linear_k.for_each(p + ".linear_k", f);
        linear_v.for_each(p + ".linear_v", f);
        ln_q.for_each(p + ".ln_q", f);
        ln_k.for_each(p + ".ln_k", f);
        ln_v.for_each(p + ".ln_v", f);
        ln_f.for_each(p + ".ln_f", f);
        mlp.for_each(p + ".mlp", f);
    }
};

// Pre-norm residual block: h = X + Att(LN1(X)); out = h + MLP(LN2(h)).
template <typename S>
struct TransformerBlockParams {
    AttentionParams<S> att;
    LayerNormParams<S> ln1, ln2;
    MlpParams<S> mlp;

    TransformerBlockParams() = default;
    TransformerBlockParams(Eigen::Index d, int heads, Eigen::Index mlp_hidden)
        : att(d, heads), ln1(d), ln2(d), mlp(d, mlp_hidden) {}

    void init(Rng& rng) {
        att.init(rng);
        mlp.init(rng);
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        att.for_each(p + ".att", f);
        ln1.for_each(p + ".ln1", f);
        ln2.for_each(p + ".ln2", f);
        mlp.for_each(p + ".mlp", f);
    }
};

// Count+id embedding: row_i = Linear(concat(repeat_D(count_i), E[id_i])).
// E has vocab_size+1 rows; the last row is the PAD embedding.
template <typename S>
struct EmbeddingParams {
    Tensor<S> E;     // [(V+1) x D]
    Linear<S> mix;   // [2D x D]
    int vocab_size = 0;

    EmbeddingParams() = default;
    EmbeddingParams(int vocab, Eigen::Index d)
        : E(vocab + 1, d, false), mix(2 * d, d), vocab_size(vocab) {}

    int pad_id() const { return vocab_size; }

    void init(Rng& rng) {
        init_normal(E, 1.0 / std::sqrt(static_cast<double>(E.cols())), rng);
        mix.init(rng);
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        f(p + ".E", E);
        mix.for_each(p + ".mix", f);
    }
};

}  // namespace setgen::attention
