#pragma once

// Diffusion-transformer velocity network over the latent grid [m x z].
// adaLN-Zero conditioning: each block's shift/scale/gate come from a
// zero-initialised linear on silu(c), so a freshly constructed network is
// the zero velocity field. The conditioning vector c is the sum of a
// sinusoidal-time MLP embedding and a projected condition embedding.

#include <cmath>
#include <string>
#include <vector>

#include "setgen/attention/forward.hpp"
#include "setgen/attention/params.hpp"
#include "setgen/core/ops.hpp"
#include "setgen/flow/condition.hpp"
#include "setgen/flow/interpolant.hpp"

namespace setgen::flow {

using ad::Var;
using attention::AttentionParams;
using attention::Binder;
using attention::Linear;
using attention::MlpParams;

struct FlowConfig {
    int width = 64;
    int blocks = 2;
    int heads = 4;
    int c_dim = 32;     // condition embedding width
    int time_dim = 64;  // sinusoidal time features
    double rho = 0.1;   // condition dropout probability during training
    CfgMode mode = CfgMode::joint;
    InterpolantConfig interp;

    void validate() const {
        require(width > 0 && blocks >= 1 && heads >= 1, "flow: bad network size");
        require(width % heads == 0, "flow: width not divisible by head count");
        require(c_dim > 0, "flow: c_dim must be positive");
        require(time_dim > 0 && time_dim % 2 == 0, "flow: time_dim must be positive and even");
        require(rho >= 0.0 && rho <= 1.0, "flow: rho must be in [0, 1]");
        interp.validate();
    }
};

template <typename S>
struct DitBlockParams {
    AttentionParams<S> att;
    MlpParams<S> mlp;
    Linear<S> mod;  // width -> 6*width, stays zero-initialised

    DitBlockParams() = default;
    DitBlockParams(Eigen::Index w, int heads)
        : att(w, heads), mlp(w, 4 * w), mod(w, 6 * w) {}

    void init(Rng& rng) {
        att.init(rng);
        mlp.init(rng);
        // mod stays zero: fresh blocks are the identity map.
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        att.for_each(p + ".att", f);
        mlp.for_each(p + ".mlp", f);
        mod.for_each(p + ".mod", f);
    }
};

template <typename S>
struct DitParams {
    Linear<S> in_proj;             // z -> width
    Linear<S> time1, time2;        // time_dim -> width -> width
    Tensor<S> null_emb;            // [1 x c_dim]
    std::vector<Tensor<S>> attr_emb;  // per attribute, [n_categories x c_dim]
    Tensor<S> combo_emb;           // [n_combos x c_dim]; empty in additive mode
    Linear<S> cond_proj;           // c_dim -> width
    std::vector<DitBlockParams<S>> blocks;
    Linear<S> final_mod;           // width -> 2*width, stays zero-initialised
    Linear<S> out;                 // width -> z, stays zero-initialised
    int latent_dim = 0;
    int time_dim = 64;

    DitParams() = default;
    DitParams(const FlowConfig& cfg, int z_dim, const ConditionSpace& cs)
        : in_proj(z_dim, cfg.width),
          time1(cfg.time_dim, cfg.width),
          time2(cfg.width, cfg.width),
          null_emb(1, cfg.c_dim, false),
          combo_emb(cfg.mode == CfgMode::joint ? static_cast<Eigen::Index>(cs.combos.size()) : 0,
                    cfg.c_dim, false),
          cond_proj(cfg.c_dim, cfg.width),
          final_mod(cfg.width, 2 * cfg.width),
          out(cfg.width, z_dim),
          latent_dim(z_dim),
          time_dim(cfg.time_dim) {
        cfg.validate();
        require(z_dim > 0, "dit: latent dim must be positive");
        for (int a = 0; a < cs.n_attributes(); ++a)
            attr_emb.emplace_back(static_cast<Eigen::Index>(cs.categories[a].size()), cfg.c_dim,
                                  false);
        blocks.reserve(cfg.blocks);
        for (int i = 0; i < cfg.blocks; ++i) blocks.emplace_back(cfg.width, cfg.heads);
    }

    void init(Rng& rng) {
        in_proj.init(rng);
        time1.init(rng);
        time2.init(rng);
        const double s = 1.0 / std::sqrt(static_cast<double>(null_emb.cols()));
        init_normal(null_emb, s, rng);
        for (auto& t : attr_emb) init_normal(t, s, rng);
        if (combo_emb.rows() > 0) init_normal(combo_emb, s, rng);
        cond_proj.init(rng);
        for (auto& b : blocks) b.init(rng);
        // final_mod and out stay zero: a fresh network is the zero field.
    }

    template <typename F>
    void for_each(F&& f) {
        for_each(std::string("dit"), f);
    }

    template <typename F>
    void for_each(const std::string& p, F&& f) {
        in_proj.for_each(p + ".in", f);
        time1.for_each(p + ".time1", f);
        time2.for_each(p + ".time2", f);
        f(p + ".cond.null", null_emb);
        for (size_t a = 0; a < attr_emb.size(); ++a)
            f(p + ".cond.attr" + std::to_string(a), attr_emb[a]);
        if (combo_emb.rows() > 0) f(p + ".cond.combo", combo_emb);
        cond_proj.for_each(p + ".cond.proj", f);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].for_each(p + ".block" + std::to_string(i), f);
        final_mod.for_each(p + ".final_mod", f);
        out.for_each(p + ".out", f);
    }
};

namespace detail {

// Sinusoidal features of t in [0, 1]: cos/sin of t scaled into the usual
// diffusion-step range so the frequency ladder actually resolves it.
template <typename S>
Mat<S> time_features(double t, int time_dim) {
    const int half = time_dim / 2;
    Mat<S> row(1, time_dim);
    const double pos = 1000.0 * t;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        row(0, i) = static_cast<S>(std::cos(pos * freq));
        row(0, half + i) = static_cast<S>(std::sin(pos * freq));
    }
    return row;
}

// x * (1 + scale) + shift with [1 x w] row vectors broadcast over rows.
template <typename S>
Var<S> modulate(Var<S> x, Var<S> shift, Var<S> scale) {
    return ad::add_rowvec(ad::add(x, ad::cmul_rowvec(x, scale)), shift);
}

}  // namespace detail

// Condition embedding lookup: Null key -> the learned Null row; otherwise the
// sum of per-attribute embeddings for the assigned attributes, plus the joint
// combination row when the full assignment was seen in training. Unseen full
// combinations therefore fall back to the summed per-attribute embedding.
template <typename S>
Var<S> condition_embedding_t(const ConditionKey& key, DitParams<S>& p, const ConditionSpace& cs,
                             CfgMode mode, const Binder<S>& b) {
    if (key.is_null()) return b(p.null_emb);
    require(static_cast<int>(p.attr_emb.size()) == cs.n_attributes(),
            "dit: parameter/condition-space attribute mismatch");
    const std::vector<int> idx = cs.resolve(key);
    Var<S> acc;
    bool first = true;
    for (int a = 0; a < cs.n_attributes(); ++a) {
        if (idx[a] < 0) continue;
        Var<S> row = ad::gather_rows(b(p.attr_emb[a]), {idx[a]});
        acc = first ? row : ad::add(acc, row);
        first = false;
    }
    if (mode == CfgMode::joint && cs.is_full(idx)) {
        const int combo = cs.find_combo(idx);
        if (combo >= 0) acc = ad::add(acc, ad::gather_rows(b(p.combo_emb), {combo}));
    }
    return acc;
}

// Velocity field v(z_t, t, y) on the tape. z_tok is [m x latent_dim]; the
// result has the same shape. Row-wise ops plus position-free self-attention
// keep the map permutation-equivariant over the m latent tokens.
template <typename S>
Var<S> dit_velocity_t(Var<S> z_tok, double t, const ConditionKey& key, DitParams<S>& p,
                      const ConditionSpace& cs, CfgMode mode, const Binder<S>& b) {
    require(z_tok.cols() == p.in_proj.W.rows(), "dit: latent width mismatch");
    require(t >= 0.0 && t <= 1.0, "dit: t must be in [0, 1]");
    ad::Tape<S>& tape = *b.t;

    Var<S> t_feat = ad::constant(tape, detail::time_features<S>(t, p.time_dim));
    Var<S> t_emb = attention::apply_linear(
        ad::silu(attention::apply_linear(t_feat, p.time1, b)), p.time2, b);
    Var<S> c_emb = attention::apply_linear(condition_embedding_t(key, p, cs, mode, b),
                                           p.cond_proj, b);
    Var<S> c = ad::silu(ad::add(t_emb, c_emb));  // [1 x width]

    const Eigen::Index w = p.cond_proj.W.cols();
    Var<S> h = attention::apply_linear(z_tok, p.in_proj, b);
    for (auto& blk : p.blocks) {
        Var<S> mod = attention::apply_linear(c, blk.mod, b);  // [1 x 6w]
        Var<S> xn = detail::modulate(ad::layer_norm_rows_plain(h), ad::slice_cols(mod, 0, w),
                                     ad::slice_cols(mod, w, w));
        Var<S> att = attention::multihead_attend(
            attention::apply_linear(xn, blk.att.wq, b), attention::apply_linear(xn, blk.att.wk, b),
            attention::apply_linear(xn, blk.att.wv, b), blk.att.n_heads);
        att = attention::apply_linear(att, blk.att.wo, b);
        h = ad::add(h, ad::cmul_rowvec(att, ad::slice_cols(mod, 2 * w, w)));

        Var<S> xm = detail::modulate(ad::layer_norm_rows_plain(h), ad::slice_cols(mod, 3 * w, w),
                                     ad::slice_cols(mod, 4 * w, w));
        Var<S> mlp = attention::apply_mlp(xm, blk.mlp, b);
        h = ad::add(h, ad::cmul_rowvec(mlp, ad::slice_cols(mod, 5 * w, w)));
    }
    Var<S> fm = attention::apply_linear(c, p.final_mod, b);  // [1 x 2w]
    Var<S> hn = detail::modulate(ad::layer_norm_rows_plain(h), ad::slice_cols(fm, 0, w),
                                 ad::slice_cols(fm, w, w));
    return attention::apply_linear(hn, p.out, b);
}

// Frozen-parameter evaluation for sampling and guidance.
template <typename S>
Mat<S> dit_velocity(const Mat<S>& z_tok, double t, const ConditionKey& key, DitParams<S>& p,
                    const ConditionSpace& cs, CfgMode mode) {
    ad::Tape<S> tape;
    Binder<S> b{&tape, false};
    Var<S> z = ad::constant(tape, z_tok);
    return dit_velocity_t(z, t, key, p, cs, mode, b).val();
}

}  // namespace setgen::flow
