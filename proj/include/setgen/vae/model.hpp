#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "setgen/attention/forward.hpp"
#include "setgen/setdata/tokenize.hpp"
#include "setgen/vae/config.hpp"

namespace setgen::vae {

using attention::Binder;
using ad::Var;

template <typename S>
struct GaussianPosterior {
    Mat<S> mu;       // [m x z]
    Mat<S> log_var;  // [m x z]
};

template <typename S>
struct LatentGrid {
    Mat<S> values;  // [m x z]
};

// NB parameters over a cell's gene set I, aligned with the id list.
template <typename S>
struct NbOutput {
    std::vector<S> ratios;  // softmax simplex p
    std::vector<S> means;   // eta = L * p
    std::vector<S> alpha;   // dispersion per gene in I (copies of the scalar in shared mode)
};

template <typename S>
struct VaeParams {
    attention::EmbeddingParams<S> emb;  // shared by encoder input and decoder queries
    attention::McabParams<S> enc_mcab;
    std::vector<attention::TransformerBlockParams<S>> enc_blocks;
    attention::Linear<S> post_head;  // D_model -> 2z
    attention::Linear<S> dec_in;     // z -> D_model
    std::vector<attention::TransformerBlockParams<S>> dec_blocks;
    attention::McabParams<S> dec_mcab;  // m=0, queries come from E_I
    attention::Linear<S> nb_head;       // D_model -> 1 logit
    Tensor<S> log_alpha;                // [1x1] shared or [1xV] per gene
    int vocab_size = 0;

    VaeParams() = default;
    VaeParams(int vocab, const VaeConfig& cfg)
        : emb(vocab, cfg.d_model),
          enc_mcab(cfg.m, cfg.d_model, cfg.n_heads, 4 * cfg.d_model),
          post_head(cfg.d_model, 2 * cfg.z),
          dec_in(cfg.z, cfg.d_model),
          dec_mcab(0, cfg.d_model, cfg.n_heads, 4 * cfg.d_model),
          nb_head(cfg.d_model, 1),
          log_alpha(1, cfg.dispersion == DispersionMode::shared ? 1 : vocab, false),
          vocab_size(vocab) {
        for (int i = 0; i < cfg.enc_blocks; ++i)
            enc_blocks.emplace_back(cfg.d_model, cfg.n_heads, 4 * cfg.d_model);
        for (int i = 0; i < cfg.dec_blocks; ++i)
            dec_blocks.emplace_back(cfg.d_model, cfg.n_heads, 4 * cfg.d_model);
    }

    void init(Rng& rng) {
        emb.init(rng);
        enc_mcab.init(rng);
        for (auto& b : enc_blocks) b.init(rng);
        post_head.init(rng);
        dec_in.init(rng);
        for (auto& b : dec_blocks) b.init(rng);
        dec_mcab.init(rng);
        nb_head.init(rng);
        // log alpha starts at log 1 = 0
    }

    template <typename F>
    void for_each(F&& f) {
        emb.for_each("emb", f);
        enc_mcab.for_each("enc.mcab", f);
        for (size_t i = 0; i < enc_blocks.size(); ++i)
            enc_blocks[i].for_each("enc.block" + std::to_string(i), f);
        post_head.for_each("enc.post_head", f);
        dec_in.for_each("dec.in", f);
        for (size_t i = 0; i < dec_blocks.size(); ++i)
            dec_blocks[i].for_each("dec.block" + std::to_string(i), f);
        dec_mcab.for_each("dec.mcab", f);
        nb_head.for_each("dec.nb_head", f);
        f("nb.log_alpha", log_alpha);
    }
};

// Taped encoder: Embedding -> MCAB pool -> L transformer blocks -> linear
// head split into (mu, log_var), each [m x z].
template <typename S>
std::pair<Var<S>, Var<S>> encode_t(const setdata::TokenizedCell& tc, VaeParams<S>& p,
                                   const VaeConfig& cfg, const Binder<S>& b) {
    require(tc.n_real() > 0, "encode: empty cell");
    Var<S> x = attention::embed(tc, p.emb, b, cfg.log1p_counts);
    Var<S> h = attention::mcab_pool(x, &tc.pad_mask, p.enc_mcab, b);
    for (auto& blk : p.enc_blocks) h = attention::transformer_block(h, blk, b);
    Var<S> post = attention::apply_linear(h, p.post_head, b);
    return {ad::slice_cols(post, 0, cfg.z), ad::slice_cols(post, cfg.z, cfg.z)};
}

template <typename S>
GaussianPosterior<S> encode(const setdata::TokenizedCell& tc, VaeParams<S>& p,
                            const VaeConfig& cfg) {
    ad::Tape<S> t;
    Binder<S> b{&t, false};
    auto [mu, lv] = encode_t(tc, p, cfg, b);
    return {mu.val(), lv.val()};
}

// Reparameterized draw; means only in deterministic mode.
template <typename S>
LatentGrid<S> sample_posterior(const GaussianPosterior<S>& q, Rng& rng,
                               bool deterministic = false) {
    if (deterministic) return {q.mu};
    Mat<S> eps(q.mu.rows(), q.mu.cols());
    for (Eigen::Index i = 0; i < eps.rows(); ++i)
        for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = static_cast<S>(rng.normal());
    Mat<S> z = q.mu + (q.log_var.array() * S(0.5)).exp().matrix().cwiseProduct(eps);
    return {z};
}

// Taped decoder body up to per-gene logits: Z -> input projection -> L blocks
// -> MCAB unpool with queries E_I -> scalar logit per id. Returns [1 x n].
template <typename S>
Var<S> decode_logits_t(Var<S> z, const std::vector<int>& ids, VaeParams<S>& p,
                       const VaeConfig& cfg, const Binder<S>& b) {
    require(!ids.empty(), "decode: empty gene set");
    for (int id : ids)
        require(id >= 0 && id < p.vocab_size, "decode: unknown gene id " + std::to_string(id));
    Var<S> h = attention::apply_linear(z, p.dec_in, b);
    for (auto& blk : p.dec_blocks) h = attention::transformer_block(h, blk, b);
    Var<S> queries = attention::embedding_rows(ids, p.emb, b);
    Var<S> out = attention::mcab_unpool(h, queries, p.dec_mcab, b);
    return ad::transpose(attention::apply_linear(out, p.nb_head, b));
}

// Taped dispersion row aligned with ids, [1 x n].
template <typename S>
Var<S> dispersion_t(const std::vector<int>& ids, VaeParams<S>& p, const VaeConfig& cfg,
                    const Binder<S>& b) {
    Var<S> la = b(p.log_alpha);
    if (cfg.dispersion == DispersionMode::shared)
        return ad::exp_(ad::broadcast_scalar(la, 1, static_cast<Eigen::Index>(ids.size())));
    return ad::exp_(ad::transpose(ad::gather_rows(ad::transpose(la), ids)));
}

template <typename S>
NbOutput<S> decode(const LatentGrid<S>& z, const std::vector<int>& ids, long library_size,
                   VaeParams<S>& p, const VaeConfig& cfg) {
    require(library_size >= 0, "decode: negative library size");
    ad::Tape<S> t;
    Binder<S> b{&t, false};
    Var<S> logits = decode_logits_t(ad::constant(t, z.values), ids, p, cfg, b);
    Var<S> ratios = ad::row_softmax(logits);
    Var<S> alpha = dispersion_t(ids, p, cfg, b);
    NbOutput<S> out;
    const Eigen::Index n = ratios.cols();
    out.ratios.resize(n);
    out.means.resize(n);
    out.alpha.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.ratios[i] = ratios.val()(0, i);
        out.means[i] = static_cast<S>(library_size) * out.ratios[i];
        out.alpha[i] = alpha.val()(0, i);
    }
    return out;
}

// log NB(x | mean mu, dispersion alpha) via log-gamma; mu = 0 degenerates to
// a point mass at 0.
inline double nb_log_pmf(long x, double mu, double alpha) {
    require(x >= 0, "nb_log_pmf: negative count");
    require(alpha > 0.0, "nb_log_pmf: dispersion must be positive");
    require(mu >= 0.0, "nb_log_pmf: negative mean");
    if (mu == 0.0) return x == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const double r = 1.0 / alpha;
    return std::lgamma(x + r) - std::lgamma(r) - std::lgamma(x + 1.0) +
           r * std::log(r / (r + mu)) + x * std::log(mu / (r + mu));
}

namespace detail {

// Taped NB log-likelihood summed over the gene set. counts enters as data;
// eta and alpha are [1 x n] tape values.
template <typename S>
Var<S> nb_log_lik_t(const std::vector<long>& counts, Var<S> eta, Var<S> alpha,
                    const Binder<S>& b) {
    ad::Tape<S>& t = *b.t;
    const Eigen::Index n = eta.cols();
    Mat<S> x(1, n), lgamma_x1(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(0, i) = static_cast<S>(counts[i]);
        lgamma_x1(0, i) = static_cast<S>(std::lgamma(static_cast<double>(counts[i]) + 1.0));
    }
    Var<S> xv = ad::constant(t, x);
    Var<S> r = ad::exp_(ad::scale(ad::log_(alpha), -1.0));  // 1/alpha, kept differentiable
    Var<S> xr = ad::add(xv, r);
    Var<S> reta = ad::add(r, eta);
    Var<S> terms = ad::add(
        ad::sub(ad::sub(ad::lgamma_(xr), ad::lgamma_(r)), ad::constant(t, lgamma_x1)),
        ad::add(ad::cmul(r, ad::sub(ad::log_(r), ad::log_(reta))),
                ad::cmul(xv, ad::sub(ad::log_(eta), ad::log_(reta)))));
    return ad::sum_all(terms);
}

}  // namespace detail

struct ElboValue {
    double total = 0.0;
    double recon_ll = 0.0;
    double kl = 0.0;
};

// Taped ELBO for one cell. The caller may pass extra zero-count gene ids to
// include in I (cfg.zero_genes_per_cell sampling happens in the training
// loop). Returns (total Var, recon Var, kl Var).
template <typename S>
std::array<Var<S>, 3> elbo_t(const setdata::CellRecord& record, VaeParams<S>& p,
                             const VaeConfig& cfg, Rng& rng, const Binder<S>& b,
                             const std::vector<int>& extra_zero_ids = {}) {
    ad::Tape<S>& t = *b.t;
    const setdata::TokenizedCell tc = setdata::tokenize(record, cfg.context_len, p.emb.pad_id());
    require(tc.n_real() > 0, "elbo: empty cell");
    auto [mu, log_var] = encode_t(tc, p, cfg, b);

    Var<S> z = mu;
    if (!cfg.deterministic) {
        Mat<S> eps(mu.rows(), mu.cols());
        for (Eigen::Index i = 0; i < eps.rows(); ++i)
            for (Eigen::Index j = 0; j < eps.cols(); ++j)
                eps(i, j) = static_cast<S>(rng.normal());
        z = ad::add(mu, ad::cmul(ad::exp_(ad::scale(log_var, 0.5)), ad::constant(t, eps)));
    }

    // Gene set I: the tokenized (possibly truncated) expressed genes plus any
    // sampled zero genes; counts aligned.
    std::vector<int> ids;
    std::vector<long> counts;
    long lib = 0;
    for (int i = 0; i < tc.length(); ++i) {
        if (!tc.pad_mask[i]) continue;
        ids.push_back(tc.token_ids[i]);
        counts.push_back(tc.token_counts[i]);
        lib += tc.token_counts[i];
    }
    for (int id : extra_zero_ids) {
        ids.push_back(id);
        counts.push_back(0);
    }

    Var<S> logits = decode_logits_t(z, ids, p, cfg, b);
    Var<S> ratios = ad::row_softmax(logits);
    Var<S> eta = ad::scale(ratios, static_cast<double>(lib));
    Var<S> alpha = dispersion_t(ids, p, cfg, b);
    Var<S> recon = detail::nb_log_lik_t(counts, eta, alpha, b);

    // KL(q || N(0,I)) = 0.5 sum(mu^2 + e^lv - lv - 1), closed form.
    Var<S> kl_sum = ad::sum_all(ad::sub(ad::add(ad::square(mu), ad::exp_(log_var)), log_var));
    Var<S> kl = ad::cwise_affine(kl_sum, 0.5, -0.5 * static_cast<double>(cfg.m * cfg.z));

    Var<S> total = ad::sub(recon, ad::scale(kl, cfg.effective_beta()));
    return {total, recon, kl};
}

template <typename S>
ElboValue elbo(const setdata::CellRecord& record, VaeParams<S>& p, const VaeConfig& cfg,
               Rng& rng) {
    ad::Tape<S> t;
    Binder<S> b{&t, false};
    auto parts = elbo_t(record, p, cfg, rng, b);
    return {static_cast<double>(parts[0].val()(0, 0)), static_cast<double>(parts[1].val()(0, 0)),
            static_cast<double>(parts[2].val()(0, 0))};
}

}  // namespace setgen::vae
