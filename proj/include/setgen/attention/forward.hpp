#pragma once

#include <vector>

#include "setgen/attention/params.hpp"
#include "setgen/core/ops.hpp"
#include "setgen/setdata/types.hpp"

namespace setgen::attention {

using ad::Var;

// Places parameter tensors on a tape. In train mode gradients accumulate into
// each tensor's grad buffer; otherwise parameters enter as frozen leaves.
template <typename S>
struct Binder {
    ad::Tape<S>* t;
    bool train = true;

    Var<S> operator()(Tensor<S>& p) const {
        return Var<S>(*t, t->leaf(&p.v, train ? &p.g : nullptr));
    }
};

template <typename S>
Var<S> apply_linear(Var<S> x, Linear<S>& l, const Binder<S>& b) {
    return ad::add_rowvec(ad::matmul(x, b(l.W)), b(l.b));
}

template <typename S>
Var<S> apply_layer_norm(Var<S> x, LayerNormParams<S>& p, const Binder<S>& b) {
    return ad::layer_norm_rows(x, b(p.gamma), b(p.beta));
}

template <typename S>
Var<S> apply_mlp(Var<S> x, MlpParams<S>& p, const Binder<S>& b) {
    Var<S> gated = ad::cmul(apply_linear(x, p.up, b), ad::silu(apply_linear(x, p.gate, b)));
    return apply_linear(gated, p.down, b);
}

// Single-head scaled dot-product attention over already-projected Q/K/V.
// Masked keys get exactly zero weight (see row_softmax).
template <typename S>
Var<S> attention(Var<S> q, Var<S> k, Var<S> v,
                 const std::vector<uint8_t>* key_mask = nullptr) {
    require(q.cols() == k.cols(), "attention: Q/K width mismatch");
    require(k.rows() == v.rows(), "attention: K/V row mismatch");
    Var<S> scores =
        ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
    return ad::matmul(ad::row_softmax(scores, key_mask), v);
}

// Att_K: concatenation of K attention heads over column blocks of Q/K/V.
template <typename S>
Var<S> multihead_attend(Var<S> q, Var<S> k, Var<S> v, int n_heads,
                        const std::vector<uint8_t>* key_mask = nullptr) {
    require(n_heads >= 1 && q.cols() % n_heads == 0, "multihead: bad head count");
    if (n_heads == 1) return attention(q, k, v, key_mask);
    const Eigen::Index dh = q.cols() / n_heads;
    std::vector<Var<S>> heads;
    heads.reserve(n_heads);
    for (int h = 0; h < n_heads; ++h) {
        heads.push_back(attention(ad::slice_cols(q, h * dh, dh), ad::slice_cols(k, h * dh, dh),
                                  ad::slice_cols(v, h * dh, dh), key_mask));
    }
    return ad::concat_cols(heads);
}

namespace detail {

// Shared MCAB body: s is the query source (pseudoinputs or embedding rows),
// x provides keys/values.
template <typename S>
Var<S> mcab_apply(Var<S> s, Var<S> x, McabParams<S>& p, const Binder<S>& b,
                  const std::vector<uint8_t>* key_mask) {
    Var<S> q = apply_linear(s, p.linear_s, b);
    Var<S> k = apply_linear(apply_layer_norm(x, p.ln_k, b), p.linear_k, b);
    Var<S> v = apply_linear(apply_layer_norm(x, p.ln_v, b), p.linear_v, b);
    Var<S> f = ad::add(q, multihead_attend(apply_layer_norm(q, p.ln_q, b), k, v, p.n_heads, key_mask));
    return ad::add(f, apply_mlp(apply_layer_norm(f, p.ln_f, b), p.mlp, b));
}

}  // namespace detail

// Permutation-invariant pooling: queries are the m learned pseudoinputs, so
// the output has m rows no matter how many input tokens arrive.
template <typename S>
Var<S> mcab_pool(Var<S> x, const std::vector<uint8_t>* key_mask, McabParams<S>& p,
                 const Binder<S>& b) {
    require(p.pseudo.rows() > 0, "mcab_pool: params built without pseudoinputs");
    return detail::mcab_apply(b(p.pseudo), x, p, b, key_mask);
}

// Permutation-equivariant unpooling: queries are selected embedding rows E_I.
template <typename S>
Var<S> mcab_unpool(Var<S> z, Var<S> queries, McabParams<S>& p, const Binder<S>& b) {
    return detail::mcab_apply(queries, z, p, b, nullptr);
}

template <typename S>
Var<S> transformer_block(Var<S> x, TransformerBlockParams<S>& p, const Binder<S>& b) {
    Var<S> y = apply_layer_norm(x, p.ln1, b);
    Var<S> attn = multihead_attend(apply_linear(y, p.att.wq, b), apply_linear(y, p.att.wk, b),
                                   apply_linear(y, p.att.wv, b), p.att.n_heads);
    Var<S> h = ad::add(x, apply_linear(attn, p.att.wo, b));
    return ad::add(h, apply_mlp(apply_layer_norm(h, p.ln2, b), p.mlp, b));
}

// Embedding rows for a list of gene ids (pad id included).
template <typename S>
Var<S> embedding_rows(const std::vector<int>& ids, EmbeddingParams<S>& p, const Binder<S>& b) {
    for (int id : ids)
        require(id >= 0 && id <= p.pad_id(), "embed: id out of range");
    return ad::gather_rows(b(p.E), ids);
}

// Embedding(x_I, I): scalar counts broadcast to D dims, concatenated with the
// id embedding rows, projected 2D -> D. Counts optionally log1p-transformed.
template <typename S>
Var<S> embed(const setdata::TokenizedCell& tc, EmbeddingParams<S>& p, const Binder<S>& b,
             bool log1p_counts = false) {
    const Eigen::Index d = tc.length();
    const Eigen::Index D = p.E.cols();
    Mat<S> counts(d, D);
    for (Eigen::Index i = 0; i < d; ++i) {
        double c = static_cast<double>(tc.token_counts[i]);
        if (log1p_counts) c = std::log1p(c);
        counts.row(i).setConstant(static_cast<S>(c));
    }
    Var<S> rows = embedding_rows(tc.token_ids, p, b);
    Var<S> cat = ad::concat_cols(ad::constant(*b.t, std::move(counts)), rows);
    return apply_linear(cat, p.mix, b);
}

}  // namespace setgen::attention
