#pragma once

// Stage-2 training: conditional flow matching on latents produced by a
// frozen stage-1 model. The VAE parameter hash is taken before and after
// and must not move.

#include <cmath>
#include <string>
#include <vector>

#include "setgen/core/optim.hpp"
#include "setgen/core/serialize.hpp"
#include "setgen/flow/dit.hpp"
#include "setgen/util/log.hpp"
#include "setgen/vae/model.hpp"
#include "setgen/vae/train.hpp"

namespace setgen::flow {

struct FlowLogRow {
    int epoch = 0;
    double loss = 0.0;
};

template <typename S>
struct LdmTrainResult {
    DitParams<S> params;
    ConditionSpace space;
    std::vector<FlowLogRow> log;
};

// Condition dropout: joint mode drops the whole key to Null with probability
// rho; additive mode drops each assigned attribute independently so the
// network also learns the single-attribute conditionals it needs at guidance
// time.
inline ConditionKey dropout_condition(const ConditionKey& key, CfgMode mode, double rho,
                                      Rng& rng) {
    if (mode == CfgMode::joint) {
        return rng.uniform() < rho ? ConditionKey::null() : key;
    }
    ConditionKey out;
    for (const auto& [attr, value] : key.values)
        if (!(rng.uniform() < rho)) out.values[attr] = value;
    return out;
}

// ||v - u||^2 summed over all entries of the latent grid.
template <typename S>
Var<S> fm_residual_t(Var<S> v, const Mat<S>& u, ad::Tape<S>& tape) {
    require(v.rows() == u.rows() && v.cols() == u.cols(), "fm: velocity/target shape mismatch");
    return ad::sum_all(ad::square(ad::sub(v, ad::constant(tape, u))));
}

// Loss for one (z1, key) pair at a given draw of t and z0.
template <typename S>
Var<S> fm_sample_loss_t(const Mat<S>& z1, const ConditionKey& key, double t, const Mat<S>& z0,
                        DitParams<S>& p, const ConditionSpace& cs, const FlowConfig& cfg,
                        const Binder<S>& b) {
    const Interpolated<S> path = interpolate(z1, z0, t, cfg.interp);
    Var<S> z_t = ad::constant(*b.t, path.z_t);
    Var<S> v = dit_velocity_t(z_t, t, key, p, cs, cfg.mode, b);
    return fm_residual_t(v, path.u, *b.t);
}

namespace detail {

template <typename S>
struct FmDraw {
    double t = 0.0;
    Mat<S> z0;
    ConditionKey key;
};

// One stream drives t, then z0 (row major), then dropout, in that order.
template <typename S>
FmDraw<S> fm_draw(const Mat<S>& z1, const ConditionKey& key, const FlowConfig& cfg, Rng& rng) {
    FmDraw<S> d;
    d.t = rng.uniform();
    d.z0.resize(z1.rows(), z1.cols());
    for (Eigen::Index r = 0; r < d.z0.rows(); ++r)
        for (Eigen::Index c = 0; c < d.z0.cols(); ++c) d.z0(r, c) = static_cast<S>(rng.normal());
    d.key = dropout_condition(key, cfg.mode, cfg.rho, rng);
    return d;
}

}  // namespace detail

// Monte-Carlo batch loss (no gradients): mean over pairs of
// ||v(z_t, t, y') - u||^2 with t ~ U(0,1), z0 ~ N(0,I) and y' the key after
// dropout. `used` (if given) receives the post-dropout keys.
template <typename S>
double fm_loss(const std::vector<Mat<S>>& latents, const std::vector<ConditionKey>& keys,
               DitParams<S>& p, const ConditionSpace& cs, const FlowConfig& cfg, Rng& rng,
               std::vector<ConditionKey>* used = nullptr) {
    require(latents.size() == keys.size(), "fm_loss: latent/key count mismatch");
    require(!latents.empty(), "fm_loss: empty batch");
    if (used) used->clear();
    double total = 0.0;
    for (size_t i = 0; i < latents.size(); ++i) {
        const auto d = detail::fm_draw(latents[i], keys[i], cfg, rng);
        if (used) used->push_back(d.key);
        ad::Tape<S> tape;
        Binder<S> b{&tape, false};
        total += static_cast<double>(
            fm_sample_loss_t(latents[i], d.key, d.t, d.z0, p, cs, cfg, b).val()(0, 0));
    }
    return total / static_cast<double>(latents.size());
}

// Encoder latents plus condition keys for every non-empty cell: posterior
// means in deterministic mode, one reparameterized draw otherwise.
template <typename S>
void encode_latents(const setdata::CountDataset& ds, vae::VaeParams<S>& vae,
                    const vae::VaeConfig& vcfg, Rng& rng, std::vector<Mat<S>>& latents,
                    std::vector<ConditionKey>& keys) {
    latents.clear();
    keys.clear();
    long skipped = 0;
    for (const auto& rec : ds.records) {
        bool any = false;
        for (long c : rec.counts) any = any || (c > 0);
        if (!any) {
            ++skipped;
            continue;
        }
        const auto tc = setdata::tokenize(rec, vcfg.context_len, ds.vocabulary.pad_id());
        const auto q = vae::encode(tc, vae, vcfg);
        latents.push_back(vae::sample_posterior(q, rng, vcfg.deterministic).values);
        ConditionKey key;
        for (const auto& [a, v] : rec.attributes) key.values[a] = v;
        keys.push_back(key);
    }
    require(!latents.empty(), "train_ldm: every cell is empty");
    if (skipped > 0)
        log::info("train_ldm: skipping " + std::to_string(skipped) + " empty cells");
}

// Stage-2 training loop. The stage-1 parameters are only read (frozen leaf
// bindings); a before/after hash guards that contract.
template <typename S>
LdmTrainResult<S> train_ldm(const setdata::CountDataset& ds, vae::VaeParams<S>& vae,
                            const vae::VaeConfig& vcfg, const FlowConfig& fcfg,
                            const vae::OptimConfig& oc, Rng& rng) {
    vcfg.validate();
    fcfg.validate();
    oc.validate();
    const uint64_t vae_hash_before = ser::params_hash<S>(vae);

    std::vector<Mat<S>> latents;
    std::vector<ConditionKey> keys;
    Rng latent_rng = rng.derive("ldm_latents");
    encode_latents(ds, vae, vcfg, latent_rng, latents, keys);

    LdmTrainResult<S> res;
    res.space = ConditionSpace::from_schema(ds.attribute_schema);
    res.space.collect_combos(ds.records);
    for (const auto& k : keys) res.space.resolve(k);  // reject malformed keys early

    res.params = DitParams<S>(fcfg, vcfg.z, res.space);
    Rng init_rng = rng.derive("ldm_init");
    res.params.init(init_rng);

    AdamW<S> opt({oc.lr, 0.9, 0.95, 1e-8, oc.weight_decay, oc.grad_clip});
    res.params.for_each("dit", [&](const std::string&, Tensor<S>& t) { opt.add_param(&t); });

    Rng order_rng = rng.derive("ldm_order");
    Rng noise_rng = rng.derive("ldm_noise");

    std::vector<int> order(latents.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    const long n = static_cast<long>(latents.size());
    const long batches_per_epoch = (n + oc.batch_size - 1) / oc.batch_size;
    const long total_steps = static_cast<long>(oc.epochs) * batches_per_epoch;
    long step = 0;

    for (int epoch = 0; epoch < oc.epochs; ++epoch) {
        order_rng.shuffle(order);
        double ep_loss = 0.0;
        long ep_count = 0;
        for (long bstart = 0; bstart < n; bstart += oc.batch_size) {
            const long bend = std::min<long>(bstart + oc.batch_size, n);
            ad::Tape<S> tape;
            Binder<S> bind{&tape, true};
            opt.zero_grad();

            Var<S> sum = ad::constant(tape, Mat<S>::Zero(1, 1).eval());
            for (long bi = bstart; bi < bend; ++bi) {
                const int idx = order[bi];
                const auto d = detail::fm_draw(latents[idx], keys[idx], fcfg, noise_rng);
                sum = ad::add(sum,
                              fm_sample_loss_t(latents[idx], d.key, d.t, d.z0, res.params,
                                               res.space, fcfg, bind));
            }
            Var<S> loss = ad::scale(sum, 1.0 / static_cast<double>(bend - bstart));
            const double lv = static_cast<double>(loss.val()(0, 0));
            if (!std::isfinite(lv))
                throw error("train_ldm: non-finite loss at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + "); aborting");
            ep_loss += lv * static_cast<double>(bend - bstart);
            ep_count += bend - bstart;
            tape.backward(loss.id);
            opt.step(cosine_lr(step, total_steps, oc.lr, oc.lr_min, oc.warmup_steps));
            ++step;
        }
        FlowLogRow row{epoch, ep_loss / static_cast<double>(ep_count)};
        res.log.push_back(row);
        log::info("ldm epoch " + std::to_string(epoch) + " loss " + std::to_string(row.loss));
    }

    require(ser::params_hash<S>(vae) == vae_hash_before,
            "train_ldm: frozen VAE parameters changed during stage 2");
    return res;
}

}  // namespace setgen::flow
