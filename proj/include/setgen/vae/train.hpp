#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "setgen/core/optim.hpp"
#include "setgen/util/log.hpp"
#include "setgen/vae/model.hpp"

namespace setgen::vae {

struct TrainLogRow {
    int epoch = 0;
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

template <typename S>
struct VaeTrainResult {
    VaeParams<S> params;
    std::vector<TrainLogRow> log;
};

// Sample up to k distinct zero-count gene ids for one record.
inline std::vector<int> sample_zero_genes(const setdata::CellRecord& rec, int vocab, int k,
                                          Rng& rng) {
    if (k <= 0) return {};
    std::set<int> expressed;
    for (size_t i = 0; i < rec.gene_ids.size(); ++i)
        if (rec.counts[i] > 0) expressed.insert(rec.gene_ids[i]);
    const int avail = vocab - static_cast<int>(expressed.size());
    std::vector<int> out;
    std::set<int> taken;
    while (static_cast<int>(out.size()) < std::min(k, avail)) {
        const int id = static_cast<int>(rng.below(static_cast<uint64_t>(vocab)));
        if (expressed.count(id) || taken.count(id)) continue;
        taken.insert(id);
        out.push_back(id);
    }
    return out;
}

// Stage-1 training: maximize mini-batch mean ELBO with AdamW + cosine decay.
// Single-threaded and deterministic given the rng.
template <typename S>
VaeTrainResult<S> train_vae(const setdata::CountDataset& ds, const VaeConfig& cfg,
                            const OptimConfig& oc, Rng& rng) {
    cfg.validate();
    oc.validate();
    require(!ds.records.empty(), "train_vae: empty dataset");

    std::vector<int> usable;
    for (size_t i = 0; i < ds.records.size(); ++i) {
        bool any = false;
        for (long c : ds.records[i].counts) any = any || (c > 0);
        if (any) usable.push_back(static_cast<int>(i));
    }
    require(!usable.empty(), "train_vae: every cell is empty");
    if (usable.size() < ds.records.size())
        log::info("train_vae: skipping " + std::to_string(ds.records.size() - usable.size()) +
                  " empty cells");

    VaeTrainResult<S> res;
    res.params = VaeParams<S>(ds.vocabulary.size(), cfg);
    Rng init_rng = rng.derive("vae_init");
    res.params.init(init_rng);

    AdamW<S> opt({oc.lr, 0.9, 0.95, 1e-8, oc.weight_decay, oc.grad_clip});
    res.params.for_each([&](const std::string&, Tensor<S>& t) { opt.add_param(&t); });

    Rng order_rng = rng.derive("vae_order");
    Rng noise_rng = rng.derive("vae_noise");
    Rng zero_rng = rng.derive("vae_zero");

    const long batches_per_epoch =
        (static_cast<long>(usable.size()) + oc.batch_size - 1) / oc.batch_size;
    const long total_steps = static_cast<long>(oc.epochs) * batches_per_epoch;
    long step = 0;

    for (int epoch = 0; epoch < oc.epochs; ++epoch) {
        order_rng.shuffle(usable);
        double ep_total = 0.0, ep_recon = 0.0, ep_kl = 0.0;
        long ep_cells = 0;
        for (long bstart = 0; bstart < static_cast<long>(usable.size());
             bstart += oc.batch_size) {
            const long bend =
                std::min<long>(bstart + oc.batch_size, static_cast<long>(usable.size()));
            ad::Tape<S> tape;
            Binder<S> bind{&tape, true};
            opt.zero_grad();

            Var<S> neg_sum = ad::constant(tape, Mat<S>::Zero(1, 1).eval());
            for (long bi = bstart; bi < bend; ++bi) {
                const auto& rec = ds.records[usable[bi]];
                const auto zeros =
                    sample_zero_genes(rec, ds.vocabulary.size(), cfg.zero_genes_per_cell, zero_rng);
                auto parts = elbo_t(rec, res.params, cfg, noise_rng, bind, zeros);
                neg_sum = ad::sub(neg_sum, parts[0]);
                ep_total += static_cast<double>(parts[0].val()(0, 0));
                ep_recon += static_cast<double>(parts[1].val()(0, 0));
                ep_kl += static_cast<double>(parts[2].val()(0, 0));
                ++ep_cells;
            }
            Var<S> loss = ad::scale(neg_sum, 1.0 / static_cast<double>(bend - bstart));
            const double lv = static_cast<double>(loss.val()(0, 0));
            if (!std::isfinite(lv))
                throw error("train_vae: non-finite loss at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + "); aborting");
            tape.backward(loss.id);
            opt.step(cosine_lr(step, total_steps, oc.lr, oc.lr_min, oc.warmup_steps));
            ++step;
        }
        TrainLogRow row{epoch, ep_total / ep_cells, ep_recon / ep_cells, ep_kl / ep_cells};
        res.log.push_back(row);
        log::info("vae epoch " + std::to_string(epoch) + " elbo " + std::to_string(row.total) +
                  " recon " + std::to_string(row.recon) + " kl " + std::to_string(row.kl));
    }
    return res;
}

}  // namespace setgen::vae
