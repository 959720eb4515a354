#pragma once

// End-to-end sampling: guided latents -> frozen decoder -> NB count draws.
// Library sizes come from a log-normal fit per training condition; partial
// or unseen keys pool the matching conditions and fall back to the global
// fit when nothing matches.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "setgen/flow/sampler.hpp"
#include "setgen/setdata/types.hpp"
#include "setgen/vae/model.hpp"
#include "json.hpp"

namespace setgen::flow {

struct LibraryModel {
    // Sufficient statistics of log(library size) per full attribute
    // assignment observed in training.
    struct Group {
        std::map<std::string, std::string> attrs;
        long n = 0;
        double sum_log = 0.0;
        double sumsq_log = 0.0;
    };
    std::vector<Group> groups;
    Group global;

    nlohmann::json to_json() const {
        nlohmann::json j;
        auto enc = [](const Group& g) {
            return nlohmann::json{{"attrs", g.attrs},
                                  {"n", g.n},
                                  {"sum_log", g.sum_log},
                                  {"sumsq_log", g.sumsq_log}};
        };
        j["global"] = enc(global);
        j["groups"] = nlohmann::json::array();
        for (const auto& g : groups) j["groups"].push_back(enc(g));
        return j;
    }

    static LibraryModel from_json(const nlohmann::json& j) {
        LibraryModel m;
        auto dec = [](const nlohmann::json& e) {
            Group g;
            g.attrs = e.at("attrs").get<std::map<std::string, std::string>>();
            g.n = e.at("n").get<long>();
            g.sum_log = e.at("sum_log").get<double>();
            g.sumsq_log = e.at("sumsq_log").get<double>();
            return g;
        };
        m.global = dec(j.at("global"));
        for (const auto& e : j.at("groups")) m.groups.push_back(dec(e));
        return m;
    }
};

inline LibraryModel fit_library_model(const setdata::CountDataset& ds) {
    LibraryModel m;
    for (const auto& rec : ds.records) {
        const long L = rec.library_size();
        if (L <= 0) continue;  // empty cells carry no library information
        const double logL = std::log(static_cast<double>(L));
        m.global.n += 1;
        m.global.sum_log += logL;
        m.global.sumsq_log += logL * logL;
        LibraryModel::Group* grp = nullptr;
        for (auto& g : m.groups)
            if (g.attrs == rec.attributes) grp = &g;
        if (!grp) {
            m.groups.push_back({rec.attributes, 0, 0.0, 0.0});
            grp = &m.groups.back();
        }
        grp->n += 1;
        grp->sum_log += logL;
        grp->sumsq_log += logL * logL;
    }
    require(m.global.n > 0, "fit_library_model: no non-empty cells");
    return m;
}

// Draws a library size for the key: pools every training group whose
// attributes agree with the key on all assigned attributes; empty match set
// (or the Null key) uses the global fit.
inline long sample_library_size(const LibraryModel& m, const ConditionKey& key, Rng& rng) {
    long n = 0;
    double sum = 0.0, sumsq = 0.0;
    for (const auto& g : m.groups) {
        bool match = true;
        for (const auto& [a, v] : key.values) {
            const auto it = g.attrs.find(a);
            match = match && it != g.attrs.end() && it->second == v;
        }
        if (!match) continue;
        n += g.n;
        sum += g.sum_log;
        sumsq += g.sumsq_log;
    }
    if (n == 0) {
        n = m.global.n;
        sum = m.global.sum_log;
        sumsq = m.global.sumsq_log;
    }
    require(n > 0, "sample_library_size: empty library model");
    const double mu = sum / static_cast<double>(n);
    const double var = std::max(0.0, sumsq / static_cast<double>(n) - mu * mu);
    const double L = std::exp(rng.normal(mu, std::sqrt(var)));
    return std::max<long>(1, std::llround(L));
}

// Generates n cells under the condition key over the gene set `gene_ids`.
// Zero guidance means unconditional sampling outright: the key is dropped
// before it can touch the field, the library fit, or the record attributes,
// so the output is bitwise what an unconditioned call produces.
// Zero draws stay out of the sparse record, matching the dataset convention.
template <typename S>
std::vector<setdata::CellRecord> generate_cells(int n, const ConditionKey& key,
                                                const std::vector<int>& gene_ids,
                                                vae::VaeParams<S>& vae,
                                                const vae::VaeConfig& vcfg, DitParams<S>& dit,
                                                const ConditionSpace& cs, CfgMode trained_mode,
                                                const SamplerConfig& sc, const LibraryModel& lib,
                                                Rng& rng) {
    require(!gene_ids.empty(), "generate_cells: empty gene set");
    cs.resolve(key);  // unknown conditions fail even when guidance ignores them
    bool guided = sc.guidance == CfgMode::joint && sc.omega != 0.0;
    for (double w : sc.omegas)
        guided = guided || (sc.guidance == CfgMode::additive && w != 0.0);
    const ConditionKey eff = guided ? key : ConditionKey::null();
    Rng latent_rng = rng.derive("gen_latents");
    Rng count_rng = rng.derive("gen_counts");
    const auto latents =
        sample_latents<S>(n, vcfg.m, vcfg.z, eff, sc, dit, cs, trained_mode, latent_rng);
    std::vector<setdata::CellRecord> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const long L = sample_library_size(lib, eff, count_rng);
        const auto nb = vae::decode(vae::LatentGrid<S>{latents[i]}, gene_ids, L, vae, vcfg);
        setdata::CellRecord rec;
        rec.cell_id = "gen" + std::to_string(i);
        rec.attributes = eff.values;
        for (size_t g = 0; g < gene_ids.size(); ++g) {
            const long x = static_cast<long>(count_rng.negative_binomial(
                static_cast<double>(nb.means[g]), static_cast<double>(nb.alpha[g])));
            if (x > 0) {
                rec.gene_ids.push_back(gene_ids[g]);
                rec.counts.push_back(x);
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace setgen::flow
