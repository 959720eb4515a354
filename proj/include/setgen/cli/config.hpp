#pragma once

// Declarative run configuration: one JSON file drives every subcommand.
// Unknown keys are errors so config drift fails loudly instead of silently
// falling back to defaults.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "setgen/core/common.hpp"
#include "setgen/flow/dit.hpp"
#include "setgen/flow/sampler.hpp"
#include "setgen/setdata/types.hpp"
#include "setgen/vae/config.hpp"

namespace setgen::cli {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";
constexpr long kConfigVersion = 1;

namespace detail {

// Tracks which keys a section parser consumed; leftovers are errors.
class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        require<config_error>(j.is_object(), "config: section '" + name_ + "' must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const std::string& key) {
        require<config_error>(has(key), "config: missing key '" + key + "' in " + name_);
        return j_.at(key);
    }

    template <typename T>
    void opt(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw config_error("config: bad value for '" + key + "' in " + name_ + ": " +
                               e.what());
        }
    }

    void finish() {
        for (const auto& [key, unused] : j_.items())
            require<config_error>(seen_.count(key) > 0,
                                  "config: unknown key '" + key + "' in " + name_);
    }

    const json& raw() const { return j_; }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

struct EvalSettings {
    int pca_k = 10;
    double sigma = 0.0;            // 0 selects the median heuristic
    int w2_subsample = 256;        // both sides subsampled to min(n, m, this)
    double holdout_fraction = 0.25;
    std::string type_attr = "cell_type";
    std::string pert_attr = "perturbation";
    std::string ctrl_value = "ctrl";

    void validate() const {
        require<config_error>(pca_k >= 1, "eval: pca_k must be >= 1");
        require<config_error>(sigma >= 0.0, "eval: sigma must be >= 0");
        require<config_error>(w2_subsample >= 2, "eval: w2_subsample must be >= 2");
        require<config_error>(holdout_fraction > 0.0 && holdout_fraction < 1.0,
                              "eval: holdout_fraction must be in (0, 1)");
    }
};

struct GenSettings {
    int n = 100;
    std::string condition;  // "attr=value,..." or empty for unconditional

    void validate() const { require<config_error>(n >= 1, "gen: n must be >= 1"); }
};

struct RunConfig {
    uint64_t seed = 0;
    std::string out_dir;
    bool deterministic = false;

    // exactly one of the two dataset sources
    std::string dataset_path;
    bool has_synthetic = false;
    setdata::SyntheticSpec synthetic;

    vae::VaeConfig vae;
    vae::OptimConfig optim;       // stage 1
    vae::OptimConfig flow_optim;  // stage 2, defaults to `optim` when absent
    flow::FlowConfig flow;
    flow::SamplerConfig sampler;
    EvalSettings eval;
    GenSettings gen;

    json echo;  // raw parsed file, embedded in manifests

    static RunConfig from_json(const json& j);
    static RunConfig from_file(const std::string& path);

    void validate() const {
        require<config_error>(!out_dir.empty(), "config: out_dir must not be empty");
        require<config_error>(dataset_path.empty() != !has_synthetic,
                              "config: dataset needs exactly one of 'path' or 'synthetic'");
        vae.validate();
        optim.validate();
        flow_optim.validate();
        flow.validate();
        sampler.validate();
        eval.validate();
        gen.validate();
    }
};

namespace detail {

inline void parse_vae(const json& j, vae::VaeConfig& cfg) {
    Section s(j, "vae");
    s.opt("beta", cfg.beta);
    s.opt("m", cfg.m);
    s.opt("z", cfg.z);
    s.opt("d_model", cfg.d_model);
    s.opt("enc_blocks", cfg.enc_blocks);
    s.opt("dec_blocks", cfg.dec_blocks);
    s.opt("n_heads", cfg.n_heads);
    s.opt("context_len", cfg.context_len);
    s.opt("log1p_counts", cfg.log1p_counts);
    s.opt("zero_genes_per_cell", cfg.zero_genes_per_cell);
    if (s.has("dispersion"))
        cfg.dispersion = vae::dispersion_from_string(j.at("dispersion").get<std::string>());
    s.finish();
}

inline void parse_optim(const json& j, const std::string& name, vae::OptimConfig& cfg) {
    Section s(j, name);
    s.opt("lr", cfg.lr);
    s.opt("lr_min", cfg.lr_min);
    s.opt("warmup_steps", cfg.warmup_steps);
    s.opt("epochs", cfg.epochs);
    s.opt("batch_size", cfg.batch_size);
    s.opt("weight_decay", cfg.weight_decay);
    s.opt("grad_clip", cfg.grad_clip);
    s.finish();
}

inline void parse_flow(const json& j, flow::FlowConfig& cfg) {
    Section s(j, "flow");
    s.opt("width", cfg.width);
    s.opt("blocks", cfg.blocks);
    s.opt("heads", cfg.heads);
    s.opt("c_dim", cfg.c_dim);
    s.opt("time_dim", cfg.time_dim);
    s.opt("rho", cfg.rho);
    s.opt("sigma_min", cfg.interp.sigma_min);
    if (s.has("mode")) cfg.mode = flow::cfg_mode_from_string(j.at("mode").get<std::string>());
    s.finish();
}

inline void parse_sampler(const json& j, flow::SamplerConfig& cfg) {
    Section s(j, "sampler");
    s.opt("steps", cfg.steps);
    s.opt("omega", cfg.omega);
    s.opt("omegas", cfg.omegas);
    if (s.has("guidance"))
        cfg.guidance = flow::cfg_mode_from_string(j.at("guidance").get<std::string>());
    s.finish();
}

inline void parse_eval(const json& j, EvalSettings& cfg) {
    Section s(j, "eval");
    s.opt("pca_k", cfg.pca_k);
    s.opt("sigma", cfg.sigma);
    s.opt("w2_subsample", cfg.w2_subsample);
    s.opt("holdout_fraction", cfg.holdout_fraction);
    s.opt("type_attr", cfg.type_attr);
    s.opt("pert_attr", cfg.pert_attr);
    s.opt("ctrl_value", cfg.ctrl_value);
    s.finish();
}

inline void parse_gen(const json& j, GenSettings& cfg) {
    Section s(j, "gen");
    s.opt("n", cfg.n);
    s.opt("condition", cfg.condition);
    s.finish();
}

inline setdata::SyntheticSpec parse_synthetic(const json& j, uint64_t run_seed) {
    Section s(j, "dataset.synthetic");
    setdata::SyntheticSpec spec;
    spec.seed = run_seed;
    spec.n_genes = s.at("n_genes").get<int>();
    const json& classes = s.at("classes");
    require<config_error>(classes.is_array() && !classes.empty(),
                          "config: dataset.synthetic.classes must be a non-empty array");
    for (const auto& cj : classes) {
        Section c(cj, "dataset.synthetic.classes[]");
        setdata::SyntheticClass cl;
        cl.attributes = c.at("attributes").get<std::map<std::string, std::string>>();
        cl.profile = c.at("profile").get<std::vector<double>>();
        cl.n_cells = c.at("n_cells").get<long>();
        c.opt("alpha", cl.alpha);
        c.finish();
        spec.classes.push_back(std::move(cl));
    }
    s.finish();
    spec.validate();
    return spec;
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const json& j) {
    detail::Section s(j, "config");
    RunConfig cfg;
    cfg.echo = j;

    const long version = s.at("version").get<long>();
    require<config_error>(version == kConfigVersion,
                          "config: unsupported version " + std::to_string(version) +
                              " (want " + std::to_string(kConfigVersion) + ")");
    const bool seed_ok = s.has("seed") && j.at("seed").is_number_integer() &&
                         (j.at("seed").is_number_unsigned() ||
                          j.at("seed").get<long long>() >= 0);
    require<config_error>(seed_ok,
                          "config: 'seed' is mandatory and must be a non-negative integer");
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.out_dir = s.at("out_dir").get<std::string>();
    s.opt("deterministic", cfg.deterministic);
    if (cfg.deterministic) cfg.vae.deterministic = true;

    {
        detail::Section d(s.at("dataset"), "dataset");
        if (d.has("path")) cfg.dataset_path = d.raw().at("path").get<std::string>();
        if (d.has("synthetic")) {
            cfg.has_synthetic = true;
            cfg.synthetic = detail::parse_synthetic(d.raw().at("synthetic"), cfg.seed);
        }
        d.finish();
    }

    if (s.has("vae")) detail::parse_vae(j.at("vae"), cfg.vae);
    if (cfg.deterministic) cfg.vae.deterministic = true;
    if (s.has("optim")) detail::parse_optim(j.at("optim"), "optim", cfg.optim);
    cfg.flow_optim = cfg.optim;
    if (s.has("flow_optim")) detail::parse_optim(j.at("flow_optim"), "flow_optim", cfg.flow_optim);
    if (s.has("flow")) detail::parse_flow(j.at("flow"), cfg.flow);
    if (s.has("sampler")) detail::parse_sampler(j.at("sampler"), cfg.sampler);
    if (s.has("eval")) detail::parse_eval(j.at("eval"), cfg.eval);
    if (s.has("gen")) detail::parse_gen(j.at("gen"), cfg.gen);
    s.finish();

    cfg.validate();
    return cfg;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    require<io_error>(f.good(), "config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw config_error("config: " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

}  // namespace setgen::cli
