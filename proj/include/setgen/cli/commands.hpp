#pragma once

// Library-level subcommand implementations. Each command is a pure function
// of (config, explicit arguments): it reads its inputs, writes its artifacts
// under out_dir, and returns the paths it wrote via the manifest.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "setgen/cli/config.hpp"
#include "setgen/core/serialize.hpp"
#include "setgen/eval/baselines.hpp"
#include "setgen/eval/distances.hpp"
#include "setgen/eval/metrics.hpp"
#include "setgen/eval/pca.hpp"
#include "setgen/eval/report.hpp"
#include "setgen/flow/generate.hpp"
#include "setgen/flow/train.hpp"
#include "setgen/setdata/io.hpp"
#include "setgen/setdata/synthetic.hpp"
#include "setgen/vae/train.hpp"

namespace setgen::cli {

struct RunManifest {
    std::string command;
    json config_echo;
    std::map<std::string, std::string> artifacts;
    double wall_clock_sec = 0.0;

    std::string path(const std::string& out_dir) const {
        return out_dir + "/" + command + "_manifest.json";
    }
};

namespace detail {

inline void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        require<io_error>(f.good(), "cannot open " + tmp + " for writing");
        f << content;
        require<io_error>(f.good(), "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline void write_manifest(const RunManifest& m, const std::string& out_dir) {
    json j;
    j["command"] = m.command;
    j["tool_version"] = kToolVersion;
    j["config_version"] = kConfigVersion;
    j["config"] = m.config_echo;
    j["artifacts"] = m.artifacts;
    j["wall_clock_sec"] = m.wall_clock_sec;
    write_text_atomic(m.path(out_dir), j.dump(2) + "\n");
}

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }

  private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_ = clock::now();
};

inline void ensure_out_dir(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
}

inline setdata::CountDataset load_dataset(const RunConfig& cfg) {
    if (cfg.has_synthetic) return setdata::generate_synthetic(cfg.synthetic);
    require<io_error>(std::filesystem::exists(cfg.dataset_path),
                      "dataset file not found: " + cfg.dataset_path);
    setdata::CountDataset ds = setdata::read_dataset(cfg.dataset_path);
    ds.validate();
    return ds;
}

// Deterministic holdout split driven by the run seed.
inline void split_dataset(const setdata::CountDataset& ds, double holdout_fraction,
                          uint64_t seed, setdata::CountDataset& train,
                          setdata::CountDataset& test) {
    require(ds.records.size() >= 4, "split: need at least 4 records");
    std::vector<int> idx(ds.records.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(seed).derive("split");
    rng.shuffle(idx);
    const size_t n_test =
        std::max<size_t>(1, static_cast<size_t>(holdout_fraction * ds.records.size()));
    require(n_test < ds.records.size(), "split: holdout leaves no training data");

    train.vocabulary = test.vocabulary = ds.vocabulary;
    train.attribute_schema = test.attribute_schema = ds.attribute_schema;
    for (size_t i = 0; i < idx.size(); ++i)
        (i < n_test ? test : train).records.push_back(ds.records[idx[i]]);
}

inline json vae_config_json(const vae::VaeConfig& c) {
    return {{"beta", c.beta},
            {"m", c.m},
            {"z", c.z},
            {"d_model", c.d_model},
            {"enc_blocks", c.enc_blocks},
            {"dec_blocks", c.dec_blocks},
            {"n_heads", c.n_heads},
            {"context_len", c.context_len},
            {"dispersion", vae::to_string(c.dispersion)},
            {"deterministic", c.deterministic},
            {"log1p_counts", c.log1p_counts},
            {"zero_genes_per_cell", c.zero_genes_per_cell}};
}

inline vae::VaeConfig vae_config_from_json(const json& j) {
    vae::VaeConfig c;
    c.beta = j.at("beta").get<double>();
    c.m = j.at("m").get<int>();
    c.z = j.at("z").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.enc_blocks = j.at("enc_blocks").get<int>();
    c.dec_blocks = j.at("dec_blocks").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.context_len = j.at("context_len").get<int>();
    c.dispersion = vae::dispersion_from_string(j.at("dispersion").get<std::string>());
    c.deterministic = j.at("deterministic").get<bool>();
    c.log1p_counts = j.at("log1p_counts").get<bool>();
    c.zero_genes_per_cell = j.at("zero_genes_per_cell").get<int>();
    return c;
}

inline json flow_config_json(const flow::FlowConfig& c, int z) {
    return {{"width", c.width},     {"blocks", c.blocks},
            {"heads", c.heads},     {"c_dim", c.c_dim},
            {"time_dim", c.time_dim}, {"rho", c.rho},
            {"mode", flow::to_string(c.mode)}, {"sigma_min", c.interp.sigma_min},
            {"z", z}};
}

inline flow::FlowConfig flow_config_from_json(const json& j, int& z_out) {
    flow::FlowConfig c;
    c.width = j.at("width").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.c_dim = j.at("c_dim").get<int>();
    c.time_dim = j.at("time_dim").get<int>();
    c.rho = j.at("rho").get<double>();
    c.mode = flow::cfg_mode_from_string(j.at("mode").get<std::string>());
    c.interp.sigma_min = j.at("sigma_min").get<double>();
    z_out = j.at("z").get<int>();
    return c;
}

struct LoadedVae {
    vae::VaeParams<double> params;
    vae::VaeConfig cfg;
    setdata::GeneVocabulary vocabulary;
    std::map<std::string, std::vector<std::string>> schema;

    LoadedVae(int vocab, const vae::VaeConfig& c) : params(vocab, c), cfg(c) {}
};

inline LoadedVae load_vae_checkpoint(const std::string& path) {
    require<io_error>(std::filesystem::exists(path), "missing checkpoint: " + path);
    ser::Checkpoint ck = ser::read_checkpoint(path);
    require(ck.kind == "vae", "checkpoint " + path + " is kind '" + ck.kind + "', want 'vae'");
    vae::VaeConfig cfg = vae_config_from_json(ck.config);
    const auto names = ck.extra.at("vocab").get<std::vector<std::string>>();
    LoadedVae lv(static_cast<int>(names.size()), cfg);
    lv.vocabulary.names = names;
    lv.schema = ck.extra.at("schema").get<std::map<std::string, std::vector<std::string>>>();
    ser::unpack_params<double>(ck, lv.params);
    return lv;
}

struct LoadedLdm {
    flow::DitParams<double> params;
    flow::FlowConfig cfg;
    int z = 0;
    flow::ConditionSpace space;
    flow::LibraryModel library;

    LoadedLdm(const flow::FlowConfig& c, int z_, const flow::ConditionSpace& cs)
        : params(c, z_, cs), cfg(c), z(z_), space(cs) {}
};

inline LoadedLdm load_ldm_checkpoint(const std::string& path) {
    require<io_error>(std::filesystem::exists(path), "missing checkpoint: " + path);
    ser::Checkpoint ck = ser::read_checkpoint(path);
    require(ck.kind == "ldm", "checkpoint " + path + " is kind '" + ck.kind + "', want 'ldm'");
    int z = 0;
    flow::FlowConfig cfg = flow_config_from_json(ck.config, z);
    flow::ConditionSpace cs = flow::ConditionSpace::from_json(ck.extra.at("condition_space"));
    LoadedLdm ldm(cfg, z, cs);
    ldm.library = flow::LibraryModel::from_json(ck.extra.at("library_model"));
    ser::unpack_params<double>(ck, ldm.params);
    return ldm;
}

inline void require_vocab_match(const setdata::GeneVocabulary& a,
                                const setdata::GeneVocabulary& b, const std::string& what) {
    require(a.names == b.names, "schema mismatch between dataset and checkpoint: " + what);
}

inline std::string loss_csv(const std::vector<vae::TrainLogRow>& log) {
    std::ostringstream out;
    out << "epoch,elbo,recon_ll,kl\n";
    for (const auto& r : log)
        out << r.epoch << "," << r.total << "," << r.recon << "," << r.kl << "\n";
    return out.str();
}

inline std::string loss_csv(const std::vector<flow::FlowLogRow>& log) {
    std::ostringstream out;
    out << "epoch,fm_loss\n";
    for (const auto& r : log) out << r.epoch << "," << r.loss << "\n";
    return out.str();
}

// Dense [n x V] predicted NB means: encode at the posterior mean, decode over
// the tokenized gene set with the cell's tokenized library size. Genes
// outside the token window predict 0.
inline Mat<double> reconstruction_means(const setdata::CountDataset& ds,
                                        vae::VaeParams<double>& p, const vae::VaeConfig& cfg) {
    Mat<double> pred =
        Mat<double>::Zero(static_cast<Eigen::Index>(ds.records.size()), ds.vocabulary.size());
    for (size_t r = 0; r < ds.records.size(); ++r) {
        const auto tc = setdata::tokenize(ds.records[r], cfg.context_len, p.emb.pad_id());
        if (tc.n_real() == 0) continue;
        std::vector<int> ids;
        long lib = 0;
        for (int i = 0; i < tc.length(); ++i) {
            if (!tc.pad_mask[i]) continue;
            ids.push_back(tc.token_ids[i]);
            lib += tc.token_counts[i];
        }
        const vae::GaussianPosterior<double> q = vae::encode(tc, p, cfg);
        const vae::LatentGrid<double> z{q.mu};
        const vae::NbOutput<double> out = vae::decode(z, ids, lib, p, cfg);
        for (size_t i = 0; i < ids.size(); ++i)
            pred(static_cast<Eigen::Index>(r), ids[i]) = out.means[i];
    }
    return pred;
}

inline Mat<double> subsample_rows(const Mat<double>& X, Eigen::Index n, Rng& rng) {
    require(n <= X.rows(), "subsample: n exceeds available rows");
    std::vector<int> idx(X.rows());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    Mat<double> out(n, X.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = X.row(idx[i]);
    return out;
}

}  // namespace detail

// Writes the synthetic dataset described by the config to out_dir/dataset.txt.
inline RunManifest cmd_gen_data(const RunConfig& cfg) {
    detail::Stopwatch sw;
    require<config_error>(cfg.has_synthetic,
                          "gen-data: config has no dataset.synthetic section");
    detail::ensure_out_dir(cfg);
    const setdata::CountDataset ds = setdata::generate_synthetic(cfg.synthetic);
    const std::string path = cfg.out_dir + "/dataset.txt";
    setdata::write_dataset(ds, path);

    RunManifest m{"gen-data", cfg.echo, {{"dataset", path}}, sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return m;
}

// Stage-1 training on the train split; emits vae.ckpt and a loss table.
inline RunManifest cmd_train_vae(const RunConfig& cfg) {
    detail::Stopwatch sw;
    detail::ensure_out_dir(cfg);
    const setdata::CountDataset full = detail::load_dataset(cfg);
    setdata::CountDataset train, test;
    detail::split_dataset(full, cfg.eval.holdout_fraction, cfg.seed, train, test);

    Rng rng = Rng(cfg.seed).derive("train_vae");
    vae::VaeTrainResult<double> res = vae::train_vae<double>(train, cfg.vae, cfg.optim, rng);

    ser::Checkpoint ck;
    ck.kind = "vae";
    ck.config = detail::vae_config_json(cfg.vae);
    ck.extra = {{"vocab", full.vocabulary.names}, {"schema", full.attribute_schema}};
    ck.rng_state = rng.state();
    ck.step = static_cast<long>(res.log.size());
    ser::pack_params<double>(res.params, ck);
    const std::string ckpt_path = cfg.out_dir + "/vae.ckpt";
    ser::write_checkpoint(ck, ckpt_path);

    const std::string loss_path = cfg.out_dir + "/vae_loss.csv";
    detail::write_text_atomic(loss_path, detail::loss_csv(res.log));

    RunManifest m{"train-vae", cfg.echo, {{"checkpoint", ckpt_path}, {"loss_table", loss_path}},
                  sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return m;
}

// Stage-2 training against the frozen stage-1 checkpoint; emits ldm.ckpt
// (network + condition space + library-size model) and a loss table.
inline RunManifest cmd_train_ldm(const RunConfig& cfg) {
    detail::Stopwatch sw;
    detail::ensure_out_dir(cfg);
    const setdata::CountDataset full = detail::load_dataset(cfg);
    setdata::CountDataset train, test;
    detail::split_dataset(full, cfg.eval.holdout_fraction, cfg.seed, train, test);

    detail::LoadedVae lv = detail::load_vae_checkpoint(cfg.out_dir + "/vae.ckpt");
    detail::require_vocab_match(lv.vocabulary, full.vocabulary, "gene vocabulary");

    Rng rng = Rng(cfg.seed).derive("train_ldm");
    flow::LdmTrainResult<double> res =
        flow::train_ldm<double>(train, lv.params, lv.cfg, cfg.flow, cfg.flow_optim, rng);
    const flow::LibraryModel lib = flow::fit_library_model(train);

    ser::Checkpoint ck;
    ck.kind = "ldm";
    ck.config = detail::flow_config_json(cfg.flow, lv.cfg.z);
    ck.extra = {{"condition_space", res.space.to_json()}, {"library_model", lib.to_json()}};
    ck.rng_state = rng.state();
    ck.step = static_cast<long>(res.log.size());
    ser::pack_params<double>(res.params, ck);
    const std::string ckpt_path = cfg.out_dir + "/ldm.ckpt";
    ser::write_checkpoint(ck, ckpt_path);

    const std::string loss_path = cfg.out_dir + "/ldm_loss.csv";
    detail::write_text_atomic(loss_path, detail::loss_csv(res.log));

    RunManifest m{"train-ldm", cfg.echo, {{"checkpoint", ckpt_path}, {"loss_table", loss_path}},
                  sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return m;
}

struct SampleArgs {
    int n = 0;                // 0 = take from config
    std::string condition;    // empty = take from config
    bool condition_set = false;
    double omega = 0.0;
    bool omega_set = false;
    std::vector<double> omegas;
    int steps = 0;            // 0 = take from config
    std::string cfg_mode;     // empty = take from config
    std::string out_name = "generated.txt";
};

// Draws cells from the two-stage model and writes them as a dataset file.
inline RunManifest cmd_sample(const RunConfig& cfg, const SampleArgs& args = {}) {
    detail::Stopwatch sw;
    detail::ensure_out_dir(cfg);
    detail::LoadedVae lv = detail::load_vae_checkpoint(cfg.out_dir + "/vae.ckpt");
    detail::LoadedLdm ldm = detail::load_ldm_checkpoint(cfg.out_dir + "/ldm.ckpt");
    require(ldm.z == lv.cfg.z, "schema mismatch between dataset and checkpoint: latent width");

    flow::SamplerConfig sc = cfg.sampler;
    if (args.steps > 0) sc.steps = args.steps;
    if (args.omega_set) sc.omega = args.omega;
    if (!args.omegas.empty()) sc.omegas = args.omegas;
    if (!args.cfg_mode.empty()) sc.guidance = flow::cfg_mode_from_string(args.cfg_mode);
    sc.validate();

    const int n = args.n > 0 ? args.n : cfg.gen.n;
    const std::string cond_text = args.condition_set ? args.condition : cfg.gen.condition;
    const flow::ConditionKey key = flow::ConditionKey::parse(cond_text);

    std::vector<int> gene_ids(lv.vocabulary.size());
    std::iota(gene_ids.begin(), gene_ids.end(), 0);

    Rng rng = Rng(cfg.seed).derive("sample");
    std::vector<setdata::CellRecord> cells =
        flow::generate_cells(n, key, gene_ids, lv.params, lv.cfg, ldm.params, ldm.space,
                             ldm.cfg.mode, sc, ldm.library, rng);

    setdata::CountDataset out;
    out.vocabulary = lv.vocabulary;
    out.attribute_schema = lv.schema;
    out.records = std::move(cells);
    out.validate();
    const std::string path = cfg.out_dir + "/" + args.out_name;
    setdata::write_dataset(out, path);

    RunManifest m{"sample", cfg.echo, {{"generated", path}}, sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return m;
}

struct ReportResult {
    RunManifest manifest;
    eval::MetricReport report;
};

// Holdout reconstruction metrics (RE, PCC, MSE) for the stage-1 checkpoint.
inline ReportResult cmd_reconstruct(const RunConfig& cfg) {
    detail::Stopwatch sw;
    detail::ensure_out_dir(cfg);
    const setdata::CountDataset full = detail::load_dataset(cfg);
    setdata::CountDataset train, test;
    detail::split_dataset(full, cfg.eval.holdout_fraction, cfg.seed, train, test);

    detail::LoadedVae lv = detail::load_vae_checkpoint(cfg.out_dir + "/vae.ckpt");
    detail::require_vocab_match(lv.vocabulary, full.vocabulary, "gene vocabulary");

    const Mat<double> truth = eval::dense_counts(test);
    const Mat<double> pred = detail::reconstruction_means(test, lv.params, lv.cfg);
    const eval::PearsonResult pcc = eval::pearson(truth, pred);
    const double re = eval::recon_error(test, lv.params, lv.cfg);

    std::map<std::string, std::string> meta{
        {"n_test", std::to_string(test.records.size())},
        {"seed", std::to_string(cfg.seed)}};
    eval::MetricReport rep;
    rep.add("re", re, meta);
    meta["genes_skipped"] = std::to_string(pcc.genes_skipped);
    rep.add("pcc", pcc.value, meta);
    rep.add("mse", eval::mse(truth, pred),
            {{"n_test", std::to_string(test.records.size())},
             {"seed", std::to_string(cfg.seed)}});

    const std::string txt = cfg.out_dir + "/reconstruct_report.txt";
    const std::string csv = cfg.out_dir + "/reconstruct_report.csv";
    detail::write_text_atomic(txt, rep.to_text());
    detail::write_text_atomic(csv, rep.to_csv());

    RunManifest m{"reconstruct", cfg.echo, {{"report_text", txt}, {"report_csv", csv}},
                  sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return {m, rep};
}

// Distribution metrics between two dataset files on a PCA basis fit to the
// first (true) one: W2 on an equal-size seeded subsample, unbiased RBF MMD2,
// and the Frechet distance.
inline ReportResult cmd_evaluate(const std::string& true_path, const std::string& gen_path,
                                 const RunConfig& cfg) {
    detail::Stopwatch sw;
    detail::ensure_out_dir(cfg);
    require<io_error>(std::filesystem::exists(true_path), "dataset file not found: " + true_path);
    require<io_error>(std::filesystem::exists(gen_path), "dataset file not found: " + gen_path);
    const setdata::CountDataset ds_true = setdata::read_dataset(true_path);
    const setdata::CountDataset ds_gen = setdata::read_dataset(gen_path);
    require(ds_true.vocabulary.names == ds_gen.vocabulary.names,
            "schema mismatch: gene vocabularies differ between " + true_path + " and " +
                gen_path);

    const Mat<double> X = eval::dense_counts(ds_true);
    const Mat<double> Y = eval::dense_counts(ds_gen);
    const eval::PcaBasis basis = eval::pca_fit(X, cfg.eval.pca_k);
    const Mat<double> Xp = eval::pca_project(X, basis);
    const Mat<double> Yp = eval::pca_project(Y, basis);

    eval::KernelConfig kc;
    kc.sigma = cfg.eval.sigma;
    const double mmd2 = eval::mmd2_rbf(Xp, Yp, kc);

    const Eigen::Index n_w2 = std::min<Eigen::Index>(
        {Xp.rows(), Yp.rows(), static_cast<Eigen::Index>(cfg.eval.w2_subsample)});
    Rng rng = Rng(cfg.seed).derive("w2_subsample");
    const double w2 = eval::w2_discrete(detail::subsample_rows(Xp, n_w2, rng),
                                        detail::subsample_rows(Yp, n_w2, rng));
    const double fd = eval::frechet_distance(Xp, Yp);

    const std::map<std::string, std::string> meta{
        {"n_true", std::to_string(Xp.rows())},
        {"n_gen", std::to_string(Yp.rows())},
        {"seed", std::to_string(cfg.seed)},
        {"pca_basis", basis.fingerprint}};
    eval::MetricReport rep;
    auto m2 = meta;
    m2["n_subsample"] = std::to_string(n_w2);
    rep.add("w2", w2, m2);
    rep.add("mmd2_rbf", mmd2, meta);
    rep.add("fd", fd, meta);

    const std::string txt = cfg.out_dir + "/evaluate_report.txt";
    const std::string csv = cfg.out_dir + "/evaluate_report.csv";
    detail::write_text_atomic(txt, rep.to_text());
    detail::write_text_atomic(csv, rep.to_csv());

    RunManifest m{"evaluate", cfg.echo, {{"report_text", txt}, {"report_csv", csv}},
                  sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return {m, rep};
}

// Perturb-mean and context-mean baselines on the same holdout split the
// model commands use, reported as PCC/MSE against the held-out counts.
inline ReportResult cmd_baselines(const RunConfig& cfg) {
    detail::Stopwatch sw;
    detail::ensure_out_dir(cfg);
    const setdata::CountDataset full = detail::load_dataset(cfg);
    setdata::CountDataset train, test;
    detail::split_dataset(full, cfg.eval.holdout_fraction, cfg.seed, train, test);

    const Mat<double> truth = eval::dense_counts(test);
    const Mat<double> pm = eval::perturb_mean_baseline(train, test, cfg.eval.type_attr,
                                                       cfg.eval.pert_attr, cfg.eval.ctrl_value);
    const Mat<double> cm = eval::context_mean_baseline(train, test, cfg.eval.type_attr,
                                                       cfg.eval.pert_attr, cfg.eval.ctrl_value);

    const std::map<std::string, std::string> meta{
        {"n_train", std::to_string(train.records.size())},
        {"n_test", std::to_string(test.records.size())},
        {"seed", std::to_string(cfg.seed)}};
    eval::MetricReport rep;
    const eval::PearsonResult pm_pcc = eval::pearson(truth, pm);
    const eval::PearsonResult cm_pcc = eval::pearson(truth, cm);
    rep.add("perturb_mean_pcc", pm_pcc.value, meta);
    rep.add("perturb_mean_mse", eval::mse(truth, pm), meta);
    rep.add("context_mean_pcc", cm_pcc.value, meta);
    rep.add("context_mean_mse", eval::mse(truth, cm), meta);

    const std::string txt = cfg.out_dir + "/baselines_report.txt";
    const std::string csv = cfg.out_dir + "/baselines_report.csv";
    detail::write_text_atomic(txt, rep.to_text());
    detail::write_text_atomic(csv, rep.to_csv());

    RunManifest m{"baselines", cfg.echo, {{"report_text", txt}, {"report_csv", csv}},
                  sw.seconds()};
    detail::write_manifest(m, cfg.out_dir);
    return {m, rep};
}

}  // namespace setgen::cli
