// Library-level tests for the CLI layer: config parsing (strict unknown-key
// rejection), command artifacts and manifests, determinism of repeated runs,
// the omega=0 == unconditional sampling identity, and self-comparison
// properties of the evaluate command.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "setgen/cli/commands.hpp"

using namespace setgen;
using Catch::Matchers::ContainsSubstring;
using cli::RunConfig;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("setgen_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

long line_count(const std::string& text) {
    long n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// Four classes (2 cell types x ctrl/stim), 12 genes, 30 cells each. Marker
// blocks per type plus a stim response shared across types.
json tiny_synthetic() {
    json classes = json::array();
    for (const std::string& t : {"A", "B"})
        for (const std::string& p : {"ctrl", "stim"}) {
            std::vector<double> prof(12, 3.0);
            const int hi = (t == "A") ? 0 : 3;
            for (int g = hi; g < hi + 3; ++g) prof[g] = 15.0;
            if (p == "stim")
                for (int g = 6; g < 9; ++g) prof[g] = 12.0;
            classes.push_back({{"attributes", {{"cell_type", t}, {"perturbation", p}}},
                               {"profile", prof},
                               {"n_cells", 30},
                               {"alpha", 0.2}});
        }
    return {{"n_genes", 12}, {"classes", classes}};
}

json tiny_config(const std::string& out_dir) {
    return {{"version", 1},
            {"seed", 11},
            {"out_dir", out_dir},
            {"dataset", {{"synthetic", tiny_synthetic()}}},
            {"vae",
             {{"beta", 1e-4},
              {"m", 2},
              {"z", 4},
              {"d_model", 16},
              {"enc_blocks", 1},
              {"dec_blocks", 1},
              {"n_heads", 2},
              {"context_len", 12},
              {"zero_genes_per_cell", 2}}},
            {"optim",
             {{"lr", 2e-3}, {"epochs", 2}, {"batch_size", 16}, {"warmup_steps", 5}}},
            {"flow",
             {{"width", 16},
              {"blocks", 1},
              {"heads", 2},
              {"c_dim", 8},
              {"time_dim", 16},
              {"rho", 0.1},
              {"mode", "joint"},
              {"sigma_min", 1e-4}}},
            {"sampler", {{"steps", 8}, {"omega", 1.0}, {"guidance", "joint"}}},
            {"eval", {{"w2_subsample", 256}, {"pca_k", 6}}},
            {"gen", {{"n", 8}, {"condition", ""}}}};
}

// One trained pipeline (stage 1 + stage 2) shared by every test that only
// reads from it.
const RunConfig& pipeline() {
    static const RunConfig cfg = [] {
        RunConfig c = RunConfig::from_json(tiny_config(fresh_dir("fixture")));
        cli::cmd_train_vae(c);
        cli::cmd_train_ldm(c);
        return c;
    }();
    return cfg;
}

}  // namespace

TEST_CASE("config: minimal file parses with defaults") {
    json j = {{"version", 1},
              {"seed", 5},
              {"out_dir", "/tmp/x"},
              {"dataset", {{"synthetic", tiny_synthetic()}}}};
    RunConfig cfg = RunConfig::from_json(j);
    REQUIRE(cfg.seed == 5);
    REQUIRE(cfg.out_dir == "/tmp/x");
    REQUIRE(cfg.has_synthetic);
    REQUIRE(cfg.synthetic.seed == 5);  // run seed drives the generator
    REQUIRE(cfg.synthetic.classes.size() == 4);
    REQUIRE(cfg.eval.pca_k == 10);
    REQUIRE(cfg.eval.holdout_fraction == 0.25);
    REQUIRE_FALSE(cfg.deterministic);
    REQUIRE_FALSE(cfg.vae.deterministic);

    SECTION("deterministic flag reaches the vae config") {
        j["deterministic"] = true;
        RunConfig d = RunConfig::from_json(j);
        REQUIRE(d.deterministic);
        REQUIRE(d.vae.deterministic);
    }

    SECTION("flow_optim falls back to a copy of optim") {
        j["optim"] = {{"lr", 0.005}, {"epochs", 3}};
        RunConfig d = RunConfig::from_json(j);
        REQUIRE(d.flow_optim.lr == 0.005);
        REQUIRE(d.flow_optim.epochs == 3);
    }

    SECTION("explicit flow_optim wins over the fallback") {
        j["optim"] = {{"lr", 0.005}};
        j["flow_optim"] = {{"lr", 0.001}};
        RunConfig d = RunConfig::from_json(j);
        REQUIRE(d.optim.lr == 0.005);
        REQUIRE(d.flow_optim.lr == 0.001);
    }
}

TEST_CASE("config: strict rejection of malformed files") {
    const json base = {{"version", 1},
                       {"seed", 5},
                       {"out_dir", "/tmp/x"},
                       {"dataset", {{"synthetic", tiny_synthetic()}}}};

    SECTION("unknown top-level key") {
        json j = base;
        j["typo_key"] = 1;
        REQUIRE_THROWS_WITH(RunConfig::from_json(j),
                            ContainsSubstring("unknown key 'typo_key'"));
    }
    SECTION("unknown key inside a section") {
        json j = base;
        j["vae"] = {{"d_modle", 32}};
        REQUIRE_THROWS_WITH(RunConfig::from_json(j),
                            ContainsSubstring("unknown key 'd_modle'"));
    }
    SECTION("unknown key inside a synthetic class") {
        json j = base;
        j["dataset"]["synthetic"]["classes"][0]["n_cell"] = 3;
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("unknown key 'n_cell'"));
    }
    SECTION("unsupported version") {
        json j = base;
        j["version"] = 2;
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("unsupported version 2"));
    }
    SECTION("missing seed") {
        json j = base;
        j.erase("seed");
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("'seed' is mandatory"));
    }
    SECTION("negative seed") {
        json j = base;
        j["seed"] = -3;
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("'seed' is mandatory"));
    }
    SECTION("dataset with both sources") {
        json j = base;
        j["dataset"]["path"] = "/tmp/ds.txt";
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("exactly one"));
    }
    SECTION("dataset with no source") {
        json j = base;
        j["dataset"] = json::object();
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("exactly one"));
    }
    SECTION("bad value type surfaces the key") {
        json j = base;
        j["optim"] = {{"lr", "fast"}};
        REQUIRE_THROWS_WITH(RunConfig::from_json(j), ContainsSubstring("bad value for 'lr'"));
    }
}

TEST_CASE("split: deterministic, seed-keyed, shared shape") {
    const setdata::CountDataset ds = setdata::generate_synthetic(pipeline().synthetic);
    setdata::CountDataset tr1, te1, tr2, te2, tr3, te3;
    cli::detail::split_dataset(ds, 0.25, 11, tr1, te1);
    cli::detail::split_dataset(ds, 0.25, 11, tr2, te2);
    cli::detail::split_dataset(ds, 0.25, 99, tr3, te3);

    REQUIRE(te1.records.size() == 30);  // 0.25 * 120
    REQUIRE(tr1.records.size() == 90);

    auto ids = [](const setdata::CountDataset& d) {
        std::vector<std::string> out;
        for (const auto& r : d.records) out.push_back(r.cell_id);
        return out;
    };
    REQUIRE(ids(te1) == ids(te2));  // same seed, same membership
    REQUIRE(ids(te1) != ids(te3));  // different seed reshuffles

    SECTION("too few records") {
        setdata::CountDataset small = ds;
        small.records.resize(3);
        setdata::CountDataset a, b;
        REQUIRE_THROWS_WITH(cli::detail::split_dataset(small, 0.25, 1, a, b),
                            ContainsSubstring("at least 4"));
    }
}

TEST_CASE("train commands: artifacts, loss tables, manifests") {
    const RunConfig& cfg = pipeline();
    REQUIRE(fs::exists(cfg.out_dir + "/vae.ckpt"));
    REQUIRE(fs::exists(cfg.out_dir + "/ldm.ckpt"));

    // one row per epoch plus the header
    REQUIRE(line_count(slurp(cfg.out_dir + "/vae_loss.csv")) == cfg.optim.epochs + 1);
    REQUIRE(line_count(slurp(cfg.out_dir + "/ldm_loss.csv")) == cfg.flow_optim.epochs + 1);

    const json m = json::parse(slurp(cfg.out_dir + "/train-vae_manifest.json"));
    REQUIRE(m.at("command") == "train-vae");
    REQUIRE(m.at("tool_version") == cli::kToolVersion);
    REQUIRE(m.at("config_version") == cli::kConfigVersion);
    REQUIRE(m.at("config").at("seed") == 11);  // full config echo survives
    REQUIRE(m.at("wall_clock_sec").get<double>() >= 0.0);
    for (const auto& [name, path] : m.at("artifacts").items())
        REQUIRE(fs::exists(path.get<std::string>()));
}

TEST_CASE("checkpoints: round-trip through the loaders") {
    const RunConfig& cfg = pipeline();
    const cli::detail::LoadedVae lv = cli::detail::load_vae_checkpoint(cfg.out_dir + "/vae.ckpt");
    REQUIRE(lv.vocabulary.size() == 12);
    REQUIRE(lv.cfg.m == 2);
    REQUIRE(lv.cfg.z == 4);
    REQUIRE(lv.schema.at("cell_type") == std::vector<std::string>{"A", "B"});
    REQUIRE(lv.schema.at("perturbation") == std::vector<std::string>{"ctrl", "stim"});

    const cli::detail::LoadedLdm ldm = cli::detail::load_ldm_checkpoint(cfg.out_dir + "/ldm.ckpt");
    REQUIRE(ldm.z == lv.cfg.z);
    REQUIRE(ldm.space.attributes.size() == 2);

    SECTION("kind mismatch is an error") {
        REQUIRE_THROWS_WITH(cli::detail::load_vae_checkpoint(cfg.out_dir + "/ldm.ckpt"),
                            ContainsSubstring("want 'vae'"));
        REQUIRE_THROWS_WITH(cli::detail::load_ldm_checkpoint(cfg.out_dir + "/vae.ckpt"),
                            ContainsSubstring("want 'ldm'"));
    }
}

TEST_CASE("determinism: repeated runs are byte-identical") {
    const RunConfig& ref = pipeline();
    json j = tiny_config(fresh_dir("rerun"));
    RunConfig cfg = RunConfig::from_json(j);
    cli::cmd_train_vae(cfg);
    cli::cmd_train_ldm(cfg);
    cli::cmd_sample(cfg);
    cli::cmd_sample(const_cast<const RunConfig&>(ref));
    cli::cmd_reconstruct(cfg);
    cli::cmd_reconstruct(const_cast<const RunConfig&>(ref));

    for (const char* f : {"/vae.ckpt", "/ldm.ckpt", "/generated.txt", "/reconstruct_report.csv",
                          "/vae_loss.csv", "/ldm_loss.csv"})
        REQUIRE(slurp(cfg.out_dir + f) == slurp(ref.out_dir + f));
}

TEST_CASE("sample: omega=0 with a condition equals unconditional sampling") {
    const RunConfig& cfg = pipeline();

    cli::SampleArgs cond;
    cond.n = 10;
    cond.condition = "cell_type=A,perturbation=stim";
    cond.condition_set = true;
    cond.omega = 0.0;
    cond.omega_set = true;
    cond.out_name = "omega0.txt";
    cli::cmd_sample(cfg, cond);

    cli::SampleArgs uncond;
    uncond.n = 10;
    uncond.condition = "";
    uncond.condition_set = true;  // force unconditional regardless of config
    uncond.out_name = "uncond.txt";
    cli::cmd_sample(cfg, uncond);

    REQUIRE(slurp(cfg.out_dir + "/omega0.txt") == slurp(cfg.out_dir + "/uncond.txt"));

    SECTION("generated files are valid datasets with the model schema") {
        const setdata::CountDataset gen = setdata::read_dataset(cfg.out_dir + "/omega0.txt");
        gen.validate();
        REQUIRE(gen.records.size() == 10);
        REQUIRE(gen.vocabulary.size() == 12);
        REQUIRE(gen.attribute_schema.at("cell_type") == std::vector<std::string>{"A", "B"});
    }

    SECTION("unknown condition values are rejected") {
        cli::SampleArgs bad;
        bad.condition = "cell_type=Z";
        bad.condition_set = true;
        REQUIRE_THROWS_WITH(cli::cmd_sample(cfg, bad), ContainsSubstring("unknown category"));
    }
}

TEST_CASE("reconstruct: holdout metrics are sane and reproducible") {
    const RunConfig& cfg = pipeline();
    const cli::ReportResult r1 = cli::cmd_reconstruct(cfg);
    const std::string csv1 = slurp(cfg.out_dir + "/reconstruct_report.csv");
    const cli::ReportResult r2 = cli::cmd_reconstruct(cfg);

    REQUIRE(slurp(cfg.out_dir + "/reconstruct_report.csv") == csv1);
    REQUIRE(r1.report.value("re") == r2.report.value("re"));

    REQUIRE(std::isfinite(r1.report.value("re")));
    REQUIRE(r1.report.value("pcc") > 0.0);   // even a weak model correlates
    REQUIRE(r1.report.value("pcc") <= 1.0);
    REQUIRE(r1.report.value("mse") > 0.0);
}

TEST_CASE("baselines: both baselines reported on the shared split") {
    const RunConfig& cfg = pipeline();
    const cli::ReportResult r = cli::cmd_baselines(cfg);
    for (const char* name :
         {"perturb_mean_pcc", "perturb_mean_mse", "context_mean_pcc", "context_mean_mse"})
        REQUIRE(r.report.has(name));
    // class structure is strong in the fixture, so both baselines correlate
    REQUIRE(r.report.value("perturb_mean_pcc") > 0.3);
    REQUIRE(r.report.value("context_mean_pcc") > 0.3);
    REQUIRE(fs::exists(cfg.out_dir + "/baselines_report.txt"));
}

TEST_CASE("evaluate: a dataset against itself") {
    const RunConfig& cfg = pipeline();
    cli::cmd_gen_data(cfg);  // writes out_dir/dataset.txt
    const std::string ds = cfg.out_dir + "/dataset.txt";
    const cli::ReportResult r = cli::cmd_evaluate(ds, ds, cfg);

    // w2_subsample (256) exceeds n (120), so both sides are permutations of
    // the full set and the optimal assignment has zero cost.
    REQUIRE(r.report.value("w2") == 0.0);

    // unbiased MMD^2 on identical samples lies in [-2/n, 0]
    const double n = 120.0;
    REQUIRE(r.report.value("mmd2_rbf") <= 1e-12);
    REQUIRE(r.report.value("mmd2_rbf") >= -2.0 / n - 1e-12);

    // identical moments up to eigensolver noise
    REQUIRE(r.report.value("fd") >= 0.0);
    REQUIRE(r.report.value("fd") < 1e-8);

    SECTION("report carries the basis fingerprint and sizes") {
        const std::string csv = slurp(cfg.out_dir + "/evaluate_report.csv");
        REQUIRE_THAT(csv, ContainsSubstring("pca_basis"));
        REQUIRE_THAT(csv, ContainsSubstring("n_subsample=120"));
    }

    SECTION("vocabulary mismatch is an error") {
        json other = tiny_config(fresh_dir("othervocab"));
        other["dataset"]["synthetic"]["n_genes"] = 10;
        for (auto& cl : other["dataset"]["synthetic"]["classes"])
            cl["profile"] = std::vector<double>(10, 3.0);
        RunConfig oc = RunConfig::from_json(other);
        cli::cmd_gen_data(oc);
        REQUIRE_THROWS_WITH(cli::cmd_evaluate(ds, oc.out_dir + "/dataset.txt", cfg),
                            ContainsSubstring("schema mismatch"));
    }
}

TEST_CASE("errors: missing inputs fail with clear messages") {
    json j = tiny_config(fresh_dir("empty"));
    const RunConfig cfg = RunConfig::from_json(j);

    SECTION("reconstruct without a checkpoint") {
        REQUIRE_THROWS_WITH(cli::cmd_reconstruct(cfg), ContainsSubstring("missing checkpoint"));
    }
    SECTION("sample without checkpoints") {
        REQUIRE_THROWS_WITH(cli::cmd_sample(cfg), ContainsSubstring("missing checkpoint"));
    }
    SECTION("gen-data needs a synthetic section") {
        json f = j;
        f["dataset"] = {{"path", "/tmp/nonexistent_ds.txt"}};
        REQUIRE_THROWS_WITH(cli::cmd_gen_data(RunConfig::from_json(f)),
                            ContainsSubstring("no dataset.synthetic"));
    }
    SECTION("train on a missing dataset file") {
        json f = j;
        f["dataset"] = {{"path", "/tmp/nonexistent_ds.txt"}};
        REQUIRE_THROWS_WITH(cli::cmd_train_vae(RunConfig::from_json(f)),
                            ContainsSubstring("dataset file not found"));
    }
    SECTION("reconstruct against a dataset with a different vocabulary") {
        json other = tiny_config(fresh_dir("mismatch"));
        other["dataset"]["synthetic"]["n_genes"] = 10;
        for (auto& cl : other["dataset"]["synthetic"]["classes"])
            cl["profile"] = std::vector<double>(10, 3.0);
        RunConfig oc = RunConfig::from_json(other);
        cli::cmd_gen_data(oc);

        json f = tiny_config(pipeline().out_dir);  // trained fixture dir
        f["dataset"] = {{"path", oc.out_dir + "/dataset.txt"}};
        REQUIRE_THROWS_WITH(cli::cmd_reconstruct(RunConfig::from_json(f)),
                            ContainsSubstring("schema mismatch"));
    }
}
