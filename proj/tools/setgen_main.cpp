// setgen: two-stage set-generative pipeline driver.
//
//   setgen gen-data    --config cfg.json
//   setgen train-vae   --config cfg.json
//   setgen train-ldm   --config cfg.json
//   setgen sample      --config cfg.json [--n N] [--condition a=v,b=w]
//                      [--omega W | --omegas w1,w2] [--steps K] [--cfg-mode joint|additive]
//   setgen reconstruct --config cfg.json
//   setgen evaluate    --config cfg.json TRUE_FILE GEN_FILE
//   setgen baselines   --config cfg.json
//
// Global flags: --seed, --out, --deterministic override the config file.
// Verbosity via SETGEN_LOG (debug|info|warn|error|off). On failure a
// machine-readable JSON error record goes to stderr and the exit code is 1.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "setgen/cli/commands.hpp"

namespace {

struct GlobalFlags {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    bool deterministic = false;
};

setgen::cli::RunConfig load_config(const GlobalFlags& g) {
    setgen::cli::RunConfig cfg = setgen::cli::RunConfig::from_file(g.config_path);
    if (g.seed_set) {
        cfg.seed = g.seed;
        cfg.echo["seed"] = g.seed;
        if (cfg.has_synthetic) cfg.synthetic.seed = g.seed;
    }
    if (!g.out_dir.empty()) {
        cfg.out_dir = g.out_dir;
        cfg.echo["out_dir"] = g.out_dir;
    }
    if (g.deterministic) {
        cfg.deterministic = true;
        cfg.vae.deterministic = true;
        cfg.echo["deterministic"] = true;
    }
    return cfg;
}

void add_globals(CLI::App* cmd, GlobalFlags& g) {
    cmd->add_option("--config", g.config_path, "run configuration file")->required();
    cmd->add_option("--seed", g.seed, "override the config seed")
        ->each([&g](const std::string&) { g.seed_set = true; });
    cmd->add_option("--out", g.out_dir, "override the config output directory");
    cmd->add_flag("--deterministic", g.deterministic, "force deterministic mode");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"setgen: permutation-invariant VAE + latent flow-matching pipeline"};
    app.require_subcommand(1);

    GlobalFlags g;
    std::string active;

    CLI::App* c_gen = app.add_subcommand("gen-data", "write the configured synthetic dataset");
    add_globals(c_gen, g);

    CLI::App* c_vae = app.add_subcommand("train-vae", "stage-1 VAE training");
    add_globals(c_vae, g);

    CLI::App* c_ldm = app.add_subcommand("train-ldm", "stage-2 latent flow training");
    add_globals(c_ldm, g);

    CLI::App* c_sample = app.add_subcommand("sample", "generate cells from the trained model");
    add_globals(c_sample, g);
    setgen::cli::SampleArgs sample_args;
    c_sample->add_option("--n", sample_args.n, "number of cells");
    c_sample->add_option("--condition", sample_args.condition, "attr=value[,attr=value]")
        ->each([&sample_args](const std::string&) { sample_args.condition_set = true; });
    c_sample->add_option("--omega", sample_args.omega, "joint guidance weight")
        ->each([&sample_args](const std::string&) { sample_args.omega_set = true; });
    c_sample->add_option("--omegas", sample_args.omegas,
                         "additive guidance weights, one per assigned attribute");
    c_sample->add_option("--steps", sample_args.steps, "Euler steps");
    c_sample->add_option("--cfg-mode", sample_args.cfg_mode, "joint|additive");
    c_sample->add_option("--out-name", sample_args.out_name, "output file name");

    CLI::App* c_rec = app.add_subcommand("reconstruct", "holdout RE/PCC/MSE report");
    add_globals(c_rec, g);

    CLI::App* c_eval = app.add_subcommand("evaluate", "W2/MMD2/FD between two dataset files");
    add_globals(c_eval, g);
    std::string true_file, gen_file;
    c_eval->add_option("true_file", true_file, "reference dataset")->required();
    c_eval->add_option("gen_file", gen_file, "generated dataset")->required();

    CLI::App* c_base = app.add_subcommand("baselines", "perturb-mean / context-mean metrics");
    add_globals(c_base, g);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_gen->parsed()) {
            active = "gen-data";
            setgen::cli::cmd_gen_data(load_config(g));
        } else if (c_vae->parsed()) {
            active = "train-vae";
            setgen::cli::cmd_train_vae(load_config(g));
        } else if (c_ldm->parsed()) {
            active = "train-ldm";
            setgen::cli::cmd_train_ldm(load_config(g));
        } else if (c_sample->parsed()) {
            active = "sample";
            setgen::cli::cmd_sample(load_config(g), sample_args);
        } else if (c_rec->parsed()) {
            active = "reconstruct";
            setgen::cli::cmd_reconstruct(load_config(g));
        } else if (c_eval->parsed()) {
            active = "evaluate";
            setgen::cli::cmd_evaluate(true_file, gen_file, load_config(g));
        } else if (c_base->parsed()) {
            active = "baselines";
            setgen::cli::cmd_baselines(load_config(g));
        }
    } catch (const std::exception& e) {
        setgen::cli::json err{{"command", active}, {"error", e.what()}};
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
    return 0;
}
