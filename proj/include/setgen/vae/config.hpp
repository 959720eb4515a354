#pragma once

#include <string>

#include "setgen/core/common.hpp"

namespace setgen::vae {

enum class DispersionMode { shared, per_gene };

inline DispersionMode dispersion_from_string(const std::string& s) {
    if (s == "shared") return DispersionMode::shared;
    if (s == "per_gene") return DispersionMode::per_gene;
    throw config_error("unknown dispersion mode '" + s + "' (shared|per_gene)");
}

inline std::string to_string(DispersionMode m) {
    return m == DispersionMode::shared ? "shared" : "per_gene";
}

struct VaeConfig {
    double beta = 1e-5;           // KL weight
    int m = 8;                    // latent tokens
    int z = 4;                    // dims per latent token
    int d_model = 64;
    int enc_blocks = 2;
    int dec_blocks = 2;
    int n_heads = 4;
    int context_len = 128;        // d
    DispersionMode dispersion = DispersionMode::shared;
    bool deterministic = false;   // beta = 0, encoder returns means only
    bool log1p_counts = false;
    int zero_genes_per_cell = 0;  // sampled zero-count genes added to I during training

    void validate() const {
        require<config_error>(beta >= 0.0, "vae: beta must be >= 0");
        require<config_error>(m >= 1 && z >= 1 && d_model >= 1, "vae: positive dims required");
        require<config_error>(enc_blocks >= 0 && dec_blocks >= 0, "vae: negative block count");
        require<config_error>(n_heads >= 1 && d_model % n_heads == 0,
                              "vae: D_model must divide by head count");
        require<config_error>(context_len >= 1, "vae: context length must be >= 1");
        require<config_error>(zero_genes_per_cell >= 0, "vae: negative zero_genes_per_cell");
    }

    double effective_beta() const { return deterministic ? 0.0 : beta; }
};

struct OptimConfig {
    double lr = 1e-3;
    double lr_min = 0.0;
    long warmup_steps = 0;
    int epochs = 20;
    int batch_size = 64;
    double weight_decay = 0.01;
    double grad_clip = 1.0;

    void validate() const {
        require<config_error>(lr > 0.0, "optim: lr must be positive");
        require<config_error>(epochs >= 1, "optim: epochs must be >= 1");
        require<config_error>(batch_size >= 1, "optim: batch size must be >= 1");
    }
};

}  // namespace setgen::vae
