#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "setgen/core/common.hpp"

namespace setgen::setdata {

// Index universe of genes. pad_id is one past the last valid gene id and has
// its own embedding row but never appears in data.
struct GeneVocabulary {
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }
    int pad_id() const { return size(); }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& n : names) {
            require(!n.empty(), "vocabulary: empty gene name");
            require(seen.insert(n).second, "vocabulary: duplicate gene name " + n);
        }
    }

    static GeneVocabulary numbered(int n_genes, const std::string& prefix = "g") {
        GeneVocabulary v;
        v.names.reserve(n_genes);
        for (int i = 0; i < n_genes; ++i) v.names.push_back(prefix + std::to_string(i));
        return v;
    }
};

// One observed cell: the expressed set I with counts x_I plus attribute labels.
struct CellRecord {
    std::string cell_id;
    std::vector<int> gene_ids;
    std::vector<long> counts;
    std::map<std::string, std::string> attributes;

    long library_size() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

    void validate(int vocab_size) const {
        require(gene_ids.size() == counts.size(), "record " + cell_id + ": ids/counts length mismatch");
        std::set<int> seen;
        for (size_t i = 0; i < gene_ids.size(); ++i) {
            require(gene_ids[i] >= 0 && gene_ids[i] < vocab_size,
                    "record " + cell_id + ": gene id out of range");
            require(seen.insert(gene_ids[i]).second,
                    "record " + cell_id + ": duplicate gene id " + std::to_string(gene_ids[i]));
            require(counts[i] >= 0, "record " + cell_id + ": negative count");
        }
    }
};

// Fixed-length token view of one cell: ids + counts padded to d.
struct TokenizedCell {
    std::vector<int> token_ids;
    std::vector<long> token_counts;
    std::vector<uint8_t> pad_mask;  // 1 = real token

    int length() const { return static_cast<int>(token_ids.size()); }
    int n_real() const {
        int n = 0;
        for (uint8_t m : pad_mask) n += (m != 0);
        return n;
    }
};

struct CountDataset {
    GeneVocabulary vocabulary;
    std::map<std::string, std::vector<std::string>> attribute_schema;
    std::vector<CellRecord> records;

    void validate() const {
        vocabulary.validate();
        for (const auto& [attr, cats] : attribute_schema) {
            require(!cats.empty(), "schema: attribute " + attr + " has no categories");
            std::set<std::string> seen(cats.begin(), cats.end());
            require(seen.size() == cats.size(), "schema: duplicate category in " + attr);
        }
        for (const auto& rec : records) {
            rec.validate(vocabulary.size());
            for (const auto& [attr, val] : rec.attributes) {
                auto it = attribute_schema.find(attr);
                require(it != attribute_schema.end(),
                        "record " + rec.cell_id + ": unknown attribute " + attr);
                bool found = false;
                for (const auto& c : it->second) found = found || (c == val);
                require(found, "record " + rec.cell_id + ": unknown category " + val + " for " + attr);
            }
        }
    }
};

// One homogeneous synthetic class: NB(mean=profile[g], dispersion alpha) per gene.
struct SyntheticClass {
    std::map<std::string, std::string> attributes;
    std::vector<double> profile;  // per-gene mean, length n_genes
    double alpha = 0.5;
    long n_cells = 0;
};

struct SyntheticSpec {
    int n_genes = 0;
    std::vector<SyntheticClass> classes;
    uint64_t seed = 0;

    void validate() const {
        require(n_genes >= 1, "synthetic spec: n_genes must be >= 1");
        require(!classes.empty(), "synthetic spec: no classes");
        for (const auto& cl : classes) {
            require(cl.alpha > 0.0, "synthetic spec: dispersion must be positive");
            require(static_cast<int>(cl.profile.size()) == n_genes,
                    "synthetic spec: profile length != n_genes");
            for (double m : cl.profile)
                require(m >= 0.0, "synthetic spec: negative mean in profile");
            require(cl.n_cells >= 0, "synthetic spec: negative n_cells");
        }
    }
};

}  // namespace setgen::setdata
