#pragma once

#include "setgen/core/rng.hpp"
#include "setgen/setdata/types.hpp"

namespace setgen::setdata {

// Draw a dataset from per-class NB profiles. Pure function of the spec:
// classes, cells, and genes are visited in a fixed order on a stream derived
// from spec.seed. Genes with mean 0 never touch the stream, so all-zero
// profiles yield all-zero counts without perturbing later draws.
inline CountDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    CountDataset ds;
    ds.vocabulary = GeneVocabulary::numbered(spec.n_genes);
    for (const auto& cl : spec.classes) {
        for (const auto& [attr, val] : cl.attributes) {
            auto& cats = ds.attribute_schema[attr];
            bool found = false;
            for (const auto& c : cats) found = found || (c == val);
            if (!found) cats.push_back(val);
        }
    }

    Rng rng = Rng(spec.seed).derive("synthetic");
    long cell_counter = 0;
    for (const auto& cl : spec.classes) {
        for (long i = 0; i < cl.n_cells; ++i) {
            CellRecord rec;
            rec.cell_id = "c" + std::to_string(cell_counter++);
            rec.attributes = cl.attributes;
            for (int g = 0; g < spec.n_genes; ++g) {
                const double mu = cl.profile[g];
                if (mu <= 0.0) continue;
                const long x = rng.negative_binomial(mu, cl.alpha);
                if (x > 0) {
                    rec.gene_ids.push_back(g);
                    rec.counts.push_back(x);
                }
            }
            ds.records.push_back(std::move(rec));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace setgen::setdata
