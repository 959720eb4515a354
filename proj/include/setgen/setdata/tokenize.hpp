#pragma once

#include <algorithm>

#include "setgen/setdata/types.hpp"

namespace setgen::setdata {

// Expression-based tokenization: keep expressed genes (count > 0) in input
// order, pad the tail with (pad_id, 0). If more than d genes are expressed,
// keep the first d in ascending gene-id order (deterministic truncation; the
// choice of rule is ours, see Open Questions in the docs).
inline TokenizedCell tokenize(const CellRecord& record, int d, int pad_id) {
    require(d >= 1, "tokenize: context length must be >= 1");
    TokenizedCell out;
    out.token_ids.assign(d, pad_id);
    out.token_counts.assign(d, 0);
    out.pad_mask.assign(d, 0);

    std::vector<size_t> expressed;
    for (size_t i = 0; i < record.gene_ids.size(); ++i)
        if (record.counts[i] > 0) expressed.push_back(i);

    if (static_cast<int>(expressed.size()) > d) {
        std::sort(expressed.begin(), expressed.end(), [&](size_t a, size_t b) {
            return record.gene_ids[a] < record.gene_ids[b];
        });
        expressed.resize(d);
    }
    for (size_t k = 0; k < expressed.size(); ++k) {
        out.token_ids[k] = record.gene_ids[expressed[k]];
        out.token_counts[k] = record.counts[expressed[k]];
        out.pad_mask[k] = 1;
    }
    return out;
}

}  // namespace setgen::setdata
