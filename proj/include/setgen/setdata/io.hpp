#pragma once

#include <fstream>
#include <sstream>

#include "setgen/setdata/types.hpp"
#include "setgen/util/strings.hpp"

namespace setgen::setdata {

// Text format, one record per line:
//   #gene <id> <name>
//   #attr <name> <cat1,cat2,...>
//   <cell_id>\t<attr1=val1;attr2=val2>\t<gid>:<count> <gid>:<count> ...
// Zero counts are omitted. Headers precede records. write-then-read is the
// identity, and a second write is byte-identical.
inline void write_dataset(const CountDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require<io_error>(f.good(), "cannot open " + path + " for writing");
    for (int g = 0; g < ds.vocabulary.size(); ++g)
        f << "#gene " << g << " " << ds.vocabulary.names[g] << "\n";
    for (const auto& [attr, cats] : ds.attribute_schema)
        f << "#attr " << attr << " " << join(cats, ",") << "\n";
    for (const auto& rec : ds.records) {
        f << rec.cell_id << "\t";
        bool first = true;
        for (const auto& [attr, val] : rec.attributes) {
            if (!first) f << ";";
            f << attr << "=" << val;
            first = false;
        }
        f << "\t";
        for (size_t i = 0; i < rec.gene_ids.size(); ++i) {
            if (i) f << " ";
            f << rec.gene_ids[i] << ":" << rec.counts[i];
        }
        f << "\n";
    }
    require<io_error>(f.good(), "write failed for " + path);
}

namespace detail {

inline long parse_long(const std::string& s, int line_no, const std::string& what) {
    require<io_error>(!s.empty(), "line " + std::to_string(line_no) + ": empty " + what);
    size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw io_error("line " + std::to_string(line_no) + ": malformed " + what + " '" + s + "'");
    }
    require<io_error>(pos == s.size(),
                      "line " + std::to_string(line_no) + ": malformed " + what + " '" + s + "'");
    return v;
}

}  // namespace detail

inline CountDataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require<io_error>(f.good(), "cannot open " + path);
    CountDataset ds;
    std::vector<std::string> gene_names;  // indexed by id, grown as headers arrive
    bool in_records = false;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            require<io_error>(!in_records,
                              "line " + std::to_string(line_no) + ": header after records");
            std::istringstream ss(line);
            std::string tag;
            ss >> tag;
            if (tag == "#gene") {
                long id = -1;
                std::string name;
                ss >> id >> name;
                require<io_error>(!ss.fail() && !name.empty(),
                                  "line " + std::to_string(line_no) + ": malformed #gene");
                require<io_error>(id == static_cast<long>(gene_names.size()),
                                  "line " + std::to_string(line_no) +
                                      ": gene ids must be dense and ascending");
                gene_names.push_back(name);
            } else if (tag == "#attr") {
                std::string name, cats;
                ss >> name >> cats;
                require<io_error>(!ss.fail() && !name.empty() && !cats.empty(),
                                  "line " + std::to_string(line_no) + ": malformed #attr");
                require<io_error>(!ds.attribute_schema.count(name),
                                  "line " + std::to_string(line_no) + ": duplicate #attr " + name);
                ds.attribute_schema[name] = split(cats, ',');
            } else {
                throw io_error("line " + std::to_string(line_no) + ": unknown header " + tag);
            }
            continue;
        }
        in_records = true;
        const auto fields = split(line, '\t');
        require<io_error>(fields.size() == 3,
                          "line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        CellRecord rec;
        rec.cell_id = fields[0];
        require<io_error>(!rec.cell_id.empty(),
                          "line " + std::to_string(line_no) + ": empty cell id");
        if (!fields[1].empty()) {
            for (const auto& kv : split(fields[1], ';')) {
                const size_t eq = kv.find('=');
                require<io_error>(eq != std::string::npos && eq > 0,
                                  "line " + std::to_string(line_no) + ": malformed attribute '" +
                                      kv + "'");
                const std::string attr = kv.substr(0, eq), val = kv.substr(eq + 1);
                auto it = ds.attribute_schema.find(attr);
                require<io_error>(it != ds.attribute_schema.end(),
                                  "line " + std::to_string(line_no) + ": unknown attribute " + attr);
                bool found = false;
                for (const auto& c : it->second) found = found || (c == val);
                require<io_error>(found, "line " + std::to_string(line_no) +
                                             ": unknown category '" + val + "' for " + attr);
                rec.attributes[attr] = val;
            }
        }
        if (!fields[2].empty()) {
            std::set<int> seen;
            for (const auto& tok : split(fields[2], ' ')) {
                const size_t colon = tok.find(':');
                require<io_error>(colon != std::string::npos,
                                  "line " + std::to_string(line_no) + ": malformed count token '" +
                                      tok + "'");
                const long gid = detail::parse_long(tok.substr(0, colon), line_no, "gene id");
                const long cnt = detail::parse_long(tok.substr(colon + 1), line_no, "count");
                require<io_error>(gid >= 0 && gid < static_cast<long>(gene_names.size()),
                                  "line " + std::to_string(line_no) + ": unknown gene id " +
                                      std::to_string(gid));
                require<io_error>(cnt >= 0,
                                  "line " + std::to_string(line_no) + ": negative count");
                require<io_error>(seen.insert(static_cast<int>(gid)).second,
                                  "line " + std::to_string(line_no) + ": duplicate gene id " +
                                      std::to_string(gid));
                rec.gene_ids.push_back(static_cast<int>(gid));
                rec.counts.push_back(cnt);
            }
        }
        ds.records.push_back(std::move(rec));
    }
    ds.vocabulary.names = std::move(gene_names);
    ds.validate();
    return ds;
}

}  // namespace setgen::setdata
