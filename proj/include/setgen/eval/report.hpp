#pragma once

// Named metric values with provenance, serialized as structured text and CSV.

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "setgen/core/common.hpp"

namespace setgen::eval {

struct MetricEntry {
    std::string name;
    double value = 0.0;
    std::map<std::string, std::string> meta;  // sample sizes, seed, basis fingerprint
};

class MetricReport {
  public:
    void add(const std::string& name, double value,
             std::map<std::string, std::string> meta = {}) {
        require(std::isfinite(value), "metric report: non-finite value for " + name);
        require(!name.empty(), "metric report: empty metric name");
        for (const auto& e : entries_)
            require(e.name != name, "metric report: duplicate metric " + name);
        entries_.push_back({name, value, std::move(meta)});
    }

    const std::vector<MetricEntry>& entries() const { return entries_; }

    bool has(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return true;
        return false;
    }

    double value(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.value;
        throw error("metric report: no metric named " + name);
    }

    // One block per metric: "name = value" then indented "key: value" lines.
    std::string to_text() const {
        std::ostringstream out;
        for (const auto& e : entries_) {
            out << e.name << " = " << format(e.value) << "\n";
            for (const auto& [k, v] : e.meta) out << "  " << k << ": " << v << "\n";
        }
        return out.str();
    }

    // metric,value,metadata with metadata as semicolon-joined key=value pairs.
    std::string to_csv() const {
        std::ostringstream out;
        out << "metric,value,metadata\n";
        for (const auto& e : entries_) {
            out << e.name << "," << format(e.value) << ",";
            bool first = true;
            for (const auto& [k, v] : e.meta) {
                if (!first) out << ";";
                out << k << "=" << v;
                first = false;
            }
            out << "\n";
        }
        return out.str();
    }

  private:
    static std::string format(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }

    std::vector<MetricEntry> entries_;
};

}  // namespace setgen::eval
