#pragma once

// Multi-attribute condition handling for the latent prior. A condition key
// assigns categories to a subset of the dataset's attributes; the empty key
// is the unconditional Null token. The condition space fixes the attribute
// order, the category indices, and (in joint mode) the table of attribute
// combinations observed during training.

#include <map>
#include <string>
#include <vector>

#include "setgen/core/common.hpp"
#include "setgen/util/strings.hpp"
#include "json.hpp"

namespace setgen::flow {

enum class CfgMode { joint, additive };

inline std::string to_string(CfgMode m) {
    return m == CfgMode::joint ? "joint" : "additive";
}

inline CfgMode cfg_mode_from_string(const std::string& s) {
    if (s == "joint") return CfgMode::joint;
    if (s == "additive") return CfgMode::additive;
    throw config_error("unknown cfg mode: " + s + " (expected joint or additive)");
}

// Attribute -> category assignments. Empty map = Null (unconditional).
struct ConditionKey {
    std::map<std::string, std::string> values;

    bool is_null() const { return values.empty(); }

    static ConditionKey null() { return {}; }

    // "attr=value,attr=value" with attributes in map (sorted) order.
    std::string str() const {
        if (values.empty()) return "<null>";
        std::vector<std::string> parts;
        for (const auto& [k, v] : values) parts.push_back(k + "=" + v);
        return join(parts, ",");
    }

    // Parses "attr=value[,attr=value...]"; empty string -> Null.
    static ConditionKey parse(const std::string& text) {
        ConditionKey key;
        if (trim(text).empty()) return key;
        for (const std::string& part : split(text, ',')) {
            const std::string p = trim(part);
            const auto eq = p.find('=');
            require(eq != std::string::npos && eq > 0 && eq + 1 < p.size(),
                    "condition: malformed assignment '" + p + "' (want attr=value)");
            const std::string attr = trim(p.substr(0, eq));
            const std::string val = trim(p.substr(eq + 1));
            require(key.values.count(attr) == 0,
                    "condition: duplicate attribute '" + attr + "'");
            key.values[attr] = val;
        }
        return key;
    }

    bool operator==(const ConditionKey& o) const { return values == o.values; }
    bool operator<(const ConditionKey& o) const { return values < o.values; }
};

struct ConditionSpace {
    // Attribute names in canonical (sorted) order with their category lists.
    std::vector<std::string> attributes;
    std::vector<std::vector<std::string>> categories;  // per attribute
    // Joint combinations observed in training, each as one category index per
    // attribute (full assignments only). Order fixes the combo table rows.
    std::vector<std::vector<int>> combos;

    static ConditionSpace from_schema(
        const std::map<std::string, std::vector<std::string>>& schema) {
        ConditionSpace cs;
        for (const auto& [name, cats] : schema) {
            require(!cats.empty(), "condition space: attribute '" + name +
                                       "' has no categories");
            cs.attributes.push_back(name);
            cs.categories.push_back(cats);
        }
        return cs;
    }

    int n_attributes() const { return static_cast<int>(attributes.size()); }

    int attribute_index(const std::string& name) const {
        for (int i = 0; i < n_attributes(); ++i)
            if (attributes[i] == name) return i;
        throw config_error("condition space: unknown attribute '" + name + "'");
    }

    int category_index(int attr, const std::string& value) const {
        const auto& cats = categories.at(attr);
        for (int i = 0; i < static_cast<int>(cats.size()); ++i)
            if (cats[i] == value) return i;
        throw config_error("condition space: unknown category '" + value +
                           "' for attribute '" + attributes.at(attr) + "'");
    }

    // Validates a key against the schema and returns per-attribute category
    // indices in canonical order, -1 for attributes the key leaves unset.
    std::vector<int> resolve(const ConditionKey& key) const {
        std::vector<int> idx(attributes.size(), -1);
        for (const auto& [attr, value] : key.values) {
            const int a = attribute_index(attr);
            idx[a] = category_index(a, value);
        }
        return idx;
    }

    bool is_full(const std::vector<int>& idx) const {
        for (int v : idx)
            if (v < 0) return false;
        return true;
    }

    // Registers the full combination if unseen; returns its row.
    int add_combo(const std::vector<int>& idx) {
        require(is_full(idx), "condition space: combo must set every attribute");
        const int found = find_combo(idx);
        if (found >= 0) return found;
        combos.push_back(idx);
        return static_cast<int>(combos.size()) - 1;
    }

    // Row in the combo table, or -1 if this combination was never seen.
    int find_combo(const std::vector<int>& idx) const {
        for (int i = 0; i < static_cast<int>(combos.size()); ++i)
            if (combos[i] == idx) return i;
        return -1;
    }

    // Collects every full attribute assignment present in the records.
    template <typename Records>
    void collect_combos(const Records& records) {
        for (const auto& rec : records) {
            ConditionKey key;
            for (const auto& [a, v] : rec.attributes) key.values[a] = v;
            const std::vector<int> idx = resolve(key);
            if (is_full(idx)) add_combo(idx);
        }
    }

    ConditionKey key_of_combo(int row) const {
        require(row >= 0 && row < static_cast<int>(combos.size()),
                "condition space: combo row out of range");
        ConditionKey key;
        for (int a = 0; a < n_attributes(); ++a)
            key.values[attributes[a]] = categories[a][combos[row][a]];
        return key;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["attributes"] = attributes;
        j["categories"] = categories;
        j["combos"] = combos;
        return j;
    }

    static ConditionSpace from_json(const nlohmann::json& j) {
        ConditionSpace cs;
        cs.attributes = j.at("attributes").get<std::vector<std::string>>();
        cs.categories = j.at("categories").get<std::vector<std::vector<std::string>>>();
        cs.combos = j.at("combos").get<std::vector<std::vector<int>>>();
        require(cs.attributes.size() == cs.categories.size(),
                "condition space: attribute/category arity mismatch");
        for (const auto& combo : cs.combos)
            require(combo.size() == cs.attributes.size(),
                    "condition space: malformed combo row");
        return cs;
    }
};

}  // namespace setgen::flow
