#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "schema_knowledge.hpp"
#include "text.hpp"

namespace kriq {

struct RelationalTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column_index(std::string_view column) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == column) return i;
        return std::nullopt;
    }

    /// Throws ArityMismatch / MalformedTable when the table is not rectangular
    /// or column names repeat.
    void check() const {
        std::set<std::string> seen;
        for (const auto& c : columns)
            if (!seen.insert(c).second) throw error(errc::malformed_table, name + ": duplicate column " + c);
        for (std::size_t r = 0; r < rows.size(); ++r)
            if (rows[r].size() != columns.size())
                throw error(errc::arity_mismatch, name + " row " + std::to_string(r + 1) + " has " +
                                                      std::to_string(rows[r].size()) + " cells, expected " +
                                                      std::to_string(columns.size()));
    }
};

/// Parses delimited text whose first line holds the column names.
inline RelationalTable parse_table(std::string name, std::string_view csv) {
    auto rows = text::parse_csv(csv);
    RelationalTable t{std::move(name), {}, {}};
    if (rows.empty()) return t;
    for (auto& c : rows.front()) t.columns.push_back(text::trim(c));
    t.rows.assign(rows.begin() + 1, rows.end());
    for (auto& r : t.rows)
        for (auto& cell : r) cell = text::trim(cell);
    t.check();
    return t;
}

/// Reads `<dir>/<Table>.csv`; the table is named after the file stem.
inline RelationalTable read_table(const std::filesystem::path& file) {
    return parse_table(file.stem().string(), text::read_file(file.string()));
}

/// One <concept, primary key, attribute, value> row of the canonical
/// database. Identity ignores the virtual flag.
struct CanonicalFact {
    std::string concept_name;
    std::string primary_key;
    std::string attribute;
    std::string value;
    bool is_virtual = false;

    auto tie() const { return std::tie(concept_name, primary_key, attribute, value); }
    bool operator==(const CanonicalFact& o) const { return tie() == o.tie(); }
    auto operator<=>(const CanonicalFact& o) const { return tie() <=> o.tie(); }
};

/// Breaks `table` into canonical facts under `entry`. Empty cells yield no
/// fact; the key column yields the self-identifying fact.
inline std::vector<CanonicalFact> canonicalize(const RelationalTable& table, const OntologyEntry& entry) {
    table.check();
    if (entry.table_name != table.name)
        throw error(errc::missing_key_column, "ontology entry for " + entry.table_name + " applied to " + table.name);
    auto key = table.column_index(entry.key_attribute);
    if (!key) throw error(errc::missing_key_column, table.name + " has no key column " + entry.key_attribute);

    std::set<std::string> keys;
    std::vector<CanonicalFact> out;
    out.reserve(table.rows.size() * table.columns.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto& pk = row[*key];
        if (pk.empty()) throw error(errc::empty_key, table.name + " row " + std::to_string(r + 1) + " has an empty key");
        if (!keys.insert(pk).second) throw error(errc::duplicate_key, table.name + " key " + pk + " repeats");
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            if (row[c].empty()) continue;
            out.push_back({entry.concept_name, pk, table.columns[c], row[c], false});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// The canonical database: an in-memory, ordered set of facts with a
/// secondary (attribute, value) index. Built once per load; seed_virtual is
/// the only mutation allowed afterwards.
class CanonicalStore {
public:
    CanonicalStore() = default;
    CanonicalStore(const CanonicalStore& o) : facts_(o.facts_), key_attribute_(o.key_attribute_) { reindex(); }
    CanonicalStore& operator=(const CanonicalStore& o) {
        if (this != &o) {
            facts_ = o.facts_;
            key_attribute_ = o.key_attribute_;
            reindex();
        }
        return *this;
    }
    CanonicalStore(CanonicalStore&&) noexcept = default;
    CanonicalStore& operator=(CanonicalStore&&) noexcept = default;

    /// Adds the facts of one table. Returns the number of facts contributed.
    std::size_t add_table(const RelationalTable& table, const OntologyEntry& entry) {
        auto facts = canonicalize(table, entry);
        key_attribute_[entry.concept_name] = entry.key_attribute;
        for (auto& f : facts) insert(std::move(f));
        return facts.size();
    }

    void insert(CanonicalFact f) {
        auto [it, inserted] = facts_.insert(std::move(f));
        if (inserted) by_value_[{it->attribute, it->value}].push_back(&*it);
    }

    /// All facts matching every bound argument.
    std::vector<CanonicalFact> lookup(std::optional<std::string_view> concept_name = {},
                                      std::optional<std::string_view> primary_key = {},
                                      std::optional<std::string_view> attribute = {},
                                      std::optional<std::string_view> value = {}) const {
        std::vector<CanonicalFact> out;
        auto matches = [&](const CanonicalFact& f) {
            return (!concept_name || f.concept_name == *concept_name) && (!primary_key || f.primary_key == *primary_key) &&
                   (!attribute || f.attribute == *attribute) && (!value || f.value == *value);
        };
        if (attribute && value) {
            auto it = by_value_.find({std::string(*attribute), std::string(*value)});
            if (it == by_value_.end()) return out;
            for (const auto* f : it->second)
                if (matches(*f)) out.push_back(*f);
            std::sort(out.begin(), out.end());
            return out;
        }
        auto first = facts_.begin();
        if (concept_name) {
            CanonicalFact probe{std::string(*concept_name), primary_key ? std::string(*primary_key) : "", "", ""};
            first = facts_.lower_bound(probe);
        }
        for (auto it = first; it != facts_.end(); ++it) {
            if (concept_name && it->concept_name != *concept_name) break;
            if (concept_name && primary_key && it->primary_key != *primary_key) break;
            if (matches(*it)) out.push_back(*it);
        }
        return out;
    }

    /// Asserts the self-identifying fact for a key absent from the base
    /// tables. Idempotent.
    CanonicalFact seed_virtual(const std::string& concept_name, const std::string& key_value, const OntologyEntry& entry) {
        if (entry.concept_name != concept_name)
            throw error(errc::unknown_concept, "seed for " + concept_name + " with entry of " + entry.concept_name);
        CanonicalFact f{concept_name, key_value, entry.key_attribute, key_value, true};
        key_attribute_.emplace(concept_name, entry.key_attribute);
        auto it = facts_.find(f);
        if (it != facts_.end()) return *it;
        insert(f);
        return f;
    }

    const std::set<CanonicalFact>& facts() const { return facts_; }
    std::size_t size() const { return facts_.size(); }
    bool empty() const { return facts_.empty(); }

    std::optional<std::string> key_attribute(std::string_view concept_name) const {
        auto it = key_attribute_.find(std::string(concept_name));
        if (it == key_attribute_.end()) return std::nullopt;
        return it->second;
    }

    /// Pivots the non-virtual facts of `entry.concept_name` back into rows
    /// over `columns` (missing attributes become empty cells), ordered by key.
    RelationalTable pivot(const OntologyEntry& entry, const std::vector<std::string>& columns) const {
        RelationalTable t{entry.table_name, columns, {}};
        std::map<std::string, std::map<std::string, std::string>> objects;
        for (const auto& f : lookup(entry.concept_name))
            if (!f.is_virtual) objects[f.primary_key][f.attribute] = f.value;
        for (const auto& [pk, attrs] : objects) {
            std::vector<std::string> row;
            for (const auto& c : columns) {
                auto it = attrs.find(c);
                row.push_back(it == attrs.end() ? "" : it->second);
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }

    /// 4-column delimited export with header
    /// Concept,PrimaryKey,AttributeName,AttributeValue.
    std::string export_csv() const {
        std::vector<text::csv_row> rows{{"Concept", "PrimaryKey", "AttributeName", "AttributeValue"}};
        for (const auto& f : facts_) rows.push_back({f.concept_name, f.primary_key, f.attribute, f.value});
        return text::write_csv(rows);
    }

private:
    void reindex() {
        by_value_.clear();
        for (const auto& f : facts_) by_value_[{f.attribute, f.value}].push_back(&f);
    }

    std::set<CanonicalFact> facts_;
    std::map<std::pair<std::string, std::string>, std::vector<const CanonicalFact*>> by_value_;
    std::map<std::string, std::string> key_attribute_;
};

} // namespace kriq
