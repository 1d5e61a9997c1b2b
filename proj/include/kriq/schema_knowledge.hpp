#pragma once

#include <algorithm>
#include <compare>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "text.hpp"

namespace kriq {

/// One row of the structural ontology: a concept, its backing table, the key
/// column, and the remaining columns in declaration order.
struct OntologyEntry {
    std::string concept_name;
    std::string table_name;
    std::string key_attribute;
    std::vector<std::string> attributes;

    /// {key_attribute} followed by `attributes`.
    std::vector<std::string> all_attributes() const {
        std::vector<std::string> out{key_attribute};
        out.insert(out.end(), attributes.begin(), attributes.end());
        return out;
    }
    bool has_attribute(std::string_view name) const {
        return name == key_attribute ||
               std::find(attributes.begin(), attributes.end(), name) != attributes.end();
    }
    bool operator==(const OntologyEntry&) const = default;
};

struct DerivationEdge {
    std::string concept_a;
    std::string concept_b;
    auto operator<=>(const DerivationEdge&) const = default;
};

struct ForeignKeyLink {
    std::string table_x;
    std::string table_y;
    std::string column_x;
    std::string column_y;
    auto operator<=>(const ForeignKeyLink&) const = default;
};

struct SimilarConcept {
    std::string concept_x;
    std::string concept_y;
    std::vector<std::string> relations;
    bool operator==(const SimilarConcept&) const = default;
};

/// Tools able to verify a relation, most preferred first.
struct ToolBinding {
    std::string relation;
    std::vector<std::string> operations;
    bool operator==(const ToolBinding&) const = default;
};

enum class lexicon_kind { concept_term, attribute, relation, action_verb };

inline std::string_view to_string(lexicon_kind k) {
    switch (k) {
    case lexicon_kind::concept_term: return "concept";
    case lexicon_kind::attribute: return "attribute";
    case lexicon_kind::relation: return "relation";
    case lexicon_kind::action_verb: return "action-verb";
    }
    return "?";
}

struct LexiconEntry {
    std::string surface_term; // normalized
    lexicon_kind kind = lexicon_kind::concept_term;
    std::string target;
    std::string scope; // concept name for attribute terms, may be empty
    bool user = false;
    bool operator==(const LexiconEntry&) const = default;
};

/// Maps a condition predicate ("protein coding") to "the subject is linked to
/// an object of `concept`".
struct ConditionRule {
    std::string predicate;
    std::string concept_name;
    bool operator==(const ConditionRule&) const = default;
};

struct KnowledgeOptions {
    bool symmetric_derivations = true;
    std::vector<ConditionRule> conditions;
    bool operator==(const KnowledgeOptions&) const = default;
};

/// The five meta-tables plus the lexicons. Immutable once built.
class KnowledgeBase {
public:
    struct Tables {
        std::vector<OntologyEntry> ontology;
        std::vector<DerivationEdge> derivatives;
        std::vector<ForeignKeyLink> foreign_keys;
        std::vector<SimilarConcept> similar_concepts;
        std::vector<ToolBinding> tools;
        std::vector<LexiconEntry> lexicon; // user-supplied entries only
        KnowledgeOptions options;
    };

    KnowledgeBase() = default;

    /// Validates `tables` and derives the default lexicon.
    static KnowledgeBase build(Tables tables) {
        KnowledgeBase kb;
        kb.t_ = std::move(tables);
        for (auto& e : kb.t_.lexicon) {
            e.surface_term = text::normalize_term(e.surface_term);
            e.user = true;
        }
        for (auto& c : kb.t_.options.conditions) c.predicate = text::normalize_term(c.predicate);
        kb.validate();
        kb.derive_lexicon();
        return kb;
    }

    const std::vector<OntologyEntry>& ontology() const { return t_.ontology; }
    const std::vector<DerivationEdge>& derivatives() const { return t_.derivatives; }
    const std::vector<ForeignKeyLink>& foreign_keys() const { return t_.foreign_keys; }
    const std::vector<SimilarConcept>& similar_concepts() const { return t_.similar_concepts; }
    const std::vector<ToolBinding>& tools() const { return t_.tools; }
    const std::vector<LexiconEntry>& lexicon() const { return lexicon_; }
    const KnowledgeOptions& options() const { return t_.options; }

    const OntologyEntry* find_concept(std::string_view name) const {
        for (const auto& e : t_.ontology)
            if (e.concept_name == name) return &e;
        return nullptr;
    }
    const OntologyEntry* table(std::string_view name) const {
        for (const auto& e : t_.ontology)
            if (e.table_name == name) return &e;
        return nullptr;
    }
    const ToolBinding* tools_for(std::string_view relation) const {
        for (const auto& b : t_.tools)
            if (b.relation == relation) return &b;
        return nullptr;
    }

    bool is_key_attribute(std::string_view attribute) const {
        return std::any_of(t_.ontology.begin(), t_.ontology.end(),
                           [&](const OntologyEntry& e) { return e.key_attribute == attribute; });
    }
    bool knows_attribute(std::string_view attribute) const {
        return std::any_of(t_.ontology.begin(), t_.ontology.end(),
                           [&](const OntologyEntry& e) { return e.has_attribute(attribute); });
    }

    /// der edges as evaluated: as declared, plus inverses when
    /// `symmetric_derivations` is on. Sorted, no duplicates.
    std::vector<DerivationEdge> derivation_edges() const {
        std::set<DerivationEdge> out(t_.derivatives.begin(), t_.derivatives.end());
        if (t_.options.symmetric_derivations)
            for (const auto& d : t_.derivatives) out.insert({d.concept_b, d.concept_a});
        return {out.begin(), out.end()};
    }

    bool declares_derivative(std::string_view from, std::string_view to) const {
        return std::any_of(t_.derivatives.begin(), t_.derivatives.end(), [&](const DerivationEdge& d) {
            return d.concept_a == from && d.concept_b == to;
        });
    }

    /// Concepts reachable from `start` over der edges, grouped by distance.
    std::vector<std::vector<std::string>> derivation_levels(const std::string& start) const {
        std::vector<std::vector<std::string>> levels{{start}};
        std::set<std::string> seen{start};
        auto edges = derivation_edges();
        while (true) {
            std::vector<std::string> next;
            for (const auto& c : levels.back())
                for (const auto& e : edges)
                    if (e.concept_a == c && seen.insert(e.concept_b).second) next.push_back(e.concept_b);
            if (next.empty()) break;
            std::sort(next.begin(), next.end(), [&](const auto& a, const auto& b) {
                return ontology_index(a) < ontology_index(b);
            });
            levels.push_back(std::move(next));
        }
        return levels;
    }

    /// Concepts the term can name. Empty when unknown.
    std::vector<std::string> concepts_named(std::string_view term) const {
        return lookup_targets(text::normalize_term(term), lexicon_kind::concept_term);
    }

    std::string resolve_concept(std::string_view term) const {
        auto found = concepts_named(term);
        if (found.empty()) throw error(errc::unknown_concept, "'" + std::string(term) + "'");
        if (found.size() > 1)
            throw error(errc::ambiguous_concept,
                        "'" + std::string(term) + "' names " + text::join(found, ", "));
        return found.front();
    }

    /// Resolves an attribute term, preferring `concept`'s own attributes and
    /// falling back to concepts reachable from it through der edges, nearest
    /// first. Returns (owning concept, attribute).
    std::pair<std::string, std::string>
    resolve_attribute(std::string_view term, std::optional<std::string> concept_name = std::nullopt) const {
        auto norm = text::normalize_term(term);
        std::vector<std::vector<std::string>> levels;
        if (concept_name) {
            if (!find_concept(*concept_name)) throw error(errc::unknown_concept, "'" + *concept_name + "'");
            levels = derivation_levels(*concept_name);
        } else {
            std::vector<std::string> all;
            for (const auto& e : t_.ontology) all.push_back(e.concept_name);
            levels.push_back(std::move(all));
        }
        for (const auto& level : levels) {
            for (int tier = 0; tier < 3; ++tier) {
                auto hits = attribute_hits(norm, level, tier);
                if (hits.size() == 1) return *hits.begin();
                if (hits.size() > 1) {
                    std::vector<std::string> names;
                    for (const auto& [c, a] : hits) names.push_back(c + "." + a);
                    throw error(errc::ambiguous_attribute,
                                "'" + std::string(term) + "' matches " + text::join(names, ", "));
                }
            }
        }
        throw error(errc::unknown_attribute, "'" + std::string(term) + "'" +
                                                 (concept_name ? " for concept " + *concept_name : ""));
    }

    std::optional<std::string> resolve_relation(std::string_view term) const {
        auto found = lookup_targets(text::normalize_term(term), lexicon_kind::relation);
        if (found.size() == 1) return found.front();
        return std::nullopt;
    }

    std::optional<std::string> resolve_action(std::string_view verb) const {
        auto found = lookup_targets(text::normalize_term(verb), lexicon_kind::action_verb);
        if (found.size() == 1) return found.front();
        return std::nullopt;
    }

    std::optional<ConditionRule> resolve_condition(std::string_view predicate) const {
        auto norm = text::normalize_term(predicate);
        for (const auto& c : t_.options.conditions)
            if (c.predicate == norm) return c;
        return std::nullopt;
    }

    std::size_t ontology_index(std::string_view concept_name) const {
        for (std::size_t i = 0; i < t_.ontology.size(); ++i)
            if (t_.ontology[i].concept_name == concept_name) return i;
        return t_.ontology.size();
    }

    bool operator==(const KnowledgeBase& o) const {
        return t_.ontology == o.t_.ontology && t_.derivatives == o.t_.derivatives &&
               t_.foreign_keys == o.t_.foreign_keys && t_.similar_concepts == o.t_.similar_concepts &&
               t_.tools == o.t_.tools && t_.options == o.t_.options && lexicon_ == o.lexicon_;
    }

private:
    Tables t_;
    std::vector<LexiconEntry> lexicon_; // user entries first, then surviving auto entries

    [[noreturn]] static void inconsistent(const std::string& what) {
        throw error(errc::inconsistent_knowledge, what);
    }

    void validate() const {
        std::set<std::string> concepts, tables;
        for (const auto& e : t_.ontology) {
            if (e.concept_name.empty() || e.table_name.empty() || e.key_attribute.empty())
                inconsistent("ontology entry with empty concept, table or key");
            if (!concepts.insert(e.concept_name).second) inconsistent("duplicate concept " + e.concept_name);
            if (!tables.insert(e.table_name).second) inconsistent("duplicate table " + e.table_name);
            std::set<std::string> attrs;
            for (const auto& a : e.attributes) {
                if (a == e.key_attribute)
                    inconsistent("key attribute " + a + " listed among attributes of " + e.concept_name);
                if (!attrs.insert(a).second) inconsistent("duplicate attribute " + a + " in " + e.concept_name);
            }
        }
        for (const auto& d : t_.derivatives)
            if (!find_concept(d.concept_a) || !find_concept(d.concept_b))
                inconsistent("der references unknown concept (" + d.concept_a + ", " + d.concept_b + ")");
        for (const auto& f : t_.foreign_keys) {
            auto* x = table(f.table_x);
            auto* y = table(f.table_y);
            if (!x) inconsistent("forK references unknown table " + f.table_x);
            if (!y) inconsistent("forK references unknown table " + f.table_y);
            if (!x->has_attribute(f.column_x))
                inconsistent("forK column " + f.column_x + " is not an attribute of " + x->concept_name);
            if (!y->has_attribute(f.column_y))
                inconsistent("forK column " + f.column_y + " is not an attribute of " + y->concept_name);
        }
        for (const auto& s : t_.similar_concepts) {
            if (!find_concept(s.concept_x) || !find_concept(s.concept_y))
                inconsistent("simCon references unknown concept (" + s.concept_x + ", " + s.concept_y + ")");
            if (s.relations.empty()) inconsistent("simCon row without relations");
        }
        std::set<std::string> bound;
        for (const auto& b : t_.tools) {
            if (b.relation.empty() || b.operations.empty())
                inconsistent("cTool row for '" + b.relation + "' without operations");
            if (!bound.insert(b.relation).second) inconsistent("duplicate cTool relation " + b.relation);
        }
        std::set<std::tuple<std::string, lexicon_kind, std::string>> seen;
        for (const auto& l : t_.lexicon) {
            if (l.surface_term.empty() || l.target.empty()) inconsistent("lexicon entry with empty term or target");
            if (!seen.emplace(l.surface_term, l.kind, l.scope).second)
                inconsistent("duplicate lexicon entry '" + l.surface_term + "'");
            if (!l.scope.empty() && !find_concept(l.scope)) inconsistent("lexicon scope " + l.scope + " unknown");
            switch (l.kind) {
            case lexicon_kind::concept_term:
                if (!find_concept(l.target)) inconsistent("lexicon concept target " + l.target + " unknown");
                break;
            case lexicon_kind::attribute:
                if (l.scope.empty() ? !knows_attribute(l.target) : !find_concept(l.scope)->has_attribute(l.target))
                    inconsistent("lexicon attribute target " + l.target + " unknown");
                break;
            case lexicon_kind::relation: {
                bool known = std::any_of(t_.similar_concepts.begin(), t_.similar_concepts.end(),
                                         [&](const SimilarConcept& s) {
                                             return std::find(s.relations.begin(), s.relations.end(),
                                                              l.target) != s.relations.end();
                                         });
                if (!known) inconsistent("lexicon relation target " + l.target + " not in simCon");
                break;
            }
            case lexicon_kind::action_verb: break;
            }
        }
        for (const auto& c : t_.options.conditions)
            if (c.predicate.empty() || !find_concept(c.concept_name))
                inconsistent("condition '" + c.predicate + "' references unknown concept " + c.concept_name);
    }

    void derive_lexicon() {
        lexicon_ = t_.lexicon;
        auto add = [&](std::string term, lexicon_kind kind, std::string target, std::string scope) {
            term = text::normalize_term(term);
            if (term.empty()) return;
            for (const auto& e : lexicon_)
                if (e.surface_term == term && e.kind == kind && e.scope == scope) return;
            lexicon_.push_back({std::move(term), kind, std::move(target), std::move(scope), false});
        };
        for (const auto& e : t_.ontology) {
            add(text::join(text::camel_split(e.concept_name), " "), lexicon_kind::concept_term, e.concept_name, "");
            add(e.concept_name, lexicon_kind::concept_term, e.concept_name, "");
            add(e.table_name, lexicon_kind::concept_term, e.concept_name, "");
            for (const auto& a : e.all_attributes()) {
                add(text::join(text::camel_split(a), " "), lexicon_kind::attribute, a, e.concept_name);
                add(a, lexicon_kind::attribute, a, e.concept_name);
            }
        }
        for (const char* v : {"find", "list", "show", "get", "retrieve"})
            add(v, lexicon_kind::action_verb, v, "");
        add("what", lexicon_kind::action_verb, "find", "");
        add("which", lexicon_kind::action_verb, "find", "");
    }

    std::vector<std::string> lookup_targets(const std::string& norm, lexicon_kind kind) const {
        std::vector<std::string> user, automatic;
        for (const auto& e : lexicon_) {
            if (e.kind != kind || e.surface_term != norm) continue;
            auto& bucket = e.user ? user : automatic;
            if (std::find(bucket.begin(), bucket.end(), e.target) == bucket.end()) bucket.push_back(e.target);
        }
        return user.empty() ? automatic : user;
    }

    // tier 0: user lexicon, tier 1: derived lexicon, tier 2: head word of the
    // attribute name ("sequence" -> DNASequence).
    std::set<std::pair<std::string, std::string>>
    attribute_hits(const std::string& norm, const std::vector<std::string>& level, int tier) const {
        std::set<std::pair<std::string, std::string>> hits;
        auto in_level = [&](const std::string& c) {
            return std::find(level.begin(), level.end(), c) != level.end();
        };
        if (tier < 2) {
            for (const auto& e : lexicon_) {
                if (e.kind != lexicon_kind::attribute || e.surface_term != norm || e.user != (tier == 0)) continue;
                if (!e.scope.empty()) {
                    if (in_level(e.scope)) hits.emplace(e.scope, e.target);
                } else {
                    for (const auto& c : level)
                        if (find_concept(c)->has_attribute(e.target)) hits.emplace(c, e.target);
                }
            }
            return hits;
        }
        if (norm.find(' ') != std::string::npos) return hits;
        for (const auto& c : level) {
            const auto* entry = find_concept(c);
            std::vector<std::string> local;
            for (const auto& a : entry->all_attributes()) {
                auto words = text::split_words(text::normalize_term(text::join(text::camel_split(a), " ")));
                if (!words.empty() && words.back() == norm) local.push_back(a);
            }
            if (local.size() > 1 &&
                std::find(local.begin(), local.end(), entry->key_attribute) != local.end())
                local = {entry->key_attribute};
            for (auto& a : local) hits.emplace(c, a);
        }
        return hits;
    }
};

// ---------------------------------------------------------------------------
// JSON configuration

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& j) {
    if (j.is_string()) return text::split_list(j.get<std::string>());
    std::vector<std::string> out;
    if (j.is_array())
        for (const auto& v : j) {
            auto s = text::trim(v.get<std::string>());
            if (!s.empty()) out.push_back(s);
        }
    return out;
}

inline lexicon_kind parse_kind(const std::string& s) {
    if (s == "concept") return lexicon_kind::concept_term;
    if (s == "attribute") return lexicon_kind::attribute;
    if (s == "relation") return lexicon_kind::relation;
    if (s == "action-verb" || s == "action_verb") return lexicon_kind::action_verb;
    throw error(errc::inconsistent_knowledge, "unknown lexicon kind '" + s + "'");
}

inline std::string str(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw error(errc::inconsistent_knowledge, std::string("missing string field '") + key + "'");
    return text::trim(it->get<std::string>());
}

} // namespace detail

/// Builds a knowledge base from the configuration document. Unknown top-level
/// keys (e.g. `tools_registry`) are left to their owners.
inline KnowledgeBase load_knowledge(const nlohmann::json& doc) {
    using detail::str;
    if (!doc.is_object() && !doc.is_null()) throw error(errc::inconsistent_knowledge, "document is not an object");
    KnowledgeBase::Tables t;
    auto each = [&](const char* key, auto&& fn) {
        if (doc.is_null() || !doc.contains(key)) return;
        const auto& arr = doc.at(key);
        if (!arr.is_array()) throw error(errc::inconsistent_knowledge, std::string(key) + " is not a list");
        for (const auto& item : arr) {
            if (!item.is_object())
                throw error(errc::inconsistent_knowledge, std::string(key) + " entry is not an object");
            fn(item);
        }
    };
    try {
        each("ontology", [&](const auto& j) {
            OntologyEntry e{str(j, "concept_name"), str(j, "table_name"), str(j, "key_attribute"), {}};
            if (j.contains("attributes")) e.attributes = detail::string_list(j.at("attributes"));
            t.ontology.push_back(std::move(e));
        });
        each("derivatives", [&](const auto& j) { t.derivatives.push_back({str(j, "concept_a"), str(j, "concept_b")}); });
        each("foreign_keys", [&](const auto& j) {
            t.foreign_keys.push_back({str(j, "table_x"), str(j, "table_y"), str(j, "column_x"), str(j, "column_y")});
        });
        each("similar_concepts", [&](const auto& j) {
            t.similar_concepts.push_back({str(j, "concept_x"), str(j, "concept_y"),
                                          j.contains("relations") ? detail::string_list(j.at("relations"))
                                                                  : std::vector<std::string>{}});
        });
        each("tools", [&](const auto& j) {
            t.tools.push_back({str(j, "relation"), j.contains("operations")
                                                       ? detail::string_list(j.at("operations"))
                                                       : std::vector<std::string>{}});
        });
        each("lexicon", [&](const auto& j) {
            t.lexicon.push_back({str(j, "surface_term"), detail::parse_kind(str(j, "kind")), str(j, "target"),
                                 j.contains("scope") ? str(j, "scope") : std::string{}, true});
        });
        if (doc.is_object() && doc.contains("options")) {
            const auto& o = doc.at("options");
            t.options.symmetric_derivations = o.value("symmetric_derivations", true);
            if (o.contains("conditions"))
                for (const auto& c : o.at("conditions"))
                    t.options.conditions.push_back({str(c, "predicate"), str(c, "concept")});
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::inconsistent_knowledge, e.what());
    }
    return KnowledgeBase::build(std::move(t));
}

inline nlohmann::json to_json(const KnowledgeBase& kb) {
    nlohmann::json j;
    j["ontology"] = nlohmann::json::array();
    for (const auto& e : kb.ontology())
        j["ontology"].push_back({{"concept_name", e.concept_name},
                                 {"table_name", e.table_name},
                                 {"key_attribute", e.key_attribute},
                                 {"attributes", e.attributes}});
    j["derivatives"] = nlohmann::json::array();
    for (const auto& d : kb.derivatives()) j["derivatives"].push_back({{"concept_a", d.concept_a}, {"concept_b", d.concept_b}});
    j["foreign_keys"] = nlohmann::json::array();
    for (const auto& f : kb.foreign_keys())
        j["foreign_keys"].push_back({{"table_x", f.table_x}, {"table_y", f.table_y},
                                     {"column_x", f.column_x}, {"column_y", f.column_y}});
    j["similar_concepts"] = nlohmann::json::array();
    for (const auto& s : kb.similar_concepts())
        j["similar_concepts"].push_back({{"concept_x", s.concept_x}, {"concept_y", s.concept_y}, {"relations", s.relations}});
    j["tools"] = nlohmann::json::array();
    for (const auto& b : kb.tools()) j["tools"].push_back({{"relation", b.relation}, {"operations", b.operations}});
    j["options"] = {{"symmetric_derivations", kb.options().symmetric_derivations}};
    return j;
}

} // namespace kriq
