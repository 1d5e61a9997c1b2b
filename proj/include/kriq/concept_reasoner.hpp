#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "canonical_store.hpp"
#include "error.hpp"
#include "schema_knowledge.hpp"
#include "tool_gateway.hpp"

namespace kriq {

enum class strategy { direct_only, indirect, interpretive };

inline std::string_view to_string(strategy s) {
    switch (s) {
    case strategy::direct_only: return "direct-only";
    case strategy::indirect: return "+indirect";
    case strategy::interpretive: return "+interpretive";
    }
    return "?";
}

inline constexpr std::size_t no_index = std::numeric_limits<std::size_t>::max();

/// One foreign-key step of a rel/4 derivation.
struct RelHop {
    std::string from_concept, from_key;
    std::string table_x, column_x;
    std::string value;
    std::string table_y, column_y;
    std::string to_concept, to_key;
};

/// rel(Con, Der, PkC, PkD) with the first path that produced it.
struct RelFact {
    std::string concept_name;
    std::string derived_concept;
    std::string primary_key;
    std::string derived_key;
    std::vector<RelHop> path;

    auto tie() const { return std::tie(concept_name, derived_concept, primary_key, derived_key); }
};

enum class provenance_kind { direct, derived, interpretive };

inline std::string_view to_string(provenance_kind k) {
    switch (k) {
    case provenance_kind::direct: return "Direct";
    case provenance_kind::derived: return "Derived";
    case provenance_kind::interpretive: return "Interpretive";
    }
    return "?";
}

/// Which rule produced a fact and from what. Premises are indices of facts
/// created earlier, so traces are finite and acyclic.
struct ProvenanceTrace {
    provenance_kind kind = provenance_kind::direct;
    bool is_virtual = false;
    std::size_t rel = no_index;    // Derived: the rel fact used
    std::size_t source = no_index; // Derived/Interpretive: premise res fact
    std::size_t guard = no_index;  // Interpretive: a prior fact of the object
    std::string relation, tool, partner_concept, partner_key;
};

struct ResFact {
    std::string concept_name;
    std::string primary_key;
    std::string attribute;
    std::string value;
    ProvenanceTrace provenance;

    auto tie() const { return std::tie(concept_name, primary_key, attribute, value); }
};

using FactKey = std::tuple<std::string, std::string, std::string, std::string>;

/// A relation between two objects confirmed by a tool during rule 7.
struct ToolLink {
    std::string concept_name, primary_key, relation, tool, partner_concept, partner_key;
    auto tie() const { return std::tie(concept_name, primary_key, relation, tool, partner_concept, partner_key); }
    bool operator<(const ToolLink& o) const { return tie() < o.tie(); }
};

// ---------------------------------------------------------------------------
// Goals

/// A term of a res-atom: a named variable, or a constant with one or more
/// admissible values (several values express a disjunctive selector).
struct Term {
    std::string var;
    std::vector<std::string> values;

    static Term variable(std::string name) { return {std::move(name), {}}; }
    static Term constant(std::string v) { return {{}, {std::move(v)}}; }
    static Term any_of(std::vector<std::string> vs) { return {{}, std::move(vs)}; }

    bool is_variable() const { return !var.empty(); }
    bool admits(std::string_view v) const {
        return std::find(values.begin(), values.end(), v) != values.end();
    }
    bool operator==(const Term&) const = default;
};

struct GoalAtom {
    std::string concept_name;
    Term key, attribute, value;
    bool operator==(const GoalAtom&) const = default;
};

inline std::string to_string(const Term& t) {
    if (t.is_variable()) return t.var;
    std::vector<std::string> quoted;
    for (const auto& v : t.values) quoted.push_back("'" + v + "'");
    if (quoted.size() == 1) return quoted.front();
    return "{" + text::join(quoted, "|") + "}";
}

inline std::string to_string(const GoalAtom& g) {
    return "res('" + g.concept_name + "', " + to_string(g.key) + ", " + to_string(g.attribute) + ", " +
           to_string(g.value) + ")";
}

inline std::string to_string(const std::vector<GoalAtom>& goals) {
    std::vector<std::string> parts;
    for (const auto& g : goals) parts.push_back(to_string(g));
    return text::join(parts, ", ");
}

/// Parses `res(Concept, Var|'const', Attr|Var, Var|'const')` atoms joined by
/// commas. Quoted tokens are constants; bare identifiers are variables,
/// except in the concept position, and in the attribute position when `kb`
/// knows an attribute of that exact name. `_` is anonymous.
inline std::vector<GoalAtom> parse_goals(std::string_view src, const KnowledgeBase* kb = nullptr) {
    std::size_t i = 0;
    int anon = 0;
    auto fail = [&](const std::string& what) -> void {
        throw error(errc::malformed_goal, what + " at offset " + std::to_string(i));
    };
    auto ws = [&] {
        while (i < src.size() && std::isspace(static_cast<unsigned char>(src[i]))) ++i;
    };
    auto expect = [&](char c) {
        ws();
        if (i >= src.size() || src[i] != c) fail(std::string("expected '") + c + "'");
        ++i;
    };
    struct Token {
        std::string text;
        bool quoted;
    };
    auto token = [&]() -> Token {
        ws();
        if (i >= src.size()) fail("unexpected end");
        if (src[i] == '\'' || src[i] == '"') {
            char q = src[i++];
            std::string out;
            while (i < src.size() && src[i] != q) out.push_back(src[i++]);
            if (i >= src.size()) fail("unterminated quote");
            ++i;
            return {out, true};
        }
        std::string out;
        while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) out.push_back(src[i++]);
        if (out.empty()) fail("expected a term");
        return {out, false};
    };
    auto as_term = [&](const Token& t) {
        if (t.quoted) return Term::constant(t.text);
        if (t.text == "_") return Term::variable("_" + std::to_string(++anon));
        return Term::variable(t.text);
    };

    std::vector<GoalAtom> goals;
    ws();
    if (i < src.size() && src[i] == '?') ++i;
    while (true) {
        ws();
        auto head = token();
        if (head.quoted || head.text != "res") fail("expected res(...)");
        expect('(');
        GoalAtom g;
        g.concept_name = token().text;
        expect(',');
        g.key = as_term(token());
        expect(',');
        auto attr = token();
        g.attribute = as_term(attr);
        if (!attr.quoted && kb && kb->knows_attribute(attr.text)) g.attribute = Term::constant(attr.text);
        expect(',');
        g.value = as_term(token());
        expect(')');
        goals.push_back(std::move(g));
        ws();
        if (i < src.size() && src[i] == ',') {
            ++i;
            continue;
        }
        if (i < src.size() && src[i] == '.') ++i;
        ws();
        if (i != src.size()) fail("trailing input");
        break;
    }
    return goals;
}

/// Deduplicated variable bindings of a goal conjunction, sorted by value.
/// `support[k]` is the fact that satisfied goal atom k.
struct Bindings {
    struct Row {
        std::vector<std::string> values;
        std::vector<std::size_t> support;
    };
    std::vector<std::string> variables;
    std::vector<Row> rows;

    std::optional<std::size_t> column(std::string_view var) const {
        for (std::size_t i = 0; i < variables.size(); ++i)
            if (variables[i] == var) return i;
        return std::nullopt;
    }
    std::set<std::string> values_of(std::string_view var) const {
        std::set<std::string> out;
        if (auto c = column(var))
            for (const auto& r : rows) out.insert(r.values[*c]);
        return out;
    }
    bool empty() const { return rows.empty(); }
};

// ---------------------------------------------------------------------------

/// Result of evaluating the rule set to fixpoint: res and rel facts with
/// provenance, tool-confirmed links, and tool warnings.
class Model {
public:
    const std::vector<ResFact>& res() const { return res_; }
    const std::vector<RelFact>& rel() const { return rel_; }
    const std::vector<ToolLink>& links() const { return links_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    strategy evaluated_with() const { return strategy_; }

    std::optional<std::size_t> find(const std::string& c, const std::string& pk, const std::string& a,
                                    const std::string& v) const {
        auto it = index_.find(FactKey{c, pk, a, v});
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::set<FactKey> fact_set() const {
        std::set<FactKey> out;
        for (const auto& [k, _] : index_) out.insert(k);
        return out;
    }

    /// Nested provenance of fact `i` as JSON.
    nlohmann::json trace(std::size_t i) const {
        const auto& f = res_.at(i);
        const auto& p = f.provenance;
        nlohmann::json j;
        j["fact"] = fact_json(f);
        j["kind"] = std::string(to_string(p.kind));
        switch (p.kind) {
        case provenance_kind::direct:
            j["virtual"] = p.is_virtual;
            break;
        case provenance_kind::derived: {
            const auto& r = rel_.at(p.rel);
            nlohmann::json path = nlohmann::json::array();
            for (const auto& h : r.path)
                path.push_back({{"from", {{"concept", h.from_concept}, {"primary_key", h.from_key}}},
                                {"table_x", h.table_x},
                                {"column_x", h.column_x},
                                {"value", h.value},
                                {"table_y", h.table_y},
                                {"column_y", h.column_y},
                                {"to", {{"concept", h.to_concept}, {"primary_key", h.to_key}}}});
            j["rel"] = {{"concept", r.concept_name},
                        {"derived_concept", r.derived_concept},
                        {"primary_key", r.primary_key},
                        {"derived_key", r.derived_key},
                        {"path", path}};
            j["source"] = trace(p.source);
            break;
        }
        case provenance_kind::interpretive:
            j["relation"] = p.relation;
            j["tool"] = p.tool;
            j["partner"] = {{"concept", p.partner_concept}, {"primary_key", p.partner_key}};
            j["guard"] = fact_json(res_.at(p.guard));
            j["source"] = trace(p.source);
            break;
        }
        return j;
    }

    /// Joins the goal atoms over shared variables.
    Bindings query(const std::vector<GoalAtom>& goals) const {
        Bindings out;
        for (const auto& g : goals)
            for (const Term* t : {&g.key, &g.attribute, &g.value})
                if (t->is_variable() && t->var[0] != '_' &&
                    std::find(out.variables.begin(), out.variables.end(), t->var) == out.variables.end())
                    out.variables.push_back(t->var);

        std::map<std::vector<std::string>, std::vector<std::size_t>> found;
        std::map<std::string, std::string> env;
        std::vector<std::size_t> support;
        std::function<void(std::size_t)> step = [&](std::size_t k) {
            if (k == goals.size()) {
                std::vector<std::string> values;
                for (const auto& v : out.variables) values.push_back(env.at(v));
                found.emplace(std::move(values), support);
                return;
            }
            const auto& g = goals[k];
            const std::vector<std::size_t>* candidates = nullptr;
            std::optional<std::string> key;
            if (!g.key.is_variable() && g.key.values.size() == 1) key = g.key.values.front();
            else if (g.key.is_variable() && env.count(g.key.var)) key = env.at(g.key.var);
            if (key) {
                auto it = by_object_.find({g.concept_name, *key});
                if (it == by_object_.end()) return;
                candidates = &it->second;
            } else {
                auto it = by_concept_.find(g.concept_name);
                if (it == by_concept_.end()) return;
                candidates = &it->second;
            }
            for (auto idx : *candidates) {
                const auto& f = res_[idx];
                std::vector<std::string> bound_here;
                auto unify = [&](const Term& t, const std::string& v) {
                    if (!t.is_variable()) return t.admits(v);
                    auto it = env.find(t.var);
                    if (it != env.end()) return it->second == v;
                    env.emplace(t.var, v);
                    bound_here.push_back(t.var);
                    return true;
                };
                if (unify(g.key, f.primary_key) && unify(g.attribute, f.attribute) && unify(g.value, f.value)) {
                    support.push_back(idx);
                    step(k + 1);
                    support.pop_back();
                }
                for (const auto& v : bound_here) env.erase(v);
            }
        };
        step(0);
        for (auto& [values, sup] : found) out.rows.push_back({values, sup});
        return out;
    }

private:
    friend class Reasoner;

    static nlohmann::json fact_json(const ResFact& f) {
        return {{"concept", f.concept_name}, {"primary_key", f.primary_key}, {"attribute", f.attribute}, {"value", f.value}};
    }

    std::size_t add(ResFact f) {
        auto key = FactKey{f.concept_name, f.primary_key, f.attribute, f.value};
        auto [it, inserted] = index_.emplace(key, res_.size());
        if (!inserted) return no_index;
        by_concept_[f.concept_name].push_back(res_.size());
        by_object_[{f.concept_name, f.primary_key}].push_back(res_.size());
        res_.push_back(std::move(f));
        return res_.size() - 1;
    }

    std::vector<ResFact> res_;
    std::vector<RelFact> rel_;
    std::vector<ToolLink> links_;
    std::vector<std::string> warnings_;
    strategy strategy_ = strategy::direct_only;
    std::map<FactKey, std::size_t> index_;
    std::map<std::string, std::vector<std::size_t>> by_concept_;
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_object_;
};

struct SolveOptions {
    bool memoize = true; // per-evaluation (tool, id, id) verdict cache
};

/// Bottom-up evaluator of the reconstruction (1), derivation (2-4) and
/// interpretive (7) rules over a frozen canonical store.
class Reasoner {
public:
    Reasoner(const CanonicalStore& store, const KnowledgeBase& kb, const ToolGateway* gateway = nullptr)
        : store_(store), kb_(kb), gateway_(gateway) {}

    Model evaluate(strategy s, SolveOptions opts = {}) const {
        Model m;
        m.strategy_ = s;
        eval_direct(m);
        if (s == strategy::direct_only) return m;
        m.rel_ = eval_rel();
        Run run{m, opts, {}, {}};
        fixpoint(run, s == strategy::interpretive);
        std::sort(m.links_.begin(), m.links_.end());
        m.links_.erase(std::unique(m.links_.begin(), m.links_.end(),
                                   [](const ToolLink& a, const ToolLink& b) { return a.tie() == b.tie(); }),
                       m.links_.end());
        m.warnings_.assign(run.warnings.begin(), run.warnings.end());
        return m;
    }

    /// Checks goal constants against the knowledge base and store, evaluates,
    /// and joins.
    Bindings solve(const std::vector<GoalAtom>& goals, strategy s, SolveOptions opts = {}) const {
        validate(goals);
        return evaluate(s, opts).query(goals);
    }

    void validate(const std::vector<GoalAtom>& goals) const {
        for (const auto& g : goals) {
            if (!kb_.find_concept(g.concept_name) && store_.lookup(g.concept_name).empty())
                throw error(errc::unknown_concept_in_goal, g.concept_name);
            if (!g.attribute.is_variable())
                for (const auto& a : g.attribute.values)
                    if (!kb_.knows_attribute(a) && store_.lookup({}, {}, a).empty())
                        throw error(errc::unknown_attribute_in_goal, a);
        }
    }

    /// Rule 1: every canonical fact is a Direct res fact.
    void eval_direct(Model& m) const {
        for (const auto& f : store_.facts()) {
            ProvenanceTrace p;
            p.is_virtual = f.is_virtual;
            m.add({f.concept_name, f.primary_key, f.attribute, f.value, p});
        }
    }

    /// Rules 3-4: least fixpoint of rel over der edges and forK hops (both
    /// orientations), never revisiting an object already on the path.
    std::vector<RelFact> eval_rel() const {
        std::vector<RelFact> out;
        std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
        auto hops = fk_hops();
        auto on_path = [](const RelFact& r, const std::string& c, const std::string& k) {
            if (r.concept_name == c && r.primary_key == k) return true;
            return std::any_of(r.path.begin(), r.path.end(),
                               [&](const RelHop& h) { return h.to_concept == c && h.to_key == k; });
        };
        // One forK hop out of object (from, key) into concept `to`.
        auto expand = [&](const std::string& from, const std::string& key, const OntologyEntry& to, auto&& emit) {
            const auto* src = kb_.find_concept(from);
            for (const auto& h : hops) {
                if (h.table_x != src->table_name || h.table_y != to.table_name) continue;
                if (!src->has_attribute(h.column_x) || !to.has_attribute(h.column_y)) continue;
                for (const auto& a : store_.lookup(from, key, h.column_x))
                    for (const auto& b : store_.lookup(to.concept_name, {}, h.column_y, a.value))
                        emit(RelHop{from, key, h.table_x, h.column_x, a.value, h.table_y, h.column_y,
                                    to.concept_name, b.primary_key});
            }
        };

        std::vector<std::size_t> delta;
        for (const auto& d : kb_.derivation_edges()) {
            const auto* to = kb_.find_concept(d.concept_b);
            for (const auto& self : store_.lookup(d.concept_a)) {
                if (self.attribute != kb_.find_concept(d.concept_a)->key_attribute) continue;
                expand(d.concept_a, self.primary_key, *to, [&](RelHop hop) {
                    if (hop.to_concept == d.concept_a && hop.to_key == self.primary_key) return;
                    RelFact r{d.concept_a, d.concept_b, self.primary_key, hop.to_key, {std::move(hop)}};
                    if (seen.insert(r.tie()).second) {
                        delta.push_back(out.size());
                        out.push_back(std::move(r));
                    }
                });
            }
        }
        while (!delta.empty()) {
            std::vector<std::size_t> next;
            for (auto idx : delta) {
                for (const auto& to : kb_.ontology()) {
                    RelFact base = out[idx];
                    expand(base.derived_concept, base.derived_key, to, [&](RelHop hop) {
                        if (on_path(base, hop.to_concept, hop.to_key)) return;
                        RelFact r{base.concept_name, hop.to_concept, base.primary_key, hop.to_key, base.path};
                        r.path.push_back(std::move(hop));
                        if (seen.insert(r.tie()).second) {
                            next.push_back(out.size());
                            out.push_back(std::move(r));
                        }
                    });
                }
            }
            delta = std::move(next);
        }
        return out;
    }

private:
    const CanonicalStore& store_;
    const KnowledgeBase& kb_;
    const ToolGateway* gateway_;

    struct Run {
        Model& m;
        SolveOptions opts;
        std::map<std::tuple<std::string, std::string, std::string>, std::optional<bool>> memo;
        std::set<std::string> warnings;
    };

    std::vector<ForeignKeyLink> fk_hops() const {
        std::set<ForeignKeyLink> hops;
        for (const auto& f : kb_.foreign_keys()) {
            hops.insert(f);
            hops.insert({f.table_y, f.table_x, f.column_y, f.column_x});
        }
        return {hops.begin(), hops.end()};
    }

    // nullopt: the tool could not answer.
    std::optional<bool> probe(Run& run, const std::string& tool, const std::string& a, const std::string& b) const {
        auto key = std::make_tuple(tool, a, b);
        if (run.opts.memoize) {
            auto it = run.memo.find(key);
            if (it != run.memo.end()) return it->second;
        }
        std::optional<bool> verdict;
        try {
            if (!gateway_) throw error(errc::tool_unavailable, tool + ": no gateway configured");
            verdict = gateway_->apply_op(tool, a, b);
        } catch (const error& e) {
            if (e.code() != errc::tool_unavailable) throw;
            run.warnings.insert(e.what());
        }
        if (run.opts.memoize) run.memo.emplace(key, verdict);
        return verdict;
    }

    // The first tool in preference order that answers decides.
    std::optional<std::string> verify(Run& run, const ToolBinding& binding, const std::string& a,
                                      const std::string& b) const {
        for (const auto& op : binding.operations) {
            auto v = probe(run, op, a, b);
            if (!v) continue;
            if (*v) return op;
            return std::nullopt;
        }
        return std::nullopt;
    }

    void fixpoint(Run& run, bool interpretive) const {
        Model& m = run.m;
        std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> rel_by_target;
        for (std::size_t r = 0; r < m.rel_.size(); ++r)
            rel_by_target[{m.rel_[r].derived_concept, m.rel_[r].derived_key}].push_back(r);

        struct Similar {
            std::string concept_name, partner, relation;
            const ToolBinding* binding;
        };
        std::vector<Similar> similar;
        if (interpretive)
            for (const auto& s : kb_.similar_concepts())
                for (const auto& rel : s.relations)
                    if (const auto* b = kb_.tools_for(rel)) similar.push_back({s.concept_x, s.concept_y, rel, b});

        std::vector<std::size_t> delta(m.res_.size());
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = i;
        std::set<std::pair<std::string, std::string>> known_objects;

        while (!delta.empty()) {
            std::vector<ResFact> pending;
            // Rule 2.
            for (auto d : delta) {
                const auto& f = m.res_[d];
                auto it = rel_by_target.find({f.concept_name, f.primary_key});
                if (it == rel_by_target.end()) continue;
                for (auto r : it->second) {
                    const auto& rel = m.rel_[r];
                    ProvenanceTrace p;
                    p.kind = provenance_kind::derived;
                    p.rel = r;
                    p.source = d;
                    pending.push_back({rel.concept_name, rel.primary_key, f.attribute, f.value, p});
                }
            }
            // Rule 7.
            if (!similar.empty()) {
                auto copy = [&](const Similar& s, const std::string& pk, const std::string& tool,
                                const std::string& partner_key, std::size_t src) {
                    const auto& pf = m.res_[src];
                    if (kb_.is_key_attribute(pf.attribute)) return;
                    ProvenanceTrace p;
                    p.kind = provenance_kind::interpretive;
                    p.source = src;
                    p.guard = m.by_object_.at({s.concept_name, pk}).front();
                    p.relation = s.relation;
                    p.tool = tool;
                    p.partner_concept = s.partner;
                    p.partner_key = partner_key;
                    pending.push_back({s.concept_name, pk, pf.attribute, pf.value, p});
                };
                auto link = [&](const Similar& s, const std::string& pk, const std::string& partner_key)
                    -> std::optional<std::string> {
                    auto tool = verify(run, *s.binding, pk, partner_key);
                    if (tool) m.links_.push_back({s.concept_name, pk, s.relation, *tool, s.partner, partner_key});
                    return tool;
                };
                // Objects that gained their first fact last round, against
                // every partner fact.
                std::vector<std::pair<std::string, std::string>> fresh;
                for (auto d : delta) {
                    std::pair<std::string, std::string> obj{m.res_[d].concept_name, m.res_[d].primary_key};
                    if (known_objects.insert(obj).second) fresh.push_back(obj);
                }
                for (const auto& [concept_name, pk] : fresh)
                    for (const auto& s : similar) {
                        if (s.concept_name != concept_name) continue;
                        for (const auto& [obj, facts] : m.by_object_) {
                            if (obj.first != s.partner) continue;
                            if (auto tool = link(s, pk, obj.second))
                                for (auto src : facts) copy(s, pk, *tool, obj.second, src);
                        }
                    }
                // Partner facts new last round, against every object.
                for (auto d : delta) {
                    const auto f = m.res_[d];
                    if (kb_.is_key_attribute(f.attribute)) continue;
                    for (const auto& s : similar) {
                        if (s.partner != f.concept_name) continue;
                        for (const auto& [obj, facts] : m.by_object_) {
                            if (obj.first != s.concept_name) continue;
                            if (auto tool = link(s, obj.second, f.primary_key))
                                copy(s, obj.second, *tool, f.primary_key, d);
                        }
                    }
                }
            }
            std::vector<std::size_t> next;
            for (auto& f : pending) {
                auto idx = m.add(std::move(f));
                if (idx != no_index) next.push_back(idx);
            }
            delta = std::move(next);
        }
    }
};

} // namespace kriq
