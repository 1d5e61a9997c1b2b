#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "canonical_store.hpp"
#include "concept_reasoner.hpp"
#include "error.hpp"
#include "nlq_frontend.hpp"
#include "schema_knowledge.hpp"
#include "text.hpp"
#include "tool_gateway.hpp"

namespace kriq {

enum class answer_mode { baseline, enhanced };

inline std::string_view to_string(answer_mode m) { return m == answer_mode::baseline ? "baseline" : "enhanced"; }

inline answer_mode parse_mode(std::string_view s) {
    if (s == "baseline") return answer_mode::baseline;
    if (s == "enhanced") return answer_mode::enhanced;
    throw error(errc::invalid_spec, "mode must be baseline or enhanced, got '" + std::string(s) + "'");
}

struct ConceptualPlan {
    template_variant variant = template_variant::imperative;
    std::string concept_name;
    std::string key_var = "Pk";
    std::vector<GoalAtom> selector_goals;
    std::vector<GoalAtom> request_goals;
    std::vector<GoalAtom> condition_goals;
    std::vector<std::pair<std::string, std::string>> seeds;
    std::vector<strategy> strategy_ladder{strategy::direct_only, strategy::indirect, strategy::interpretive};
    std::vector<std::string> columns;     // output labels
    std::vector<std::string> output_vars; // aligned with columns
    std::optional<std::string> relation;  // Iterative relation action
    std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const ConceptualPlan& p) {
    auto atoms = [](const std::vector<GoalAtom>& gs) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& g : gs) a.push_back(to_string(g));
        return a;
    };
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& [c, k] : p.seeds) seeds.push_back({c, k});
    nlohmann::json ladder = nlohmann::json::array();
    for (auto s : p.strategy_ladder) ladder.push_back(std::string(to_string(s)));
    return {{"template", std::string(to_string(p.variant))},
            {"concept", p.concept_name},
            {"selector_goals", atoms(p.selector_goals)},
            {"request_goals", atoms(p.request_goals)},
            {"condition_goals", atoms(p.condition_goals)},
            {"seeds", seeds},
            {"strategy_ladder", ladder},
            {"columns", p.columns},
            {"relation", p.relation ? nlohmann::json(*p.relation) : nlohmann::json(nullptr)}};
}

struct ResultTable {
    struct Row {
        std::vector<std::string> values;
        bool derived = false;
        std::string provenance_id;
        nlohmann::json trace;
        strategy rung = strategy::direct_only;
    };
    std::vector<std::string> columns;
    std::vector<Row> rows;
    std::vector<std::string> warnings;

    std::set<std::vector<std::string>> row_set() const {
        std::set<std::vector<std::string>> out;
        for (const auto& r : rows) out.insert(r.values);
        return out;
    }
    bool empty() const { return rows.empty(); }
};

inline nlohmann::json to_json(const ResultTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"values", r.values}, {"derived", r.derived}, {"provenance_id", r.provenance_id}});
    return {{"columns", t.columns}, {"rows", rows}, {"warnings", t.warnings}};
}

/// Aligned plain-text rendering; derived rows carry a '*' marker.
inline std::string to_text(const ResultTable& t) {
    std::vector<std::string> head{""};
    head.insert(head.end(), t.columns.begin(), t.columns.end());
    head.push_back("provenance");
    std::vector<std::vector<std::string>> lines{head};
    for (const auto& r : t.rows) {
        std::vector<std::string> l{r.derived ? "*" : " "};
        l.insert(l.end(), r.values.begin(), r.values.end());
        l.push_back(r.provenance_id);
        lines.push_back(std::move(l));
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& l : lines)
        for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
    std::string out;
    for (const auto& l : lines) {
        std::string line;
        for (std::size_t i = 0; i < l.size(); ++i) {
            if (i) line += "  ";
            line += l[i] + std::string(width[i] - l[i].size(), ' ');
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    out += "(" + std::to_string(t.rows.size()) + (t.rows.size() == 1 ? " row" : " rows") + ")\n";
    for (const auto& w : t.warnings) out += "warning: " + w + "\n";
    return out;
}

// ---------------------------------------------------------------------------

/// Shortest forK path between two tables, hops traversed in either column
/// orientation. Empty when the tables coincide; nullopt when unreachable.
inline std::optional<std::vector<ForeignKeyLink>> fk_path(const KnowledgeBase& kb, const std::string& from_table,
                                                          const std::string& to_table) {
    std::set<ForeignKeyLink> hops;
    for (const auto& f : kb.foreign_keys()) {
        hops.insert(f);
        hops.insert({f.table_y, f.table_x, f.column_y, f.column_x});
    }
    std::map<std::string, std::vector<ForeignKeyLink>> path{{from_table, {}}};
    std::deque<std::string> todo{from_table};
    while (!todo.empty()) {
        auto t = todo.front();
        todo.pop_front();
        if (t == to_table) return path[t];
        for (const auto& h : hops) {
            if (h.table_x != t || path.count(h.table_y)) continue;
            auto p = path[t];
            p.push_back(h);
            path[h.table_y] = std::move(p);
            todo.push_back(h.table_y);
        }
    }
    return std::nullopt;
}

/// Turns resolved intent slots into res-goals (Algorithm 1's conceptual plan).
inline ConceptualPlan map_intent(const QueryIntent& intent, const KnowledgeBase& kb) {
    if (intent.target_concept.empty()) throw error(errc::empty_plan, "intent names no concept");
    const auto* entry = kb.find_concept(intent.target_concept);
    if (!entry) throw error(errc::unknown_concept, "'" + intent.target_concept + "'");

    ConceptualPlan p;
    p.variant = intent.variant;
    p.concept_name = entry->concept_name;
    p.warnings = intent.warnings;
    const auto& C = p.concept_name;
    auto pk = Term::variable(p.key_var);

    if (intent.selector) {
        const auto& s = *intent.selector;
        if (!entry->has_attribute(s.attribute))
            throw error(errc::unknown_attribute, s.attribute + " of " + C);
        p.selector_goals.push_back({C, pk, Term::constant(s.attribute), Term::any_of(s.values)});
        if (s.attribute == entry->key_attribute)
            for (const auto& v : s.values) p.seeds.emplace_back(C, v);
    } else {
        p.selector_goals.push_back({C, pk, Term::constant(entry->key_attribute), pk});
    }

    if (intent.condition) {
        const auto* cond = kb.find_concept(intent.condition->concept_name);
        if (!cond) throw error(errc::unknown_concept, "'" + intent.condition->concept_name + "'");
        p.condition_goals.push_back({C, pk, Term::constant(cond->key_attribute), Term::variable("Cond")});
    }

    int objects = 1, links = 0;
    for (const auto& term : intent.requested) {
        std::string owner, attr;
        try {
            std::tie(owner, attr) = kb.resolve_attribute(term, C);
        } catch (const error& e) {
            if (e.code() != errc::unknown_attribute) throw;
            if (auto rel = kb.resolve_relation(term)) {
                p.relation = rel;
                continue;
            }
            auto named = kb.concepts_named(term);
            if (named.size() != 1) throw;
            owner = named.front();
            attr = kb.find_concept(owner)->key_attribute;
        }
        auto val = Term::variable(p.output_vars.empty() ? "Val" : "Val" + std::to_string(p.output_vars.size() + 1));
        p.columns.push_back(attr);
        p.output_vars.push_back(val.var);

        const auto* target = kb.find_concept(owner);
        std::optional<std::vector<ForeignKeyLink>> path;
        if (owner != C && !kb.declares_derivative(C, owner)) path = fk_path(kb, entry->table_name, target->table_name);
        if (!path || path->empty()) {
            // Own attribute, declared derivative, or no join path: substitute.
            p.request_goals.push_back({C, pk, Term::constant(attr), val});
            continue;
        }
        std::string cur_concept = C;
        Term cur = pk;
        for (const auto& h : *path) {
            auto link = Term::variable("K" + std::to_string(++links));
            auto next = Term::variable("Pk" + std::to_string(++objects));
            auto next_concept = kb.table(h.table_y)->concept_name;
            p.request_goals.push_back({cur_concept, cur, Term::constant(h.column_x), link});
            p.request_goals.push_back({next_concept, next, Term::constant(h.column_y), link});
            cur_concept = next_concept;
            cur = next;
        }
        p.request_goals.push_back({cur_concept, cur, Term::constant(attr), val});
    }

    if (p.relation) {
        if (!p.output_vars.empty()) p.warnings.push_back("attribute requests ignored for relation " + *p.relation);
        p.request_goals.clear();
        p.columns = {entry->key_attribute, *p.relation};
        p.output_vars = {p.key_var};
    } else if (p.output_vars.empty() || intent.variant == template_variant::iterative) {
        p.columns.insert(p.columns.begin(), entry->key_attribute);
        p.output_vars.insert(p.output_vars.begin(), p.key_var);
    }
    if (p.selector_goals.empty() && p.request_goals.empty()) throw error(errc::empty_plan, "no goals for " + C);
    return p;
}

/// Stable row id: a hash of the serialized trace.
inline std::string provenance_id(const nlohmann::json& trace) { return "p" + text::hex64(text::fnv1a64(trace.dump())); }

namespace detail {

inline void add_row(ResultTable& t, std::set<std::vector<std::string>>& seen, std::vector<std::string> values,
                    nlohmann::json trace, bool derived, strategy rung) {
    if (!seen.insert(values).second) return;
    ResultTable::Row r;
    r.values = std::move(values);
    r.derived = derived;
    r.trace = std::move(trace);
    r.provenance_id = provenance_id(r.trace);
    r.rung = rung;
    t.rows.push_back(std::move(r));
}

} // namespace detail

/// Runs the plan. Baseline: direct-only, no seeds. Enhanced: seeds, then every
/// rung of the ladder; rows keep the provenance of the earliest rung.
inline ResultTable execute(const ConceptualPlan& plan, const CanonicalStore& base, const KnowledgeBase& kb,
                           const ToolGateway* gateway, answer_mode mode, SolveOptions opts = {}) {
    ResultTable t;
    t.columns = plan.columns;
    CanonicalStore seeded;
    const CanonicalStore* store = &base;
    std::vector<strategy> ladder{strategy::direct_only};
    if (mode == answer_mode::enhanced) {
        ladder = plan.strategy_ladder;
        if (!plan.seeds.empty()) {
            seeded = base;
            for (const auto& [c, k] : plan.seeds)
                if (const auto* e = kb.find_concept(c)) seeded.seed_virtual(c, k, *e);
            store = &seeded;
        }
    }
    Reasoner reasoner(*store, kb, gateway);
    std::set<std::vector<std::string>> seen;
    std::set<std::string> warnings(plan.warnings.begin(), plan.warnings.end());

    for (auto rung : ladder) {
        auto model = reasoner.evaluate(rung, opts);
        warnings.insert(model.warnings().begin(), model.warnings().end());

        std::optional<std::set<std::string>> admitted;
        if (!plan.condition_goals.empty()) {
            auto goals = plan.selector_goals;
            goals.insert(goals.end(), plan.condition_goals.begin(), plan.condition_goals.end());
            admitted = model.query(goals).values_of(plan.key_var);
        }

        if (plan.relation) {
            auto objects = model.query(plan.selector_goals);
            auto col = objects.column(plan.key_var);
            for (const auto& row : objects.rows) {
                const auto& key = row.values[*col];
                if (admitted && !admitted->count(key)) continue;
                for (const auto& l : model.links()) {
                    if (l.concept_name != plan.concept_name || l.primary_key != key || l.relation != *plan.relation)
                        continue;
                    nlohmann::json trace{{"kind", "Interpretive"},
                                         {"relation", l.relation},
                                         {"tool", l.tool},
                                         {"object", {{"concept", l.concept_name}, {"primary_key", l.primary_key}}},
                                         {"partner", {{"concept", l.partner_concept}, {"primary_key", l.partner_key}}}};
                    detail::add_row(t, seen, {key, l.partner_key}, std::move(trace), true, rung);
                }
            }
            continue;
        }

        auto goals = plan.selector_goals;
        goals.insert(goals.end(), plan.request_goals.begin(), plan.request_goals.end());
        auto b = model.query(goals);
        auto key_col = b.column(plan.key_var);
        std::vector<std::size_t> cols;
        for (const auto& v : plan.output_vars) cols.push_back(*b.column(v));
        for (const auto& row : b.rows) {
            if (admitted && !admitted->count(row.values[*key_col])) continue;
            std::vector<std::string> values;
            for (auto c : cols) values.push_back(row.values[c]);
            bool derived = false;
            nlohmann::json supports = nlohmann::json::array();
            for (auto s : row.support) {
                derived = derived || model.res()[s].provenance.kind != provenance_kind::direct;
                supports.push_back(model.trace(s));
            }
            nlohmann::json trace{{"columns", plan.columns}, {"values", values}, {"supports", supports}};
            detail::add_row(t, seen, std::move(values), std::move(trace), derived, rung);
        }
    }
    t.warnings.assign(warnings.begin(), warnings.end());
    return t;
}

// ---------------------------------------------------------------------------
// SQL rendering

struct SqlRendering {
    std::string text;
    bool complete = true;
    std::vector<GoalAtom> remainder; // goals only the knowledge rules can answer
};

namespace detail {

inline std::string sql_quote(const std::string& v) {
    std::string out = "'";
    for (char c : v) {
        if (c == '\'') out += "''";
        else out.push_back(c);
    }
    return out + "'";
}

} // namespace detail

/// Renders the directly answerable part of the plan as a select-project-join
/// statement over the base tables.
inline SqlRendering render_sql_fragment(const ConceptualPlan& plan, const KnowledgeBase& kb) {
    SqlRendering out;
    struct Group {
        const OntologyEntry* entry;
        std::string key; // rendered key term
        std::string alias;
    };
    std::vector<Group> groups;
    using Column = std::pair<std::size_t, std::string>;
    std::vector<std::string> var_order;
    std::map<std::string, std::vector<Column>> occ;
    std::vector<std::pair<Column, std::string>> filters; // column, "= 'v'" or "in (...)"

    auto constraint = [](const Term& t) {
        if (t.values.size() == 1) return "= " + detail::sql_quote(t.values.front());
        std::vector<std::string> q;
        for (const auto& v : t.values) q.push_back(detail::sql_quote(v));
        return "in (" + text::join(q, ", ") + ")";
    };
    auto note = [&](const std::string& var, Column c) {
        if (!occ.count(var)) var_order.push_back(var);
        auto& list = occ[var];
        if (std::find(list.begin(), list.end(), c) == list.end()) list.push_back(c);
    };

    std::vector<GoalAtom> atoms = plan.selector_goals;
    atoms.insert(atoms.end(), plan.request_goals.begin(), plan.request_goals.end());
    atoms.insert(atoms.end(), plan.condition_goals.begin(), plan.condition_goals.end());
    for (const auto& g : atoms) {
        const auto* e = kb.find_concept(g.concept_name);
        bool ok = e && !g.attribute.is_variable() && g.attribute.values.size() == 1 &&
                  e->has_attribute(g.attribute.values.front());
        if (!ok) {
            out.remainder.push_back(g);
            continue;
        }
        auto key = to_string(g.key);
        std::size_t gi = 0;
        while (gi < groups.size() && !(groups[gi].entry == e && groups[gi].key == key)) ++gi;
        if (gi == groups.size()) {
            groups.push_back({e, key, {}});
            Column kc{gi, e->key_attribute};
            if (g.key.is_variable()) note(g.key.var, kc);
            else filters.push_back({kc, constraint(g.key)});
        }
        Column col{gi, g.attribute.values.front()};
        if (g.value.is_variable()) {
            if (!(g.key.is_variable() && g.value.var == g.key.var && col.second == e->key_attribute))
                note(g.value.var, col);
        } else {
            filters.push_back({col, constraint(g.value)});
        }
    }

    std::vector<Column> select;
    for (const auto& v : plan.output_vars) {
        auto it = occ.find(v);
        if (it == occ.end()) continue;
        select.push_back(it->second.front());
    }
    if (plan.request_goals.empty() || !out.remainder.empty()) out.complete = false;
    if (select.empty() && !groups.empty()) select.push_back({0, groups[0].entry->key_attribute});
    if (groups.empty()) {
        out.complete = false;
        out.text = "-- no goal is answerable from the base tables\n";
        for (const auto& g : out.remainder) out.text += "-- knowledge-derived: " + to_string(g) + "\n";
        return out;
    }

    // Tables holding output columns come first.
    std::vector<std::size_t> order;
    for (const auto& c : select)
        if (std::find(order.begin(), order.end(), c.first) == order.end()) order.push_back(c.first);
    for (std::size_t i = 0; i < groups.size(); ++i)
        if (std::find(order.begin(), order.end(), i) == order.end()) order.push_back(i);
    std::set<std::string> used;
    for (auto i : order) {
        std::string base(1, static_cast<char>(std::tolower(static_cast<unsigned char>(groups[i].entry->table_name[0]))));
        auto alias = base;
        for (int n = 2; used.count(alias); ++n) alias = base + std::to_string(n);
        used.insert(alias);
        groups[i].alias = alias;
    }
    bool qualify = groups.size() > 1;
    auto col = [&](const Column& c) { return qualify ? groups[c.first].alias + "." + c.second : c.second; };

    std::vector<std::string> sel, from, where;
    for (const auto& c : select) sel.push_back(col(c));
    for (auto i : order)
        from.push_back(qualify ? groups[i].entry->table_name + " as " + groups[i].alias : groups[i].entry->table_name);
    for (const auto& v : var_order) {
        const auto& cs = occ[v];
        for (std::size_t k = 1; k < cs.size(); ++k) where.push_back(col(cs[0]) + " = " + col(cs[k]));
    }
    for (const auto& [c, cond] : filters) where.push_back(col(c) + " " + cond);

    for (const auto& g : out.remainder) out.text += "-- knowledge-derived: " + to_string(g) + "\n";
    out.text += "select " + text::join(sel, ", ") + "\nfrom " + text::join(from, ", ");
    if (!where.empty()) out.text += "\nwhere " + text::join(where, " and ");
    out.text += "\n";
    return out;
}

/// SQL for a fully direct plan; NotDirectlyRenderable otherwise (the message
/// carries the partial rendering).
inline std::string render_sql(const ConceptualPlan& plan, const KnowledgeBase& kb) {
    auto r = render_sql_fragment(plan, kb);
    if (plan.request_goals.empty())
        throw error(errc::not_directly_renderable, "plan has no request goals\n" + r.text);
    if (!r.complete) throw error(errc::not_directly_renderable, "knowledge-derived remainder\n" + r.text);
    return r.text;
}

// ---------------------------------------------------------------------------

struct PipelineResult {
    QueryTemplate query_template;
    QueryIntent intent;
    ConceptualPlan plan;
    ResultTable table;
};

/// parse, classify, extract_slots, map_intent, execute. An empty answer or an
/// unresolved selector triggers the alternate selector attributes.
inline PipelineResult run_pipeline(std::string_view sentence, const CanonicalStore& store, const KnowledgeBase& kb,
                                   const ToolGateway* gateway, answer_mode mode = answer_mode::enhanced) {
    PipelineResult out;
    out.query_template = classify(parse(sentence));
    out.intent = extract_slots_lenient(out.query_template, kb, &store);
    bool unresolved = !out.intent.selector && !out.intent.selector_constants.empty();

    auto attempt = [&](const QueryIntent& intent) {
        auto plan = map_intent(intent, kb);
        auto table = execute(plan, store, kb, gateway, mode);
        return std::make_pair(std::move(plan), std::move(table));
    };

    std::optional<std::pair<ConceptualPlan, ResultTable>> first;
    std::optional<QueryIntent> first_intent;
    if (out.intent.selector || out.intent.selector_constants.empty()) {
        first = attempt(out.intent);
        first_intent = out.intent;
        if (!first->second.empty()) {
            out.plan = std::move(first->first);
            out.table = std::move(first->second);
            return out;
        }
    }

    std::vector<std::string> constants = out.intent.selector_constants;
    if (constants.empty() && out.intent.selector) constants = out.intent.selector->values;
    if (!constants.empty()) {
        const auto* entry = kb.find_concept(out.intent.target_concept);
        for (const auto& attr : nlq::selector_order(*entry)) {
            if (out.intent.selector && out.intent.selector->attribute == attr) continue;
            auto alt = out.intent;
            alt.selector = Selector{attr, constants};
            auto r = attempt(alt);
            if (!r.second.empty()) {
                out.intent = std::move(alt);
                out.plan = std::move(r.first);
                out.table = std::move(r.second);
                return out;
            }
            if (!first) {
                first = std::move(r);
                first_intent = alt;
            }
        }
    }
    if (first) {
        out.intent = *first_intent;
        out.plan = std::move(first->first);
        out.table = std::move(first->second);
    }
    if (unresolved)
        out.table.warnings.push_back("selector '" + text::join(constants, ", ") + "' matched no attribute");
    return out;
}

} // namespace kriq
