#pragma once
// Naive bottom-up evaluation of rules 1-4 and 7, recomputing everything each
// round. Shares no evaluation code with the reasoner.

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <kriq/canonical_store.hpp>
#include <kriq/schema_knowledge.hpp>
#include <kriq/tool_gateway.hpp>

namespace oracle {

using Fact = std::tuple<std::string, std::string, std::string, std::string>;
using Rel = std::tuple<std::string, std::string, std::string, std::string>; // C, D, pkC, pkD

struct Hop {
    std::string tx, cx, ty, cy;
};

inline std::vector<Hop> hops(const kriq::KnowledgeBase& kb) {
    std::vector<Hop> out;
    for (const auto& f : kb.foreign_keys()) {
        out.push_back({f.table_x, f.column_x, f.table_y, f.column_y});
        out.push_back({f.table_y, f.column_y, f.table_x, f.column_x});
    }
    return out;
}

inline std::set<std::pair<std::string, std::string>> der_pairs(const kriq::KnowledgeBase& kb) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& d : kb.derivatives()) {
        out.insert({d.concept_a, d.concept_b});
        if (kb.options().symmetric_derivations) out.insert({d.concept_b, d.concept_a});
    }
    return out;
}

inline std::string concept_of_table(const kriq::KnowledgeBase& kb, const std::string& t) {
    for (const auto& e : kb.ontology())
        if (e.table_name == t) return e.concept_name;
    return {};
}

// Objects of `concept` joined to objects reachable by one hop from (concept, pk).
inline std::vector<std::pair<std::string, std::string>> step(const kriq::CanonicalStore& store,
                                                             const kriq::KnowledgeBase& kb, const std::string& concept_name,
                                                             const std::string& pk) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto* e = kb.find_concept(concept_name);
    for (const auto& h : hops(kb)) {
        if (h.tx != e->table_name) continue;
        auto target = concept_of_table(kb, h.ty);
        const auto* te = kb.find_concept(target);
        if (!e->has_attribute(h.cx) || !te->has_attribute(h.cy)) continue;
        for (const auto& a : store.facts()) {
            if (a.concept_name != concept_name || a.primary_key != pk || a.attribute != h.cx) continue;
            for (const auto& b : store.facts())
                if (b.concept_name == target && b.attribute == h.cy && b.value == a.value)
                    out.emplace_back(target, b.primary_key);
        }
    }
    return out;
}

inline std::set<Rel> rel(const kriq::CanonicalStore& store, const kriq::KnowledgeBase& kb) {
    std::set<Rel> r;
    auto der = der_pairs(kb);
    while (true) {
        auto next = r;
        // Rule 3.
        for (const auto& f : store.facts()) {
            const auto* e = kb.find_concept(f.concept_name);
            if (!e || f.attribute != e->key_attribute) continue;
            for (const auto& [to, key] : step(store, kb, f.concept_name, f.primary_key))
                if (der.count({f.concept_name, to}) && !(to == f.concept_name && key == f.primary_key))
                    next.insert({f.concept_name, to, f.primary_key, key});
        }
        // Rule 4.
        for (const auto& [c, d, pc, pd] : r)
            for (const auto& [to, key] : step(store, kb, d, pd))
                if (!(to == c && key == pc)) next.insert({c, to, pc, key});
        if (next == r) return r;
        r = std::move(next);
    }
}

struct Result {
    std::set<Fact> res;
    std::set<Rel> rel;
};

/// Fixpoint of res under the enabled rules.
inline Result evaluate(const kriq::CanonicalStore& store, const kriq::KnowledgeBase& kb,
                       const kriq::ToolGateway* gw, bool indirect, bool interpretive) {
    Result out;
    for (const auto& f : store.facts()) out.res.insert({f.concept_name, f.primary_key, f.attribute, f.value});
    if (!indirect && !interpretive) return out;
    out.rel = rel(store, kb);

    std::set<std::string> keys;
    for (const auto& e : kb.ontology()) keys.insert(e.key_attribute);

    auto confirms = [&](const std::vector<std::string>& ops, const std::string& a, const std::string& b) {
        for (const auto& op : ops) {
            try {
                if (!gw) throw kriq::error(kriq::errc::tool_unavailable, "none");
                return gw->apply_op(op, a, b);
            } catch (const kriq::error& e) {
                if (e.code() != kriq::errc::tool_unavailable) throw;
            }
        }
        return false;
    };

    while (true) {
        auto next = out.res;
        for (const auto& [c, d, pc, pd] : out.rel)
            for (const auto& [fc, fk, fa, fv] : out.res)
                if (fc == d && fk == pd) next.insert({c, pc, fa, fv});
        if (interpretive) {
            std::set<std::pair<std::string, std::string>> objects;
            for (const auto& [fc, fk, fa, fv] : out.res) objects.insert({fc, fk});
            for (const auto& s : kb.similar_concepts())
                for (const auto& relation : s.relations) {
                    const auto* binding = kb.tools_for(relation);
                    if (!binding) continue;
                    for (const auto& [oc, ok] : objects) {
                        if (oc != s.concept_x) continue;
                        for (const auto& [pc2, pk2] : objects) {
                            if (pc2 != s.concept_y || !confirms(binding->operations, ok, pk2)) continue;
                            for (const auto& [fc, fk, fa, fv] : out.res)
                                if (fc == pc2 && fk == pk2 && !keys.count(fa)) next.insert({oc, ok, fa, fv});
                        }
                    }
                }
        }
        if (next == out.res) return out;
        out.res = std::move(next);
    }
}

} // namespace oracle
