#pragma once
// Seeded generators for property tests.

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <kriq/canonical_store.hpp>
#include <kriq/schema_knowledge.hpp>
#include <kriq/tool_gateway.hpp>

namespace gen {

using rng = std::mt19937;

inline std::size_t pick(rng& r, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(r); }
inline bool chance(rng& r, double p) { return std::bernoulli_distribution(p)(r); }

/// A table with a unique non-empty key column and sparse cells.
struct TableCase {
    kriq::RelationalTable table;
    kriq::OntologyEntry entry;
};

inline TableCase random_table(rng& r, std::size_t max_rows = 8, std::size_t max_cols = 5) {
    TableCase c;
    std::size_t ncols = 1 + pick(r, max_cols);
    std::size_t key_col = pick(r, ncols);
    c.table.name = "T";
    c.entry = {"Thing", "T", "", {}};
    for (std::size_t i = 0; i < ncols; ++i) {
        auto name = "c" + std::to_string(i);
        c.table.columns.push_back(name);
        if (i == key_col) c.entry.key_attribute = name;
        else c.entry.attributes.push_back(name);
    }
    std::size_t nrows = pick(r, max_rows + 1);
    std::set<std::string> keys;
    for (std::size_t i = 0; i < nrows; ++i) {
        std::vector<std::string> row;
        for (std::size_t j = 0; j < ncols; ++j) {
            if (j == key_col) {
                std::string k;
                do k = "k" + std::to_string(pick(r, 100)); while (!keys.insert(k).second);
                row.push_back(k);
            } else {
                // Values may contain delimiters and quotes.
                static const char* pool[] = {"", "", "a", "b,c", "say \"hi\"", "x y", "7"};
                row.push_back(pool[pick(r, std::size(pool))]);
            }
        }
        c.table.rows.push_back(std::move(row));
    }
    return c;
}

/// A random knowledge base, canonical store and pair-fixture gateway, within
/// the bounds: up to 5 concepts, 50 facts, 3 forK rows, 2 der rows.
struct World {
    kriq::KnowledgeBase kb;
    kriq::CanonicalStore store;
    kriq::ToolGateway gateway;
};

inline World random_world(rng& r) {
    World w;
    kriq::KnowledgeBase::Tables t;
    std::size_t nconcepts = 1 + pick(r, 5);
    static const std::vector<std::string> attr_pool{"A", "B", "L", "M"};
    for (std::size_t i = 0; i < nconcepts; ++i) {
        auto id = std::to_string(i);
        kriq::OntologyEntry e{"C" + id, "T" + id, "K" + id, {}};
        for (const auto& a : attr_pool)
            if (chance(r, 0.7)) e.attributes.push_back(a);
        t.ontology.push_back(e);
    }
    auto concept_at = [&](std::size_t i) { return t.ontology[i].concept_name; };

    std::size_t nder = 1 + pick(r, 2);
    for (std::size_t i = 0; i < nder; ++i) {
        auto a = pick(r, nconcepts), b = pick(r, nconcepts);
        if (a == b && nconcepts > 1 && chance(r, 0.8)) b = (a + 1) % nconcepts;
        t.derivatives.push_back({concept_at(a), concept_at(b)});
    }
    t.options.symmetric_derivations = chance(r, 0.5);

    // forK rows mostly follow der edges so rel has something to walk.
    std::size_t nfk = 1 + pick(r, 3);
    for (std::size_t i = 0; i < nfk; ++i) {
        std::size_t xi = pick(r, nconcepts), yi = pick(r, nconcepts);
        if (!t.derivatives.empty() && chance(r, 0.6)) {
            const auto& d = t.derivatives[pick(r, t.derivatives.size())];
            xi = std::stoul(d.concept_a.substr(1));
            yi = std::stoul(d.concept_b.substr(1));
        }
        const auto& x = t.ontology[xi];
        const auto& y = t.ontology[yi];
        auto ax = x.all_attributes(), ay = y.all_attributes();
        // Usually an attribute of x referencing the key of y.
        auto cx = ax.size() > 1 && chance(r, 0.8) ? ax[1 + pick(r, ax.size() - 1)] : ax[pick(r, ax.size())];
        auto cy = chance(r, 0.7) ? y.key_attribute : ay[pick(r, ay.size())];
        t.foreign_keys.push_back({x.table_name, y.table_name, cx, cy});
    }

    // Tools: two registered pair fixtures and one name nobody registers.
    static const std::vector<std::string> tools{"ToolA", "ToolB", "Offline"};
    static const std::vector<std::string> relations{"R1", "R2"};
    for (const auto& rel : relations) {
        if (!chance(r, 0.7)) continue;
        std::vector<std::string> ops;
        for (const auto& tool : tools)
            if (chance(r, 0.6)) ops.push_back(tool);
        if (ops.empty()) ops.push_back(tools[pick(r, tools.size())]);
        std::shuffle(ops.begin(), ops.end(), r);
        t.tools.push_back({rel, ops});
    }
    std::size_t nsim = 1 + pick(r, 2);
    for (std::size_t i = 0; i < nsim; ++i) {
        std::vector<std::string> rels{relations[pick(r, 2)]};
        if (chance(r, 0.3)) rels.push_back(relations[pick(r, 2)] == rels[0] ? "R9" : relations[pick(r, 2)]);
        t.similar_concepts.push_back({concept_at(pick(r, nconcepts)), concept_at(pick(r, nconcepts)), rels});
    }
    w.kb = kriq::KnowledgeBase::build(t);

    // Keys and values come from small domains so joins and tool hits occur.
    auto key = [&] { return "k" + std::to_string(pick(r, 6)); };
    auto value = [&] { return chance(r, 0.5) ? key() : "v" + std::to_string(pick(r, 4)); };
    std::size_t budget = 15 + pick(r, 36);
    for (const auto& e : w.kb.ontology()) {
        kriq::RelationalTable table{e.table_name, e.all_attributes(), {}};
        std::set<std::string> used;
        std::size_t nrows = 1 + pick(r, 5);
        for (std::size_t i = 0; i < nrows && budget > 0; ++i) {
            auto k = key();
            if (!used.insert(k).second) continue;
            std::vector<std::string> row;
            for (const auto& col : table.columns) {
                if (col == e.key_attribute) {
                    row.push_back(k);
                    --budget;
                } else if (budget > 0 && chance(r, 0.6)) {
                    row.push_back(value());
                    --budget;
                } else {
                    row.push_back("");
                }
            }
            table.rows.push_back(std::move(row));
        }
        w.store.add_table(table, e);
    }

    for (std::size_t i = 0; i < 2; ++i) {
        kriq::PairFixture f{tools[i], {}};
        std::size_t npairs = 2 + pick(r, 6);
        for (std::size_t j = 0; j < npairs; ++j) f.pairs.insert({key(), key()});
        w.gateway.register_pairs(f, {relations[pick(r, 2)]}, chance(r, 0.5));
    }
    return w;
}

} // namespace gen
