#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "canonical_store.hpp"
#include "error.hpp"
#include "schema_knowledge.hpp"
#include "text.hpp"

namespace kriq {

/// Constituency tree. Leaves carry a token; inner nodes carry children.
struct ParseTree {
    std::string label;
    std::string token;
    std::vector<ParseTree> children;

    static ParseTree leaf(std::string label, std::string token) { return {std::move(label), std::move(token), {}}; }
    static ParseTree node(std::string label, std::vector<ParseTree> children) {
        return {std::move(label), {}, std::move(children)};
    }

    bool is_leaf() const { return children.empty(); }

    std::vector<std::string> leaves() const {
        std::vector<std::string> out;
        collect(out);
        return out;
    }

    std::string to_bracketed() const {
        if (is_leaf()) return "(" + label + " " + token + ")";
        std::string out = "(" + label;
        for (const auto& c : children) out += " " + c.to_bracketed();
        return out + ")";
    }

    const ParseTree* child(std::string_view l, std::size_t from = 0) const {
        for (std::size_t i = from; i < children.size(); ++i)
            if (children[i].label == l) return &children[i];
        return nullptr;
    }

    bool operator==(const ParseTree&) const = default;

private:
    void collect(std::vector<std::string>& out) const {
        if (is_leaf()) {
            if (!token.empty()) out.push_back(token);
            return;
        }
        for (const auto& c : children) c.collect(out);
    }
};

/// Reads a Penn-style bracketed tree, e.g. "(S (VP (VB Find) (NP (NN x))))".
inline ParseTree parse_bracketed(std::string_view src) {
    std::size_t i = 0;
    auto fail = [&](const std::string& what) -> void {
        throw error(errc::unparsable_sentence, "bracketed tree: " + what + " at offset " + std::to_string(i));
    };
    auto ws = [&] {
        while (i < src.size() && std::isspace(static_cast<unsigned char>(src[i]))) ++i;
    };
    auto atom = [&] {
        std::string out;
        while (i < src.size() && !std::isspace(static_cast<unsigned char>(src[i])) && src[i] != '(' && src[i] != ')')
            out.push_back(src[i++]);
        return out;
    };
    std::function<ParseTree()> node = [&]() -> ParseTree {
        ws();
        if (i >= src.size() || src[i] != '(') fail("expected '('");
        ++i;
        ws();
        std::string label = (i < src.size() && src[i] != '(') ? atom() : std::string{};
        ws();
        if (i < src.size() && src[i] != '(' && src[i] != ')') {
            auto tok = atom();
            ws();
            if (i >= src.size() || src[i] != ')') fail("leaf with more than one token");
            ++i;
            return ParseTree::leaf(label, tok);
        }
        std::vector<ParseTree> kids;
        while (true) {
            ws();
            if (i >= src.size()) fail("unbalanced brackets");
            if (src[i] == ')') break;
            kids.push_back(node());
        }
        ++i;
        if (kids.empty()) fail("empty node");
        return ParseTree::node(label.empty() ? "ROOT" : label, std::move(kids));
    };
    auto t = node();
    ws();
    if (i != src.size()) fail("trailing input");
    return t;
}

enum class template_variant { imperative, iterative, conditional };

inline std::string_view to_string(template_variant v) {
    switch (v) {
    case template_variant::imperative: return "Imperative";
    case template_variant::iterative: return "Iterative";
    case template_variant::conditional: return "Conditional";
    }
    return "?";
}

/// The matched template with its constituents.
struct QueryTemplate {
    template_variant variant = template_variant::imperative;
    std::string verb;
    std::vector<std::string> object;      // Imperative object / action object
    std::vector<std::string> range;       // Iterative range NP
    std::vector<std::string> cond_np;     // Conditional subject
    std::vector<std::string> cond_vp;     // Conditional predicate (copula first)
};

struct Selector {
    std::string attribute;
    std::vector<std::string> values;
    bool operator==(const Selector&) const = default;
};

struct QueryCondition {
    std::string predicate;
    std::string concept_name; // the concept whose existence the predicate asserts
};

struct QueryIntent {
    template_variant variant = template_variant::imperative;
    std::string action;
    std::string target_concept;
    std::optional<Selector> selector;
    std::vector<std::string> selector_constants; // raw constants, kept for alternate mappings
    std::vector<std::string> requested;
    std::optional<QueryCondition> condition;
    std::optional<std::string> qualifier;
    std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const QueryIntent& q) {
    nlohmann::json j;
    j["template"] = std::string(to_string(q.variant));
    j["action"] = q.action;
    j["target_concept"] = q.target_concept;
    j["selector"] = q.selector ? nlohmann::json{{"attribute", q.selector->attribute}, {"values", q.selector->values}}
                               : nlohmann::json(nullptr);
    j["requested"] = q.requested;
    j["condition"] = q.condition ? nlohmann::json{{"predicate", q.condition->predicate},
                                                  {"concept", q.condition->concept_name}}
                                 : nlohmann::json(nullptr);
    j["qualifier"] = q.qualifier ? nlohmann::json(*q.qualifier) : nlohmann::json(nullptr);
    j["warnings"] = q.warnings;
    return j;
}

namespace nlq {

inline const std::set<std::string>& leading_verbs() {
    static const std::set<std::string> v{"find", "list", "show", "get", "retrieve", "what", "which"};
    return v;
}
inline const std::set<std::string>& copulas() {
    static const std::set<std::string> v{"is", "are", "was", "were", "has", "have", "does", "do", "encodes", "encode"};
    return v;
}
inline const std::set<std::string>& determiners() {
    static const std::set<std::string> v{"the", "a", "an", "all", "each", "every", "some", "any"};
    return v;
}
inline const std::set<std::string>& pronouns() {
    static const std::set<std::string> v{"its", "their", "his", "her", "it", "them", "they"};
    return v;
}
inline bool is_conjunction(const std::string& w) { return w == "and" || w == "or"; }

// Strips surrounding punctuation; inner punctuation ("F-box") survives.
inline std::vector<std::string> tokenize(std::string_view sentence) {
    std::vector<std::string> out;
    for (auto w : text::split_words(sentence)) {
        const std::string punct = ",.;:?!()\"'[]{}";
        auto b = w.find_first_not_of(punct);
        if (b == std::string::npos) continue;
        auto e = w.find_last_not_of(punct);
        out.push_back(w.substr(b, e - b + 1));
    }
    return out;
}

inline std::string tag(const std::string& tok) {
    auto l = text::lower(tok);
    if (determiners().count(l)) return "DT";
    if (l == "its" || l == "their") return "PRP$";
    if (pronouns().count(l)) return "PRP";
    if (is_conjunction(l)) return "CC";
    if (l == "of" || l == "as" || l == "for" || l == "in" || l == "from") return "IN";
    if (std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) return "CD";
    bool caps = std::any_of(tok.begin() + 1, tok.end(), [](unsigned char c) { return std::isupper(c) || std::isdigit(c); });
    if (caps || std::isupper(static_cast<unsigned char>(tok[0]))) return "NNP";
    if (l.size() > 3 && l.back() == 's' && l[l.size() - 2] != 's') return "NNS";
    return "NN";
}

inline std::vector<ParseTree> tagged(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    std::vector<ParseTree> out;
    for (auto i = b; i < e; ++i) out.push_back(ParseTree::leaf(tag(toks[i]), toks[i]));
    return out;
}

// "X of Y" becomes (NP (NP X) (PP (IN of) (NP Y))).
inline ParseTree noun_phrase(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    for (auto i = b + 1; i + 1 < e; ++i)
        if (text::lower(toks[i]) == "of")
            return ParseTree::node("NP", {ParseTree::node("NP", tagged(toks, b, i)),
                                          ParseTree::node("PP", {ParseTree::leaf("IN", toks[i]),
                                                                 ParseTree::node("NP", tagged(toks, i + 1, e))})});
    return ParseTree::node("NP", tagged(toks, b, e));
}

// (VP (VB verb) [copula] (NP ...)); fails when the object is empty.
inline ParseTree verb_phrase(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    if (b >= e || !leading_verbs().count(text::lower(toks[b])))
        throw error(errc::unparsable_sentence, "expected an action verb");
    std::vector<ParseTree> kids{ParseTree::leaf("VB", toks[b])};
    auto i = b + 1;
    if (i < e && copulas().count(text::lower(toks[i]))) kids.push_back(ParseTree::leaf("VBP", toks[i++]));
    if (i >= e) throw error(errc::unparsable_sentence, "action '" + toks[b] + "' has no object");
    kids.push_back(noun_phrase(toks, i, e));
    return ParseTree::node("VP", std::move(kids));
}

} // namespace nlq

/// Chunks a sentence into a constituency tree. Input that starts with '(' is
/// taken as an already bracketed parse.
inline ParseTree parse(std::string_view sentence) {
    auto trimmed = text::trim(sentence);
    if (trimmed.empty()) throw error(errc::unparsable_sentence, "empty sentence");
    if (trimmed.front() == '(') return parse_bracketed(trimmed);

    auto toks = nlq::tokenize(trimmed);
    if (toks.empty()) throw error(errc::unparsable_sentence, "no words in '" + trimmed + "'");
    std::vector<std::string> lw;
    for (const auto& t : toks) lw.push_back(text::lower(t));
    auto n = toks.size();

    if (lw[0] == "if") {
        // The clause boundary is "then", or failing that the first comma.
        std::size_t then = 0;
        bool has_then = false;
        for (std::size_t i = 1; i < n; ++i)
            if (lw[i] == "then") {
                then = i;
                has_then = true;
                break;
            }
        if (!has_then) {
            auto words = text::split_words(trimmed);
            std::size_t count = 0;
            for (const auto& w : words) {
                if (!nlq::tokenize(w).empty()) ++count;
                if (w.back() == ',') {
                    then = count;
                    break;
                }
            }
            if (!then) throw error(errc::unparsable_sentence, "conditional without 'then'");
        }
        std::size_t cop = 0;
        for (std::size_t i = 1; i < then; ++i)
            if (nlq::copulas().count(lw[i])) {
                cop = i;
                break;
            }
        if (cop <= 1) throw error(errc::unparsable_sentence, "condition lacks a subject and predicate");
        std::vector<ParseTree> vp{ParseTree::leaf("VBZ", toks[cop])};
        if (cop + 1 < then) vp.push_back(ParseTree::node("NP", nlq::tagged(toks, cop + 1, then)));
        auto clause = ParseTree::node("S'", {nlq::noun_phrase(toks, 1, cop), ParseTree::node("VP", std::move(vp))});
        std::vector<ParseTree> kids{ParseTree::leaf("IN", toks[0]), std::move(clause)};
        std::size_t act = then;
        if (has_then) kids.push_back(ParseTree::leaf("RB", toks[act++]));
        kids.push_back(nlq::verb_phrase(toks, act, n));
        return ParseTree::node("S", std::move(kids));
    }

    if (lw[0] == "for" && n > 1 && (lw[1] == "all" || lw[1] == "each" || lw[1] == "every")) {
        std::size_t act = 0;
        for (std::size_t i = 2; i < n; ++i)
            if (nlq::leading_verbs().count(lw[i])) {
                act = i;
                break;
            }
        if (!act || act == 2) throw error(errc::unparsable_sentence, "iteration without range or action");
        return ParseTree::node("S", {ParseTree::node("PP", {ParseTree::leaf("IN", toks[0])}),
                                     nlq::noun_phrase(toks, 1, act), nlq::verb_phrase(toks, act, n)});
    }

    if (nlq::leading_verbs().count(lw[0])) return ParseTree::node("S", {nlq::verb_phrase(toks, 0, n)});

    throw error(errc::unparsable_sentence, "no clause structure in '" + trimmed + "'");
}

namespace nlq {

inline const ParseTree& unwrap(const ParseTree& t) {
    const ParseTree* p = &t;
    while ((p->label == "ROOT" || p->label.empty()) && p->children.size() == 1) p = &p->children.front();
    return *p;
}

inline std::string first_leaf(const ParseTree& t) {
    auto l = t.leaves();
    return l.empty() ? std::string{} : text::lower(l.front());
}

inline bool is_verb_tag(const std::string& l) { return l.rfind("VB", 0) == 0 || l == "WP" || l == "WDT"; }

// Verb and object of an action VP, tolerating (SBARQ (WHNP ..) (SQ ..)).
inline bool action_of(const ParseTree& vp, QueryTemplate& out) {
    if (vp.is_leaf()) return false;
    std::size_t i = 0;
    while (i < vp.children.size() && vp.children[i].is_leaf() && is_verb_tag(vp.children[i].label)) {
        if (out.verb.empty()) out.verb = vp.children[i].token;
        ++i;
    }
    if (out.verb.empty()) return false;
    for (; i < vp.children.size(); ++i)
        if (vp.children[i].label == "NP") {
            out.object = vp.children[i].leaves();
            return true;
        }
    return false;
}

} // namespace nlq

/// Matches the tree against the Conditional, Iterative and Imperative
/// templates, in that order.
inline QueryTemplate classify(const ParseTree& tree) {
    const auto& top = nlq::unwrap(tree);
    QueryTemplate q;
    const auto& kids = top.children;

    // Conditional: If <S'(NP VP)> [then] <VP>
    for (std::size_t i = 0; i < kids.size(); ++i) {
        const ParseTree* clause = nullptr;
        if (kids[i].is_leaf() && text::iequals(kids[i].token, "if")) {
            for (auto j = i + 1; j < kids.size() && !clause; ++j)
                if (kids[j].label == "S'" || kids[j].label == "S") clause = &kids[j];
        } else if (kids[i].label == "SBAR" && nlq::first_leaf(kids[i]) == "if") {
            clause = kids[i].child("S");
            if (!clause) clause = kids[i].child("S'");
        }
        if (!clause) continue;
        const auto* np = clause->child("NP");
        const auto* vp = clause->child("VP");
        const ParseTree* action = nullptr;
        for (auto j = kids.size(); j-- > i + 1;)
            if (kids[j].label == "VP" && &kids[j] != clause) {
                action = &kids[j];
                break;
            }
        if (np && vp && action) {
            q.variant = template_variant::conditional;
            q.cond_np = np->leaves();
            q.cond_vp = vp->leaves();
            if (nlq::action_of(*action, q)) return q;
        }
        throw error(errc::no_template_match, "conditional clause without subject, predicate or action");
    }

    // Iterative: (PP For ..) (NP all ..) (VP ..)
    for (std::size_t i = 0; i < kids.size(); ++i) {
        if (kids[i].label != "PP" || nlq::first_leaf(kids[i]) != "for") continue;
        const ParseTree* range = kids[i].child("NP");
        std::size_t next = i + 1;
        if (!range && next < kids.size() && kids[next].label == "NP") range = &kids[next++];
        if (!range) break;
        auto lv = range->leaves();
        if (lv.empty()) break;
        auto quant = text::lower(lv.front());
        if (quant != "all" && quant != "each" && quant != "every") break;
        const ParseTree* vp = top.child("VP", next);
        if (!vp) break;
        q.variant = template_variant::iterative;
        q.range = lv;
        if (nlq::action_of(*vp, q)) return q;
        throw error(errc::no_template_match, "iteration without an action object");
    }

    // Imperative: a VP (or SBARQ/SQ) with a leading verb and an object NP.
    q = QueryTemplate{};
    if (top.label == "VP" && nlq::action_of(top, q)) return q;
    for (const auto& k : kids)
        if (k.label == "VP" && nlq::action_of(k, q)) return q;
    if (top.label == "SBARQ" || top.label == "S") {
        const auto* wh = top.child("WHNP");
        const auto* sq = top.child("SQ");
        if (wh && sq) {
            ParseTree flat = ParseTree::node("VP", {});
            flat.children.push_back(ParseTree::leaf("WP", wh->leaves().empty() ? "what" : wh->leaves().front()));
            for (const auto& c : sq->children) flat.children.push_back(c);
            if (nlq::action_of(flat, q)) return q;
        }
    }
    throw error(errc::no_template_match, "'" + text::join(tree.leaves(), " ") + "'");
}

// ---------------------------------------------------------------------------
// Slot extraction

namespace nlq {

/// Attribute precedence for selector matching: key, then "Name" attributes,
/// then the rest in ontology order.
inline std::vector<std::string> selector_order(const OntologyEntry& e) {
    std::vector<std::string> out{e.key_attribute};
    for (const auto& a : e.attributes)
        if (a.find("Name") != std::string::npos) out.push_back(a);
    for (const auto& a : e.attributes)
        if (a.find("Name") == std::string::npos) out.push_back(a);
    return out;
}

/// Tries `values` against one attribute: exact occurrence, or a
/// case-insensitive prefix of stored values (replaced by the full values).
inline std::optional<Selector> match_attribute(const CanonicalStore& store, const OntologyEntry& e,
                                               const std::string& attr, const std::vector<std::string>& values) {
    std::vector<std::string> out;
    bool any = false;
    bool is_key = attr == e.key_attribute;
    for (const auto& v : values) {
        if (!store.lookup(e.concept_name, std::nullopt, attr, v).empty()) {
            out.push_back(v);
            any = true;
            continue;
        }
        std::vector<std::string> expanded;
        for (const auto& f : store.lookup(e.concept_name, std::nullopt, attr))
            if (!f.is_virtual && text::istarts_with(f.value, v)) expanded.push_back(f.value);
        std::sort(expanded.begin(), expanded.end());
        expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
        if (!expanded.empty()) {
            any = true;
            out.insert(out.end(), expanded.begin(), expanded.end());
        } else if (is_key) {
            out.push_back(v); // absent keys stay; the planner seeds them
        }
    }
    if (!any) return std::nullopt;
    return Selector{attr, out};
}

inline std::optional<Selector> match_selector(const CanonicalStore& store, const OntologyEntry& e,
                                              const std::vector<std::string>& values) {
    for (const auto& attr : selector_order(e))
        if (auto s = match_attribute(store, e, attr, values)) return s;
    return std::nullopt;
}

inline std::vector<std::string> split_conjuncts(const std::vector<std::string>& toks) {
    std::vector<std::string> out;
    std::vector<std::string> cur;
    for (const auto& t : toks) {
        if (is_conjunction(text::lower(t))) {
            if (!cur.empty()) out.push_back(text::join(cur, " "));
            cur.clear();
        } else {
            cur.push_back(t);
        }
    }
    if (!cur.empty()) out.push_back(text::join(cur, " "));
    return out;
}

inline std::vector<std::string> strip_function_words(const std::vector<std::string>& toks, bool* pronoun = nullptr) {
    std::vector<std::string> out;
    for (const auto& t : toks) {
        auto l = text::lower(t);
        if (determiners().count(l)) continue;
        if (pronouns().count(l)) {
            if (pronoun) *pronoun = true;
            continue;
        }
        out.push_back(t);
    }
    return out;
}

inline bool names_concept(const KnowledgeBase& kb, const std::vector<std::string>& toks) {
    return !toks.empty() && kb.concepts_named(text::join(toks, " ")).size() == 1;
}

inline bool resolvable_request(const KnowledgeBase& kb, const std::string& term) {
    if (kb.resolve_relation(term)) return true;
    try {
        kb.resolve_attribute(term);
        return true;
    } catch (const error& e) {
        return e.code() == errc::ambiguous_attribute;
    }
}

struct Element {
    std::string concept_name;
    std::vector<std::string> before, after, whole;
};

// Rightmost window of up to three words that names a concept.
inline std::optional<Element> anchor(const KnowledgeBase& kb, const std::vector<std::string>& toks) {
    for (std::size_t len = std::min<std::size_t>(3, toks.size()); len >= 1; --len) {
        for (auto b = toks.size() - len + 1; b-- > 0;) {
            std::vector<std::string> w(toks.begin() + b, toks.begin() + b + len);
            if (names_concept(kb, w)) {
                Element el;
                el.concept_name = kb.resolve_concept(text::join(w, " "));
                el.before.assign(toks.begin(), toks.begin() + b);
                el.after.assign(toks.begin() + b + len, toks.end());
                el.whole = toks;
                return el;
            }
        }
    }
    return std::nullopt;
}

struct Resolved {
    std::string concept_name;
    std::optional<Selector> selector;
    std::vector<std::string> constants;
    std::vector<std::string> leftover;
};

/// Finds the concept and selector of an element phrase. `fallback_concept`
/// applies when no word of the element names a concept.
inline Resolved resolve_element(const KnowledgeBase& kb, const CanonicalStore* store, const std::vector<std::string>& toks,
                                const std::string& fallback_concept) {
    Resolved r;
    auto el = anchor(kb, toks);
    std::vector<std::vector<std::string>> candidates;
    if (el) {
        r.concept_name = el->concept_name;
        if (!el->after.empty()) candidates.push_back(split_conjuncts(el->after));
        if (!el->before.empty() || !el->after.empty())
            candidates.push_back({text::join(el->whole, " ")});
        if (!el->before.empty() && !names_concept(kb, el->before)) candidates.push_back({text::join(el->before, " ")});
        if (!el->after.empty()) r.constants = split_conjuncts(el->after);
        for (const auto& w : el->before)
            if (!names_concept(kb, {w})) r.leftover.push_back(w);
        r.leftover.insert(r.leftover.end(), el->after.begin(), el->after.end());
    } else {
        r.concept_name = fallback_concept;
        if (!toks.empty()) {
            candidates.push_back(split_conjuncts(toks));
            candidates.push_back({text::join(toks, " ")});
            r.leftover = toks;
        }
    }
    if (store && !r.concept_name.empty()) {
        const auto* e = kb.find_concept(r.concept_name);
        for (const auto& c : candidates)
            if (auto s = match_selector(*store, *e, c)) {
                r.selector = s;
                r.leftover.clear();
                break;
            }
    } else if (store) {
        // No concept named anywhere: look for the constants in every concept.
        // Precedence classes (key, name, rest) apply across concepts.
        for (const auto& c : candidates) {
            for (int cls = 0; cls < 3 && !r.selector; ++cls)
                for (const auto& e : kb.ontology()) {
                    auto order = selector_order(e);
                    for (std::size_t i = 0; i < order.size() && !r.selector; ++i) {
                        int k = i == 0 ? 0 : (order[i].find("Name") != std::string::npos ? 1 : 2);
                        if (k != cls) continue;
                        if (auto s = match_attribute(*store, e, order[i], c)) {
                            r.concept_name = e.concept_name;
                            r.selector = s;
                            r.leftover.clear();
                        }
                    }
                    if (r.selector) break;
                }
            if (r.selector) break;
        }
    }
    return r;
}

} // namespace nlq

/// Internal form of slot extraction: an unresolved selector is reported
/// through `selector_constants` with no `selector`, instead of an error.
inline QueryIntent extract_slots_lenient(const QueryTemplate& t, const KnowledgeBase& kb, const CanonicalStore* store) {
    using namespace nlq;
    QueryIntent q;
    q.variant = t.variant;
    q.action = kb.resolve_action(t.verb).value_or(text::lower(t.verb));

    auto take_element = [&](const std::vector<std::string>& toks, const std::string& fallback) {
        auto r = resolve_element(kb, store, toks, fallback);
        q.target_concept = r.concept_name;
        q.selector = r.selector;
        q.selector_constants = r.constants;
        if (!r.selector && !r.leftover.empty() && r.constants.empty()) {
            q.qualifier = text::join(r.leftover, " ");
            q.warnings.push_back("qualifier '" + *q.qualifier + "' not applied");
        }
    };

    // Splits "A and B of element" into requested terms and the element.
    auto split_request = [&](const std::vector<std::string>& raw, bool bound) {
        bool pronoun = false;
        auto toks = strip_function_words(raw, &pronoun);
        std::vector<std::string> attrs, element;
        auto of = std::find_if(toks.begin(), toks.end(), [](const std::string& w) { return text::lower(w) == "of"; });
        if (of != toks.end()) {
            attrs.assign(toks.begin(), of);
            element.assign(of + 1, toks.end());
        } else if (bound || pronoun) {
            attrs = toks;
        } else {
            element = toks;
            for (std::size_t k = 1; k < toks.size(); ++k) {
                std::vector<std::string> suffix(toks.begin() + k, toks.end());
                if (resolvable_request(kb, text::join(suffix, " "))) {
                    attrs = suffix;
                    element.assign(toks.begin(), toks.begin() + k);
                    break;
                }
            }
        }
        return std::make_pair(split_conjuncts(attrs), element);
    };

    if (t.variant == template_variant::imperative) {
        auto [attrs, element] = split_request(t.object, false);
        // "genes of cyanobacteria": the requested term is itself the concept.
        std::string fallback;
        std::vector<std::string> modifiers;
        if (attrs.size() == 1 && !anchor(kb, element)) {
            auto words = text::split_words(attrs.front());
            if (names_concept(kb, words)) {
                fallback = kb.resolve_concept(attrs.front());
                attrs.clear();
            } else if (words.size() > 1 && names_concept(kb, {words.back()}) && !resolvable_request(kb, attrs.front())) {
                fallback = kb.resolve_concept(words.back());
                modifiers.assign(words.begin(), words.end() - 1);
                attrs.clear();
            }
        }
        take_element(element, fallback);
        if (!modifiers.empty()) {
            auto m = text::join(modifiers, " ");
            q.qualifier = q.qualifier ? m + " " + *q.qualifier : m;
            q.warnings.assign(1, "qualifier '" + *q.qualifier + "' not applied");
        }
        q.requested = attrs;
    } else if (t.variant == template_variant::iterative) {
        auto range = strip_function_words(t.range);
        auto of = std::find_if(range.begin(), range.end(), [](const std::string& w) { return text::lower(w) == "of"; });
        std::vector<std::string> head(range.begin(), of);
        std::vector<std::string> rest(of == range.end() ? of : of + 1, range.end());
        if (names_concept(kb, head)) {
            take_element(rest, kb.resolve_concept(text::join(head, " ")));
        } else {
            take_element(range, "");
        }
        q.requested = split_request(t.object, true).first;
    } else {
        take_element(strip_function_words(t.cond_np), "");
        std::vector<std::string> pred(t.cond_vp.begin() + (t.cond_vp.empty() ? 0 : 1), t.cond_vp.end());
        auto rule = kb.resolve_condition(text::join(pred, " "));
        if (!rule) throw error(errc::unknown_attribute, "condition '" + text::join(pred, " ") + "'");
        q.condition = QueryCondition{rule->predicate, rule->concept_name};
        q.requested = split_request(t.object, true).first;
    }
    if (q.target_concept.empty())
        throw error(errc::unknown_concept, "no concept in '" + text::join(t.object, " ") + "'");
    return q;
}

/// Fills the intent slots of a classified template. Constants are matched
/// against `store` when given.
inline QueryIntent extract_slots(const QueryTemplate& t, const KnowledgeBase& kb, const CanonicalStore* store = nullptr) {
    auto q = extract_slots_lenient(t, kb, store);
    if (!q.selector && !q.selector_constants.empty() && store)
        throw error(errc::selector_unresolved, "'" + text::join(q.selector_constants, ", ") + "' matches no attribute of " +
                                                   q.target_concept);
    return q;
}

} // namespace kriq
