#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "canonical_store.hpp"
#include "error.hpp"
#include "text.hpp"

namespace kriq {

enum class adapter_kind { fixture, web_form, web_service, flat_file };

inline std::string_view to_string(adapter_kind a) {
    switch (a) {
    case adapter_kind::fixture: return "fixture";
    case adapter_kind::web_form: return "web-form";
    case adapter_kind::web_service: return "web-service";
    case adapter_kind::flat_file: return "flat-file";
    }
    return "?";
}

/// Declarative access to an external tool or database, in the shape of an
/// extract statement:
///
///   extract <extract_fields>
///   using matcher <matcher> wrapper <wrapper> filler <filler> | transformer <transformer>
///   from <location> submit <rows over submit_schema> where <form_condition>
struct ToolSpec {
    std::string name;
    std::vector<std::string> verifies;
    adapter_kind adapter = adapter_kind::fixture;
    std::string location;
    std::vector<std::string> extract_fields;
    std::optional<std::string> matcher;
    std::optional<std::string> wrapper;
    std::optional<std::string> filler;
    std::optional<std::string> transformer;
    std::vector<std::string> submit_schema;
    std::optional<std::string> form_condition;
    bool symmetric = false;
};

/// Identifier pairs a fixture tool confirms.
struct PairFixture {
    std::string tool;
    std::set<std::pair<std::string, std::string>> pairs;
};

struct RemoteRequest {
    std::string url;
    std::map<std::string, std::string> params;
    std::chrono::milliseconds timeout{10000};
};

/// Single pluggable transport used by the remote adapters. Throws on failure.
using RemoteTransport = std::function<std::string(const RemoteRequest&)>;

/// Plug-in slots. The defaults are no-ops over delimited text.
using Matcher = std::function<std::optional<std::string>(const std::vector<std::string>& source_columns,
                                                          const std::string& field)>;
using Wrapper = std::function<RelationalTable(const std::string& body)>;
using Filler = std::function<std::map<std::string, std::string>(const ToolSpec&,
                                                                const std::map<std::string, std::string>& row)>;
using Transformer = Wrapper;

struct GatewayOptions {
    bool allow_remote = false;
    std::chrono::milliseconds timeout{10000};
    bool memoize = true;
};

class ToolGateway {
public:
    using handle = std::size_t;

    explicit ToolGateway(GatewayOptions options = {}) : options_(options), memo_(std::make_shared<Memo>()) {
        matchers_["identity"] = default_matcher;
        wrappers_["delimited"] = default_wrapper;
        transformers_["delimited"] = default_wrapper;
        fillers_["columns"] = default_filler;
    }

    const GatewayOptions& options() const { return options_; }
    void set_memoize(bool on) { options_.memoize = on; }
    void set_allow_remote(bool on) { options_.allow_remote = on; }
    void set_transport(RemoteTransport t) { transport_ = std::move(t); }

    void add_matcher(const std::string& name, Matcher m) { matchers_[name] = std::move(m); }
    void add_wrapper(const std::string& name, Wrapper w) { wrappers_[name] = std::move(w); }
    void add_filler(const std::string& name, Filler f) { fillers_[name] = std::move(f); }
    void add_transformer(const std::string& name, Transformer t) { transformers_[name] = std::move(t); }

    /// Registers a tool; fixture and flat-file data are read from `location`
    /// (relative paths resolve against `base_dir`). Re-registration replaces.
    handle register_tool(ToolSpec spec, const std::filesystem::path& base_dir = {}) {
        validate(spec);
        std::optional<RelationalTable> data;
        if (is_local(spec.adapter)) {
            std::filesystem::path p(spec.location);
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            if (!std::filesystem::exists(p))
                throw error(errc::invalid_spec, spec.name + ": fixture " + p.string() + " does not exist");
            data = parse_table(spec.name, text::read_file(p.string()));
        }
        return install(std::move(spec), std::move(data));
    }

    /// Registers a fixture tool backed by in-memory rows (first column =
    /// submit key, remaining columns = extract fields).
    handle register_fixture(ToolSpec spec, RelationalTable data) {
        spec.adapter = adapter_kind::fixture;
        if (spec.location.empty()) spec.location = "memory:" + spec.name;
        validate(spec);
        data.check();
        return install(std::move(spec), std::move(data));
    }

    handle register_pairs(const PairFixture& fixture, std::vector<std::string> verifies, bool symmetric,
                          std::string partner_field = "Partner") {
        RelationalTable t{fixture.tool, {"Key", partner_field}, {}};
        for (const auto& [a, b] : fixture.pairs) t.rows.push_back({a, b});
        ToolSpec spec;
        spec.name = fixture.tool;
        spec.verifies = std::move(verifies);
        spec.extract_fields = {partner_field};
        spec.submit_schema = {"Key"};
        spec.symmetric = symmetric;
        return register_fixture(std::move(spec), std::move(t));
    }

    bool has(std::string_view name) const { return index_.count(std::string(name)) > 0; }

    const ToolSpec* spec(std::string_view name) const {
        auto it = index_.find(std::string(name));
        return it == index_.end() ? nullptr : &tools_[it->second].spec;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& t : tools_) out.push_back(t.spec.name);
        return out;
    }

    /// Whether tool `op` confirms its relation between `id_a` and `id_b`.
    bool apply_op(const std::string& op, const std::string& id_a, const std::string& id_b) const {
        auto key = std::make_tuple(op, id_a, id_b);
        if (options_.memoize) {
            std::lock_guard lock(memo_->mutex);
            auto it = memo_->verdicts.find(key);
            if (it != memo_->verdicts.end()) return it->second;
        }
        bool verdict = compute(op, id_a, id_b);
        if (options_.memoize) {
            std::lock_guard lock(memo_->mutex);
            memo_->verdicts.emplace(key, verdict);
        }
        return verdict;
    }

    /// Runs the extract statement described by `spec` over `input`: for each
    /// input row the adapter is invoked with the submit columns and its rows,
    /// projected onto `extract_fields`, are appended in order.
    RelationalTable extract(const ToolSpec& spec, const RelationalTable& input) const {
        for (const auto& col : spec.submit_schema)
            if (!input.column_index(col))
                throw error(errc::schema_mismatch, spec.name + ": input lacks submit column " + col);
        RelationalTable out{spec.name, spec.extract_fields, {}};
        if (is_local(spec.adapter)) {
            const auto* data = local_data(spec.name);
            if (!data) throw error(errc::tool_unavailable, spec.name + " is not registered");
            auto cols = project_columns(spec, data->columns);
            if (spec.submit_schema.empty()) {
                for (const auto& r : data->rows) out.rows.push_back(project(r, cols));
                return out;
            }
            auto submit = *input.column_index(spec.submit_schema.front());
            for (const auto& in_row : input.rows)
                for (const auto& r : data->rows)
                    if (r[0] == in_row[submit]) out.rows.push_back(project(r, cols));
            return out;
        }
        for (const auto& in_row : input.rows) {
            std::map<std::string, std::string> submitted;
            for (const auto& col : spec.submit_schema) submitted[col] = in_row[*input.column_index(col)];
            auto response = remote(spec, submitted);
            auto cols = project_columns(spec, response.columns);
            for (const auto& r : response.rows) out.rows.push_back(project(r, cols));
        }
        return out;
    }

    RelationalTable extract(const std::string& tool, const RelationalTable& input) const {
        const auto* s = spec(tool);
        if (!s) throw error(errc::tool_unavailable, tool + " is not registered");
        return extract(*s, input);
    }

    std::size_t remote_calls() const { return remote_calls_->load(); }

private:
    struct Entry {
        ToolSpec spec;
        std::optional<RelationalTable> data;
    };
    struct Memo {
        std::mutex mutex;
        std::map<std::tuple<std::string, std::string, std::string>, bool> verdicts;
    };

    GatewayOptions options_;
    std::vector<Entry> tools_;
    std::map<std::string, std::size_t> index_;
    std::shared_ptr<Memo> memo_;
    std::shared_ptr<std::atomic<std::size_t>> remote_calls_ = std::make_shared<std::atomic<std::size_t>>(0);
    RemoteTransport transport_;
    std::map<std::string, Matcher> matchers_;
    std::map<std::string, Wrapper> wrappers_;
    std::map<std::string, Filler> fillers_;
    std::map<std::string, Transformer> transformers_;

    static bool is_local(adapter_kind a) { return a == adapter_kind::fixture || a == adapter_kind::flat_file; }

    static void validate(const ToolSpec& spec) {
        if (spec.name.empty()) throw error(errc::invalid_spec, "tool without a name");
        if (spec.extract_fields.empty()) throw error(errc::invalid_spec, spec.name + ": no extract fields");
        if (spec.location.empty()) throw error(errc::invalid_spec, spec.name + ": no location");
        if (spec.adapter == adapter_kind::web_form && (!spec.filler || !spec.wrapper))
            throw error(errc::invalid_spec, spec.name + ": web-form adapter needs a filler and a wrapper");
        if (spec.adapter == adapter_kind::web_service && !spec.transformer)
            throw error(errc::invalid_spec, spec.name + ": web-service adapter needs a transformer");
    }

    handle install(ToolSpec spec, std::optional<RelationalTable> data) {
        if (data && spec.symmetric && data->columns.size() == 2) {
            std::set<std::vector<std::string>> rows(data->rows.begin(), data->rows.end());
            for (const auto& r : data->rows) rows.insert({r[1], r[0]});
            data->rows.assign(rows.begin(), rows.end());
        }
        {
            std::lock_guard lock(memo_->mutex);
            memo_->verdicts.clear();
        }
        auto it = index_.find(spec.name);
        if (it != index_.end()) {
            tools_[it->second] = {std::move(spec), std::move(data)};
            return it->second;
        }
        index_[spec.name] = tools_.size();
        tools_.push_back({std::move(spec), std::move(data)});
        return tools_.size() - 1;
    }

    const RelationalTable* local_data(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end() || !tools_[it->second].data) return nullptr;
        return &*tools_[it->second].data;
    }

    bool compute(const std::string& op, const std::string& a, const std::string& b) const {
        const auto* s = spec(op);
        if (!s) throw error(errc::tool_unavailable, op + " is not registered");
        if (is_local(s->adapter)) {
            const auto* data = local_data(op);
            if (!data || data->columns.size() < 2) throw error(errc::tool_unavailable, op + ": unreadable fixture");
            for (const auto& r : data->rows)
                if (r[0] == a && r[1] == b) return true;
            return false;
        }
        RelationalTable in{"ArgRel", s->submit_schema.empty() ? std::vector<std::string>{"Key"} : s->submit_schema,
                           {}};
        in.rows.push_back(std::vector<std::string>(in.columns.size(), a));
        auto found = extract(*s, in);
        for (const auto& r : found.rows)
            if (!r.empty() && r[0] == b) return true;
        return false;
    }

    std::vector<std::size_t> project_columns(const ToolSpec& spec, const std::vector<std::string>& source) const {
        const Matcher& m = pick(matchers_, spec.matcher, "identity", "matcher");
        std::vector<std::size_t> cols;
        for (const auto& field : spec.extract_fields) {
            auto col = m(source, field);
            std::optional<std::size_t> idx;
            if (col)
                for (std::size_t i = 0; i < source.size(); ++i)
                    if (source[i] == *col) idx = i;
            if (!idx) throw error(errc::schema_mismatch, spec.name + ": adapter output lacks field " + field);
            cols.push_back(*idx);
        }
        return cols;
    }

    static std::vector<std::string> project(const std::vector<std::string>& row, const std::vector<std::size_t>& cols) {
        std::vector<std::string> out;
        for (auto c : cols) out.push_back(row[c]);
        return out;
    }

    template <class Map>
    static const typename Map::mapped_type& pick(const Map& m, const std::optional<std::string>& name,
                                                 const char* fallback, const char* slot) {
        auto it = m.find(name ? *name : fallback);
        if (it == m.end()) {
            // Named components we do not ship (e.g. a specific schema matcher)
            // degrade to the default.
            it = m.find(fallback);
            if (it == m.end()) throw error(errc::tool_unavailable, std::string("no ") + slot + " available");
        }
        return it->second;
    }

    RelationalTable remote(const ToolSpec& spec, const std::map<std::string, std::string>& submitted) const {
        if (!options_.allow_remote) throw error(errc::tool_unavailable, spec.name + ": remote adapters are disabled");
        if (!transport_) throw error(errc::tool_unavailable, spec.name + ": no transport configured");
        RemoteRequest req{spec.location, submitted, options_.timeout};
        if (spec.adapter == adapter_kind::web_form) {
            req.params = pick(fillers_, spec.filler, "columns", "filler")(spec, submitted);
            if (spec.form_condition) req.params["where"] = *spec.form_condition;
        }
        std::string body;
        ++*remote_calls_;
        try {
            body = transport_(req);
        } catch (const std::exception& e) {
            throw error(errc::tool_unavailable, spec.name + ": " + e.what());
        }
        try {
            if (spec.adapter == adapter_kind::web_service)
                return pick(transformers_, spec.transformer, "delimited", "transformer")(body);
            return pick(wrappers_, spec.wrapper, "delimited", "wrapper")(body);
        } catch (const kriq::error& e) {
            if (e.code() == errc::tool_unavailable) throw;
            throw error(errc::tool_unavailable, spec.name + ": " + e.what());
        }
    }

    static std::optional<std::string> default_matcher(const std::vector<std::string>& source, const std::string& field) {
        for (const auto& s : source)
            if (s == field) return s;
        for (const auto& s : source)
            if (text::iequals(s, field)) return s;
        return std::nullopt;
    }

    static RelationalTable default_wrapper(const std::string& body) { return parse_table("response", body); }

    static std::map<std::string, std::string> default_filler(const ToolSpec&, const std::map<std::string, std::string>& row) {
        return row;
    }
};

// ---------------------------------------------------------------------------

inline adapter_kind parse_adapter(const std::string& s) {
    if (s == "fixture") return adapter_kind::fixture;
    if (s == "web-form" || s == "web_form") return adapter_kind::web_form;
    if (s == "web-service" || s == "web_service") return adapter_kind::web_service;
    if (s == "flat-file" || s == "flat_file") return adapter_kind::flat_file;
    throw error(errc::invalid_spec, "unknown adapter '" + s + "'");
}

inline ToolSpec tool_spec_from_json(const nlohmann::json& j) {
    auto opt = [&](const char* key) -> std::optional<std::string> {
        if (j.contains(key) && j.at(key).is_string()) return j.at(key).get<std::string>();
        return std::nullopt;
    };
    auto list = [&](const char* key) {
        std::vector<std::string> out;
        if (j.contains(key)) {
            if (j.at(key).is_string()) return text::split_list(j.at(key).get<std::string>());
            for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
        }
        return out;
    };
    try {
        ToolSpec s;
        s.name = j.at("name").get<std::string>();
        s.verifies = list("verifies");
        s.adapter = parse_adapter(j.value("adapter", std::string("fixture")));
        s.location = j.value("location", std::string{});
        s.extract_fields = list("extract_fields");
        s.matcher = opt("matcher");
        s.wrapper = opt("wrapper");
        s.filler = opt("filler");
        s.transformer = opt("transformer");
        s.submit_schema = list("submit_schema");
        s.form_condition = opt("form_condition");
        s.symmetric = j.value("symmetric", false);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::invalid_spec, e.what());
    }
}

/// Registers every entry of the document's `tools_registry`.
inline void register_tools(ToolGateway& gw, const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object() || !doc.contains("tools_registry")) return;
    for (const auto& j : doc.at("tools_registry")) gw.register_tool(tool_spec_from_json(j), base_dir);
}

} // namespace kriq
