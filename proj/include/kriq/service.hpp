#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "planner.hpp"
#include "system.hpp"

namespace kriq {

/// One loaded system plus the query log. Queries run concurrently under a
/// shared lock; load() is exclusive.
class Session {
public:
    struct Outcome {
        std::string result_id;
        PipelineResult result;
    };

    void load(const std::filesystem::path& data_dir, const std::filesystem::path& knowledge_file,
              GatewayOptions options = {}) {
        std::unique_lock lock(mu_);
        sys_ = std::make_shared<System>(load_system(data_dir, knowledge_file, options));
    }

    /// Reloads from the paths of the previous load.
    void reload() {
        auto [data, knowledge, options] = [&] {
            std::shared_lock lock(mu_);
            if (!sys_) throw error(errc::not_loaded, "nothing to reload");
            return std::make_tuple(sys_->data_dir, sys_->knowledge_file, sys_->gateway.options());
        }();
        load(data, knowledge, options);
    }

    bool loaded() const {
        std::shared_lock lock(mu_);
        return sys_ != nullptr;
    }

    answer_mode mode() const {
        std::lock_guard lock(log_mu_);
        return mode_;
    }
    void set_mode(answer_mode m) {
        std::lock_guard lock(log_mu_);
        mode_ = m;
    }

    /// Runs `f(const System&)` under the shared lock.
    template <class F>
    auto with_system(F&& f) const {
        std::shared_lock lock(mu_);
        if (!sys_) throw error(errc::not_loaded, "no data loaded; use load first");
        return f(static_cast<const System&>(*sys_));
    }

    Outcome query(const std::string& text, std::optional<answer_mode> m = std::nullopt) {
        auto mode = m.value_or(this->mode());
        auto result = with_system([&](const System& s) { return run_pipeline(text, s.store, s.kb, &s.gateway, mode); });
        std::lock_guard lock(log_mu_);
        Outcome out{"r" + std::to_string(log_.size() + 1), std::move(result)};
        log_.push_back({text, std::string(to_string(mode)), out.result_id});
        for (const auto& row : out.result.table.rows) traces_.emplace(row.provenance_id, row.trace);
        results_.emplace(out.result_id, out.result.table);
        return out;
    }

    std::optional<nlohmann::json> explain(const std::string& provenance_id) const {
        std::lock_guard lock(log_mu_);
        auto it = traces_.find(provenance_id);
        if (it == traces_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<ResultTable> result(const std::string& result_id) const {
        std::lock_guard lock(log_mu_);
        auto it = results_.find(result_id);
        if (it == results_.end()) return std::nullopt;
        return it->second;
    }

    nlohmann::json schema() const {
        return with_system([](const System& s) {
            auto j = to_json(s.kb);
            j["tools_registry"] = s.gateway.names();
            j["facts"] = s.store.size();
            j["warnings"] = s.warnings;
            return j;
        });
    }

    nlohmann::json history() const {
        std::lock_guard lock(log_mu_);
        nlohmann::json out = nlohmann::json::array();
        for (const auto& e : log_) out.push_back({{"text", e.text}, {"mode", e.mode}, {"result_id", e.result_id}});
        return out;
    }

private:
    struct LogEntry {
        std::string text, mode, result_id;
    };
    mutable std::shared_mutex mu_;
    std::shared_ptr<System> sys_;
    mutable std::mutex log_mu_;
    answer_mode mode_ = answer_mode::enhanced;
    std::vector<LogEntry> log_;
    std::map<std::string, ResultTable> results_;
    std::map<std::string, nlohmann::json> traces_;
};

inline nlohmann::json query_response(const Session::Outcome& o) {
    auto j = to_json(o.result.table);
    j["result_id"] = o.result_id;
    return j;
}

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json; charset=utf-8";
};

namespace detail {

inline HttpResponse json_response(int status, const nlohmann::json& j) { return {status, j.dump() + "\n"}; }

inline HttpResponse error_response(int status, const std::string& name, const std::string& message) {
    return json_response(status, {{"error", name}, {"message", message}});
}

} // namespace detail

/// The HTTP API as a pure function of (session, method, path, body); the
/// socket server only forwards to it.
inline HttpResponse handle_http(Session& session, const std::string& method, const std::string& path,
                                const std::string& body) {
    using detail::error_response;
    using detail::json_response;
    try {
        if (method == "POST" && path == "/query") {
            nlohmann::json req;
            try {
                req = nlohmann::json::parse(body);
            } catch (const nlohmann::json::exception&) {
                return error_response(400, "BadRequest", "body is not JSON");
            }
            if (!req.is_object() || !req.contains("text") || !req["text"].is_string())
                return error_response(400, "BadRequest", "body needs a string field 'text'");
            std::optional<answer_mode> mode;
            if (req.contains("mode")) {
                if (!req["mode"].is_string()) return error_response(400, "BadRequest", "'mode' must be a string");
                auto m = req["mode"].get<std::string>();
                if (m != "baseline" && m != "enhanced")
                    return error_response(400, "BadRequest", "mode must be baseline or enhanced");
                mode = parse_mode(m);
            }
            return json_response(200, query_response(session.query(req["text"].get<std::string>(), mode)));
        }
        if (method == "GET" && path.rfind("/explain/", 0) == 0) {
            auto id = path.substr(9);
            if (!session.loaded()) return error_response(422, "NotLoaded", "no data loaded");
            auto trace = session.explain(id);
            if (!trace) return error_response(404, "NotFound", "unknown provenance id " + id);
            return json_response(200, *trace);
        }
        if (method == "GET" && path == "/schema") return json_response(200, session.schema());
        if (method == "GET" && path == "/history") return json_response(200, session.history());
        if (method == "POST" && path == "/load") {
            nlohmann::json req = nlohmann::json::object();
            if (!text::trim(body).empty()) {
                try {
                    req = nlohmann::json::parse(body);
                } catch (const nlohmann::json::exception&) {
                    return error_response(400, "BadRequest", "body is not JSON");
                }
                if (!req.is_object()) return error_response(400, "BadRequest", "body must be an object");
            }
            bool has_data = req.contains("data_dir"), has_kn = req.contains("knowledge_file");
            if (has_data != has_kn)
                return error_response(400, "BadRequest", "give both data_dir and knowledge_file, or neither");
            if (has_data) {
                if (!req["data_dir"].is_string() || !req["knowledge_file"].is_string())
                    return error_response(400, "BadRequest", "paths must be strings");
                session.load(req["data_dir"].get<std::string>(), req["knowledge_file"].get<std::string>());
            } else {
                session.reload();
            }
            return json_response(200, session.with_system([](const System& s) {
                return nlohmann::json{{"loaded", true}, {"facts", s.store.size()}, {"warnings", s.warnings}};
            }));
        }
        return error_response(404, "NotFound", method + " " + path);
    } catch (const error& e) {
        return error_response(422, std::string(e.name()), e.what());
    }
}

} // namespace kriq
