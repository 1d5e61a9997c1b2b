#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "concept_reasoner.hpp"
#include "error.hpp"
#include "http_server.hpp"
#include "planner.hpp"
#include "service.hpp"

#ifndef KRIQ_DEFAULT_DATA_DIR
#define KRIQ_DEFAULT_DATA_DIR "data/bundled"
#endif

namespace kriq {

namespace cli {

struct QueryFlags {
    bool baseline = false;
    std::string goal;
    std::string strategy_name;
    bool dump_intent = false;
    bool sql = false;
    bool explain = false;
};

inline strategy parse_strategy(const std::string& s) {
    if (s == "direct-only" || s == "direct") return strategy::direct_only;
    if (s == "indirect" || s == "+indirect") return strategy::indirect;
    if (s == "interpretive" || s == "+interpretive") return strategy::interpretive;
    throw CLI::ValidationError("--strategy", "expected direct-only, indirect or interpretive");
}

inline std::string bindings_text(const Bindings& b) {
    std::vector<std::vector<std::string>> lines{b.variables};
    for (const auto& r : b.rows) lines.push_back(r.values);
    std::vector<std::size_t> width(b.variables.size(), 0);
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
    out += "(" + std::to_string(b.rows.size()) + (b.rows.size() == 1 ? " binding" : " bindings") + ")\n";
    return out;
}

inline int serve_forever(Session& session, const std::string& host, int port, std::ostream& out, std::ostream& err) {
    HttpServer server(session);
    int bound = server.bind(host, port);
    if (bound < 0) {
        err << "error: cannot bind " << host << ":" << port << "\n";
        return 2;
    }
    out << "listening on http://" << host << ":" << bound << "\n" << std::flush;
    return server.listen() ? 0 : 2;
}

/// Answers a raw res-goal conjunction.
inline void run_goal(const Session& session, const QueryFlags& f, bool json, std::ostream& out) {
    session.with_system([&](const System& s) {
        auto goals = parse_goals(f.goal, &s.kb);
        auto strat = !f.strategy_name.empty() ? parse_strategy(f.strategy_name)
                     : f.baseline            ? strategy::direct_only
                                             : strategy::interpretive;
        Reasoner reasoner(s.store, s.kb, &s.gateway);
        reasoner.solve(goals, strat); // validates goal constants
        auto model = reasoner.evaluate(strat);
        auto b = model.query(goals);
        if (json) {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& r : b.rows) {
                nlohmann::json row{{"values", r.values}};
                if (f.explain) {
                    row["trace"] = nlohmann::json::array();
                    for (auto i : r.support) row["trace"].push_back(model.trace(i));
                }
                rows.push_back(row);
            }
            out << nlohmann::json{{"goal", to_string(goals)},
                                  {"strategy", std::string(to_string(strat))},
                                  {"variables", b.variables},
                                  {"rows", rows},
                                  {"warnings", model.warnings()}}
                       .dump(2)
                << "\n";
            return 0;
        }
        out << "goal: " << to_string(goals) << "  [" << to_string(strat) << "]\n";
        out << bindings_text(b);
        for (const auto& w : model.warnings()) out << "warning: " << w << "\n";
        if (f.explain)
            for (const auto& r : b.rows)
                for (auto i : r.support) out << model.trace(i).dump(2) << "\n";
        return 0;
    });
}

inline void run_sentence(Session& session, const std::string& sentence, const QueryFlags& f, bool json,
                         std::ostream& out) {
    auto o = session.query(sentence, f.baseline ? answer_mode::baseline : answer_mode::enhanced);
    const auto& r = o.result;
    std::optional<SqlRendering> sql;
    if (f.sql) sql = session.with_system([&](const System& s) { return render_sql_fragment(r.plan, s.kb); });
    if (json) {
        auto j = query_response(o);
        if (f.dump_intent) {
            j["intent"] = to_json(r.intent);
            j["plan"] = to_json(r.plan);
        }
        if (sql) j["sql"] = {{"text", sql->text}, {"complete", sql->complete}};
        if (f.explain) {
            j["explain"] = nlohmann::json::object();
            for (const auto& row : r.table.rows) j["explain"][row.provenance_id] = row.trace;
        }
        out << j.dump(2) << "\n";
        return;
    }
    if (f.dump_intent) {
        out << "intent: " << to_json(r.intent).dump(2) << "\n";
        out << "plan: " << to_json(r.plan).dump(2) << "\n";
    }
    if (sql) out << sql->text << "\n";
    out << to_text(r.table);
    if (f.explain)
        for (const auto& row : r.table.rows) out << row.provenance_id << " " << row.trace.dump(2) << "\n";
}

inline void repl(Session& session, std::istream& in, std::ostream& out, std::ostream& err, bool json) {
    QueryFlags flags;
    std::string line;
    out << "kriq> " << std::flush;
    while (std::getline(in, line)) {
        line = text::trim(line);
        try {
            if (line == ":quit" || line == ":q") break;
            if (line.empty()) {
            } else if (line == ":baseline" || line == ":enhanced") {
                flags.baseline = line == ":baseline";
                out << "mode " << line.substr(1) << "\n";
            } else if (line == ":history") {
                out << session.history().dump(2) << "\n";
            } else if (line.rfind(":explain ", 0) == 0) {
                auto t = session.explain(text::trim(line.substr(9)));
                out << (t ? t->dump(2) : std::string("unknown provenance id")) << "\n";
            } else if (line.rfind(":goal ", 0) == 0) {
                auto f = flags;
                f.goal = line.substr(6);
                run_goal(session, f, json, out);
            } else if (line.rfind(":sql ", 0) == 0) {
                auto f = flags;
                f.sql = true;
                run_sentence(session, line.substr(5), f, json, out);
            } else if (line == ":help") {
                out << ":baseline | :enhanced | :goal <atoms> | :sql <sentence> | :explain <id> | :history | :quit\n";
            } else {
                run_sentence(session, line, flags, json, out);
            }
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
        }
        out << "kriq> " << std::flush;
    }
    out << "\n";
}

} // namespace cli

/// Entry point of the command-line tool. Exit codes: 0 success, 1 usage
/// error, 2 load or query error.
inline int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-rich natural-language queries over biological tables", "kriq"};
    app.require_subcommand(1);
    std::string data_dir = KRIQ_DEFAULT_DATA_DIR, knowledge;
    std::string format = "text";
    app.add_option("--data", data_dir, "Directory of <Table>.csv files")->capture_default_str();
    app.add_option("--knowledge", knowledge, "Knowledge document (default <data>/knowledge.json)");
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}))->capture_default_str();
    app.fallthrough();

    auto* load = app.add_subcommand("load", "Load tables and knowledge, report the canonical store");
    std::string load_data, load_knowledge_file;
    load->add_option("data-dir", load_data, "Data directory")->required();
    load->add_option("knowledge-file", load_knowledge_file, "Knowledge document")->required();

    auto* query = app.add_subcommand("query", "Answer one sentence or raw goal");
    std::string sentence;
    cli::QueryFlags flags;
    query->add_option("sentence", sentence, "Natural-language question");
    query->add_flag("--baseline", flags.baseline, "Stored facts only (conventional answer)");
    query->add_option("--goal", flags.goal, "Raw res-goal conjunction, e.g. res('Gene',Pk,'GeneName','repA1')");
    query->add_option("--strategy", flags.strategy_name, "Goal strategy: direct-only, indirect, interpretive");
    query->add_flag("--dump-intent", flags.dump_intent, "Print the extracted intent and plan");
    query->add_flag("--sql", flags.sql, "Print the rendered SQL");
    query->add_flag("--explain", flags.explain, "Print provenance traces");

    app.add_subcommand("repl", "Interactive session");
    auto* serve = app.add_subcommand("serve", "HTTP service");
    int port = 8080;
    std::string host = "127.0.0.1";
    serve->add_option("--port", port, "TCP port")->capture_default_str();
    serve->add_option("--host", host, "Bind address")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (query->parsed() && flags.goal.empty() && text::trim(sentence).empty())
            throw CLI::ValidationError("query", "a sentence or --goal is required");
        if (query->parsed() && !flags.strategy_name.empty()) cli::parse_strategy(flags.strategy_name);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
        return 1;
    }

    bool json = format == "json";
    Session session;
    try {
        if (load->parsed()) {
            session.load(load_data, load_knowledge_file);
        } else {
            std::filesystem::path d(data_dir);
            session.load(d, knowledge.empty() ? d / "knowledge.json" : std::filesystem::path(knowledge));
        }
        if (load->parsed()) {
            session.with_system([&](const System& s) {
                if (json) {
                    out << nlohmann::json{{"tables", s.tables.size()},
                                          {"facts", s.store.size()},
                                          {"tools", s.gateway.names()},
                                          {"warnings", s.warnings}}
                               .dump(2)
                        << "\n";
                } else {
                    out << "loaded " << s.tables.size() << " tables, " << s.store.size() << " canonical facts, "
                        << s.gateway.names().size() << " tools\n";
                    for (const auto& w : s.warnings) out << "warning: " << w << "\n";
                }
                return 0;
            });
        } else if (query->parsed()) {
            if (!flags.goal.empty()) cli::run_goal(session, flags, json, out);
            else cli::run_sentence(session, sentence, flags, json, out);
        } else if (app.got_subcommand("repl")) {
            cli::repl(session, in, out, err, json);
        } else if (serve->parsed()) {
            return cli::serve_forever(session, host, port, out, err);
        }
    } catch (const error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace kriq
