#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include <kriq/cli.hpp>
#include <kriq/http_server.hpp>
#include <kriq/service.hpp>

#include "support/fixtures.hpp"

using namespace kriq;
using nlohmann::json;

namespace {

const std::string query1 = "List all F-box domain protein 2 sequences";

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run_cli(std::vector<std::string> args, const std::string& input = "") {
    std::istringstream in(input);
    std::ostringstream out, err;
    int code = cli_main(args, in, out, err);
    return {code, out.str(), err.str()};
}

class Service : public ::testing::Test {
protected:
    Session session;
    void SetUp() override { session.load(fixtures::bundled_dir(), fixtures::bundled_knowledge()); }

    json post_query(const std::string& text, const std::string& mode = "enhanced") {
        auto r = handle_http(session, "POST", "/query", json{{"text", text}, {"mode", mode}}.dump());
        EXPECT_EQ(r.status, 200) << r.body;
        return json::parse(r.body);
    }
};

std::set<std::vector<std::string>> rows_of(const json& j) {
    std::set<std::vector<std::string>> out;
    for (const auto& r : j["rows"]) out.insert(r["values"].get<std::vector<std::string>>());
    return out;
}

} // namespace

TEST_F(Service, QueryEnhancedFlagsDerivedRow) {
    auto j = post_query(query1);
    ASSERT_EQ(j["rows"].size(), 2u);
    EXPECT_EQ(j["columns"], json::array({"DNASequence"}));
    int derived = 0;
    for (const auto& r : j["rows"]) {
        derived += r["derived"].get<bool>();
        EXPECT_EQ(r["provenance_id"].get<std::string>().substr(0, 1), "p");
    }
    EXPECT_EQ(derived, 1);
    EXPECT_EQ(j["result_id"], "r1");
}

TEST_F(Service, ExplainDerivedRow) {
    auto j = post_query(query1);
    std::string pid;
    for (const auto& r : j["rows"])
        if (r["derived"].get<bool>()) pid = r["provenance_id"];
    auto r = handle_http(session, "GET", "/explain/" + pid, "");
    ASSERT_EQ(r.status, 200);
    auto trace = json::parse(r.body);
    EXPECT_EQ(trace["values"], json::array({"CTCTTTCTTTCT ..."}));
    json step;
    for (const auto& s : trace["supports"])
        if (s["kind"] == "Interpretive") step = s;
    ASSERT_TRUE(step.is_object()) << trace.dump();
    EXPECT_EQ(step["relation"], "Ortholog");
    EXPECT_EQ(step["tool"], "BLAST");
    // Replay: the partner carries the copied pair directly.
    EXPECT_EQ(step["source"]["fact"]["primary_key"], step["partner"]["primary_key"]);
    EXPECT_EQ(step["source"]["fact"]["attribute"], step["fact"]["attribute"]);
    EXPECT_EQ(step["source"]["fact"]["value"], step["fact"]["value"]);
    EXPECT_EQ(handle_http(session, "GET", "/explain/pnope", "").status, 404);
}

TEST_F(Service, BaselineMode) {
    EXPECT_EQ(rows_of(post_query(query1, "baseline")), (std::set<std::vector<std::string>>{{"CTCTTTCTTTCG ..."}}));
    session.set_mode(answer_mode::baseline);
    auto r = handle_http(session, "POST", "/query", json{{"text", query1}}.dump());
    EXPECT_EQ(json::parse(r.body)["rows"].size(), 1u);
}

TEST_F(Service, BadRequests) {
    EXPECT_EQ(handle_http(session, "POST", "/query", "{not json").status, 400);
    EXPECT_EQ(handle_http(session, "POST", "/query", "{}").status, 400);
    EXPECT_EQ(handle_http(session, "POST", "/query", R"({"text": 3})").status, 400);
    EXPECT_EQ(handle_http(session, "POST", "/query", R"({"text": "x", "mode": "fancy"})").status, 400);
    EXPECT_EQ(handle_http(session, "POST", "/load", R"({"data_dir": "/tmp"})").status, 400);
    EXPECT_EQ(handle_http(session, "DELETE", "/query", "").status, 404);
    EXPECT_EQ(handle_http(session, "GET", "/nowhere", "").status, 404);
}

TEST_F(Service, FrontendErrorsAre422) {
    auto r = handle_http(session, "POST", "/query", json{{"text", "genes are nice"}}.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(json::parse(r.body)["error"], "UnparsableSentence");
    r = handle_http(session, "POST", "/query", json{{"text", ""}}.dump());
    EXPECT_EQ(r.status, 422);
}

TEST(ServiceUnloaded, Returns422) {
    Session s;
    auto r = handle_http(s, "GET", "/schema", "");
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(json::parse(r.body)["error"], "NotLoaded");
    EXPECT_EQ(handle_http(s, "POST", "/query", json{{"text", query1}}.dump()).status, 422);
    EXPECT_EQ(handle_http(s, "GET", "/explain/p1", "").status, 422);
    EXPECT_EQ(handle_http(s, "POST", "/load", "").status, 422);
}

TEST_F(Service, SchemaAndHistory) {
    auto schema = json::parse(handle_http(session, "GET", "/schema", "").body);
    EXPECT_EQ(schema["ontology"].size(), 2u);
    EXPECT_EQ(schema["tools_registry"], json::array({"BLAST", "GENCODE"}));
    post_query(query1);
    post_query("Find the function of gene repA1", "baseline");
    auto history = json::parse(handle_http(session, "GET", "/history", "").body);
    ASSERT_EQ(history.size(), 2u);
    EXPECT_EQ(history[1]["mode"], "baseline");
    EXPECT_EQ(history[1]["result_id"], "r2");
    EXPECT_TRUE(session.result("r2"));
    EXPECT_FALSE(session.result("r9"));
}

TEST_F(Service, LoadAndReload) {
    auto r = handle_http(session, "POST", "/load", "");
    EXPECT_EQ(r.status, 200);
    r = handle_http(session, "POST", "/load",
                    json{{"data_dir", fixtures::bundled_dir().string()},
                         {"knowledge_file", fixtures::bundled_knowledge().string()}}
                        .dump());
    EXPECT_EQ(r.status, 200);
    // Non-empty cells of UniProt.csv plus Entrez.csv.
    EXPECT_EQ(json::parse(r.body)["facts"], 25);
    r = handle_http(session, "POST", "/load", json{{"data_dir", "/no/such/dir"}, {"knowledge_file", "/no/k.json"}}.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(json::parse(r.body)["error"], "IoError");
    // A failed load keeps the previous system.
    EXPECT_EQ(post_query(query1)["rows"].size(), 2u);
}

TEST_F(Service, ConcurrentQueries) {
    std::vector<std::thread> threads;
    std::vector<std::size_t> sizes(8);
    for (std::size_t i = 0; i < sizes.size(); ++i)
        threads.emplace_back([&, i] { sizes[i] = session.query(query1).result.table.rows.size(); });
    for (auto& t : threads) t.join();
    for (auto n : sizes) EXPECT_EQ(n, 2u);
    EXPECT_EQ(session.history().size(), 8u);
}

TEST(Cli, RepA1Query) {
    auto r = run_cli({"query", "Find the function of gene repA1"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("Plasmid maintenance"), std::string::npos);
    EXPECT_NE(r.out.find("(1 row)"), std::string::npos);
}

TEST(Cli, RawGoal) {
    auto r = run_cli({"query", "--goal", "res('Gene',Pk,'GeneName','repA1'), res('Gene',Pk,'UniProtProteinID',Val)",
                  "--strategy", "direct-only"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("O85067"), std::string::npos);
    auto j = run_cli({"--format", "json", "query", "--goal", "res('Gene',Pk,'GeneName','repA1'), res('Gene',Pk,'Function',Val)",
                  "--strategy", "direct-only"});
    EXPECT_EQ(json::parse(j.out)["rows"].size(), 0u);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({"query", ""}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"query", "x", "--strategy", "sideways"}).code, 1);
    EXPECT_EQ(run_cli({"--format", "xml", "query", "x"}).code, 1);
    auto bad = run_cli({"query", "genes are nice"});
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("UnparsableSentence"), std::string::npos);
    EXPECT_EQ(run_cli({"load", "/no/such/dir", "/no/k.json"}).code, 2);
    EXPECT_EQ(run_cli({"query", "--goal", "res('Organism',Pk,'Name',V)"}).code, 2);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, Load) {
    auto r = run_cli({"load", fixtures::bundled_dir().string(), fixtures::bundled_knowledge().string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("2 tables, 25 canonical facts"), std::string::npos);
}

TEST(Cli, FlagsSqlIntentExplain) {
    auto r = run_cli({"query", "--baseline", "--sql", "--dump-intent", "--explain", query1});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("from Entrez as e, UniProt as u"), std::string::npos);
    EXPECT_NE(r.out.find("\"ProteinName\""), std::string::npos);
    EXPECT_NE(r.out.find("\"Direct\""), std::string::npos);
    EXPECT_NE(r.out.find("(1 row)"), std::string::npos);
}

TEST(Cli, Repl) {
    auto r = run_cli({"repl"}, ":baseline\n" + query1 + "\n:enhanced\n" + query1 + "\n:history\nnonsense words\n:quit\n");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("(1 row)"), std::string::npos);
    EXPECT_NE(r.out.find("(2 rows)"), std::string::npos);
    EXPECT_NE(r.err.find("UnparsableSentence"), std::string::npos);
}

TEST(Cli, HttpParity) {
    Session session;
    session.load(fixtures::bundled_dir(), fixtures::bundled_knowledge());
    for (const char* q : {"List all F-box domain protein 2 sequences",
                          "What are the functions of UniProt proteins Q9UKT8 and Q9NVA1"})
        for (bool baseline : {true, false}) {
            std::vector<std::string> args{"--format", "json", "query", q};
            if (baseline) args.push_back("--baseline");
            auto c = run_cli(args);
            ASSERT_EQ(c.code, 0) << c.err;
            auto h = handle_http(session, "POST", "/query",
                                 json{{"text", q}, {"mode", baseline ? "baseline" : "enhanced"}}.dump());
            auto cj = json::parse(c.out), hj = json::parse(h.body);
            EXPECT_EQ(rows_of(cj), rows_of(hj)) << q;
            EXPECT_EQ(cj["rows"], hj["rows"]);
        }
}

TEST(HttpSocket, LocalhostRoundTrip) {
    Session session;
    session.load(fixtures::bundled_dir(), fixtures::bundled_knowledge());
    HttpServer server(session);
    int port = server.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread t([&] { server.listen(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    auto res = client.Post("/query", json{{"text", query1}, {"mode", "enhanced"}}.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body)["rows"].size(), 2u);
    auto schema = client.Get("/schema");
    ASSERT_TRUE(schema);
    EXPECT_EQ(schema->status, 200);
    server.stop();
    t.join();
}
