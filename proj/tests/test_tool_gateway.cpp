#include <gtest/gtest.h>

#include <kriq/tool_gateway.hpp>

#include "support/fixtures.hpp"

using namespace kriq;

namespace {

errc code_of(auto&& f) {
    try {
        f();
    } catch (const error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return errc::io_error;
}

ToolSpec pair_spec(std::string name) {
    ToolSpec s;
    s.name = std::move(name);
    s.verifies = {"Ortholog"};
    s.extract_fields = {"Partner"};
    s.submit_schema = {"Key"};
    return s;
}

} // namespace

TEST(Gateway, BundledBlastFixture) {
    auto sys = fixtures::bundled();
    EXPECT_TRUE(sys.gateway.apply_op("BLAST", "30050", "26190"));
    EXPECT_TRUE(sys.gateway.apply_op("BLAST", "26190", "30050")); // declared symmetric
    EXPECT_FALSE(sys.gateway.apply_op("BLAST", "30050", "55245"));
    EXPECT_EQ(code_of([&] { sys.gateway.apply_op("NOPE", "x", "y"); }), errc::tool_unavailable);
    EXPECT_EQ(code_of([&] { sys.gateway.apply_op("ORSCAN", "30050", "26190"); }), errc::tool_unavailable);
}

TEST(Gateway, ExtractRepA1Partners) {
    auto sys = fixtures::bundled();
    RelationalTable arg{"ArgRel", {"GeneID"}, {{"1246500"}}};
    auto out = sys.gateway.extract("BLAST", arg);
    EXPECT_EQ(out.columns, (std::vector<std::string>{"GeneID"}));
    // Oracle: scan the fixture file for rows keyed on the submitted id.
    auto fixture = read_table(fixtures::bundled_dir() / "fixtures" / "blast_orthologs.csv");
    std::multiset<std::string> expected;
    for (const auto& r : fixture.rows)
        if (r[0] == "1246500") expected.insert(r[1]);
    std::multiset<std::string> got;
    for (const auto& r : out.rows) got.insert(r[0]);
    EXPECT_EQ(got, expected);
    EXPECT_FALSE(expected.empty());
}

TEST(Gateway, ExtractEmptyInput) {
    auto sys = fixtures::bundled();
    auto out = sys.gateway.extract("BLAST", RelationalTable{"ArgRel", {"GeneID"}, {}});
    EXPECT_TRUE(out.rows.empty());
    EXPECT_EQ(out.columns, (std::vector<std::string>{"GeneID"}));
}

TEST(Gateway, ExtractFansOutPerInputRow) {
    ToolGateway gw;
    RelationalTable data{"T", {"Key", "Partner"}, {{"a", "1"}, {"a", "2"}, {"b", "3"}, {"b", "4"}, {"c", "5"}}};
    gw.register_fixture(pair_spec("T"), data);
    RelationalTable in{"ArgRel", {"Key"}, {{"a"}, {"b"}}};
    auto out = gw.extract("T", in);
    // Oracle: count fixture rows whose key equals each input key.
    std::size_t expected = 0;
    for (const auto& i : in.rows)
        for (const auto& r : data.rows) expected += r[0] == i[0];
    EXPECT_EQ(out.rows.size(), expected);
    EXPECT_EQ(out.rows.size(), 4u);
    EXPECT_EQ(out.rows.front(), (std::vector<std::string>{"1"}));
    EXPECT_EQ(out.rows.back(), (std::vector<std::string>{"4"}));
}

TEST(Gateway, ExtractSchemaErrors) {
    ToolGateway gw;
    gw.register_fixture(pair_spec("T"), {"T", {"Key", "Partner"}, {{"a", "1"}}});
    EXPECT_EQ(code_of([&] { gw.extract("T", RelationalTable{"ArgRel", {"Other"}, {{"a"}}}); }), errc::schema_mismatch);
    auto spec = pair_spec("U");
    spec.extract_fields = {"Missing"};
    gw.register_fixture(spec, {"U", {"Key", "Partner"}, {{"a", "1"}}});
    EXPECT_EQ(code_of([&] { gw.extract("U", RelationalTable{"ArgRel", {"Key"}, {{"a"}}}); }), errc::schema_mismatch);
    EXPECT_EQ(code_of([&] { gw.extract("Nope", RelationalTable{"ArgRel", {"Key"}, {}}); }), errc::tool_unavailable);
}

TEST(Gateway, RegisterValidation) {
    ToolGateway gw;
    auto form = pair_spec("Form");
    form.adapter = adapter_kind::web_form;
    form.location = "http://example.invalid/form";
    EXPECT_EQ(code_of([&] { gw.register_tool(form); }), errc::invalid_spec);
    form.filler = "columns";
    form.wrapper = "delimited";
    EXPECT_NO_THROW(gw.register_tool(form));

    auto service = pair_spec("Svc");
    service.adapter = adapter_kind::web_service;
    service.location = "http://example.invalid/svc";
    EXPECT_EQ(code_of([&] { gw.register_tool(service); }), errc::invalid_spec);

    auto missing = pair_spec("Missing");
    missing.location = "/no/such/file.csv";
    EXPECT_EQ(code_of([&] { gw.register_tool(missing); }), errc::invalid_spec);
    EXPECT_EQ(code_of([&] { tool_spec_from_json({{"name", "X"}, {"adapter", "carrier-pigeon"}}); }), errc::invalid_spec);
}

TEST(Gateway, ReRegistrationReplaces) {
    ToolGateway gw;
    gw.register_pairs({"T", {{"a", "b"}}}, {"Ortholog"}, false);
    EXPECT_TRUE(gw.apply_op("T", "a", "b"));
    gw.register_pairs({"T", {{"c", "d"}}}, {"Ortholog"}, false);
    EXPECT_FALSE(gw.apply_op("T", "a", "b"));
    EXPECT_TRUE(gw.apply_op("T", "c", "d"));
    EXPECT_EQ(gw.names().size(), 1u);
}

TEST(Gateway, AsymmetricUnlessDeclared) {
    ToolGateway gw;
    gw.register_pairs({"Asym", {{"a", "b"}}}, {"Ortholog"}, false);
    gw.register_pairs({"Sym", {{"a", "b"}}}, {"Ortholog"}, true);
    EXPECT_TRUE(gw.apply_op("Asym", "a", "b"));
    EXPECT_FALSE(gw.apply_op("Asym", "b", "a"));
    EXPECT_TRUE(gw.apply_op("Sym", "b", "a"));
}

TEST(Gateway, MemoizationIsTransparent) {
    for (bool memo : {true, false}) {
        ToolGateway gw(GatewayOptions{false, std::chrono::milliseconds(100), memo});
        gw.register_pairs({"T", {{"a", "b"}, {"b", "c"}}}, {"Ortholog"}, false);
        std::vector<bool> verdicts;
        for (int round = 0; round < 2; ++round)
            for (auto [x, y] : {std::pair{"a", "b"}, {"b", "a"}, {"b", "c"}, {"c", "c"}})
                verdicts.push_back(gw.apply_op("T", x, y));
        EXPECT_EQ(verdicts, (std::vector<bool>{true, false, true, false, true, false, true, false}));
    }
}

TEST(Gateway, RemoteDisabledByDefault) {
    ToolGateway gw;
    auto svc = pair_spec("Svc");
    svc.adapter = adapter_kind::web_service;
    svc.location = "http://example.invalid/svc";
    svc.transformer = "delimited";
    gw.register_tool(svc);
    int calls = 0;
    gw.set_transport([&](const RemoteRequest&) {
        ++calls;
        return std::string("Partner\nb\n");
    });
    EXPECT_EQ(code_of([&] { gw.apply_op("Svc", "a", "b"); }), errc::tool_unavailable);
    EXPECT_EQ(calls, 0);
    EXPECT_EQ(gw.remote_calls(), 0u);
}

TEST(Gateway, RemoteThroughInjectedTransport) {
    ToolGateway gw(GatewayOptions{true, std::chrono::milliseconds(50), true});
    auto svc = pair_spec("Svc");
    svc.adapter = adapter_kind::web_service;
    svc.location = "http://example.invalid/svc";
    svc.transformer = "delimited";
    gw.register_tool(svc);
    std::vector<RemoteRequest> seen;
    gw.set_transport([&](const RemoteRequest& r) {
        seen.push_back(r);
        return std::string("Partner,Score\nb,0.9\n");
    });
    EXPECT_TRUE(gw.apply_op("Svc", "a", "b"));
    EXPECT_FALSE(gw.apply_op("Svc", "a", "z"));
    ASSERT_EQ(seen.size(), 2u);
    EXPECT_EQ(seen[0].params.at("Key"), "a");
    EXPECT_EQ(seen[0].timeout, std::chrono::milliseconds(50));

    gw.set_transport([](const RemoteRequest&) -> std::string { throw std::runtime_error("timeout"); });
    EXPECT_EQ(code_of([&] { gw.apply_op("Svc", "q", "b"); }), errc::tool_unavailable);
}
