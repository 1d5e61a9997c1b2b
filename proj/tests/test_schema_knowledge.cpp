#include <gtest/gtest.h>

#include <kriq/schema_knowledge.hpp>
#include <kriq/text.hpp>

#include "support/fixtures.hpp"

using namespace kriq;
using nlohmann::json;

namespace {

json bundled_doc() { return json::parse(text::read_file(fixtures::bundled_knowledge().string())); }

KnowledgeBase bundled_kb() { return load_knowledge(bundled_doc()); }

errc load_error(const json& doc) {
    try {
        load_knowledge(doc);
    } catch (const error& e) {
        return e.code();
    }
    ADD_FAILURE() << "loaded: " << doc.dump();
    return errc::io_error;
}

} // namespace

TEST(Knowledge, BundledTableSizes) {
    auto kb = bundled_kb();
    EXPECT_EQ(kb.ontology().size(), 2u);
    EXPECT_EQ(kb.derivatives().size(), 1u);
    EXPECT_EQ(kb.foreign_keys().size(), 1u);
    EXPECT_EQ(kb.similar_concepts().size(), 1u);
    EXPECT_EQ(kb.tools().size(), 2u);
}

TEST(Knowledge, CommaListsBecomeSets) {
    auto kb = bundled_kb();
    EXPECT_EQ(kb.similar_concepts()[0].relations, (std::vector<std::string>{"Ortholog", "Paralog", "Duplication"}));
    ASSERT_NE(kb.tools_for("Ortholog"), nullptr);
    EXPECT_EQ(kb.tools_for("Ortholog")->operations, (std::vector<std::string>{"BLAST", "ORSCAN"}));
    EXPECT_EQ(kb.tools_for("Duplication"), nullptr);
}

TEST(Knowledge, EmptyDocumentIsValid) {
    auto kb = load_knowledge(json::object());
    EXPECT_TRUE(kb.ontology().empty());
    EXPECT_TRUE(kb.tools().empty());
}

TEST(Knowledge, LoadIsDeterministic) { EXPECT_TRUE(bundled_kb() == bundled_kb()); }

TEST(Knowledge, ReferentialClosure) {
    auto doc = bundled_doc();
    doc["foreign_keys"][0]["table_y"] = "Nowhere";
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    doc = bundled_doc();
    doc["foreign_keys"][0]["column_x"] = "NoColumn";
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    doc = bundled_doc();
    doc["derivatives"].push_back({{"concept_a", "Gene"}, {"concept_b", "Organism"}});
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    doc = bundled_doc();
    doc["similar_concepts"][0]["relations"] = json::array();
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    doc = bundled_doc();
    doc["ontology"][0]["attributes"].push_back("GeneID");
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    doc = bundled_doc();
    doc["ontology"].push_back(doc["ontology"][0]);
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    doc = bundled_doc();
    doc["tools"][0]["operations"] = "";
    EXPECT_EQ(load_error(doc), errc::inconsistent_knowledge);

    EXPECT_EQ(load_error(json::array()), errc::inconsistent_knowledge);
    EXPECT_EQ(load_error({{"ontology", {{{"concept_name", "X"}}}}}), errc::inconsistent_knowledge);
}

TEST(Knowledge, ResolveConcept) {
    auto kb = bundled_kb();
    EXPECT_EQ(kb.resolve_concept("genes"), "Gene");
    EXPECT_EQ(kb.resolve_concept("proteins"), "Protein");
    EXPECT_EQ(kb.resolve_concept("UniProt"), "Protein");
    EXPECT_THROW(
        {
            try {
                kb.resolve_concept("xyzzy");
            } catch (const error& e) {
                EXPECT_EQ(e.code(), errc::unknown_concept);
                throw;
            }
        },
        error);
    // Default lexicon round-trips every ontology concept name.
    for (const auto& e : kb.ontology()) EXPECT_EQ(kb.resolve_concept(text::lower(e.concept_name)), e.concept_name);
}

TEST(Knowledge, ResolveAttributeFollowsDerivations) {
    auto kb = bundled_kb();
    EXPECT_EQ(kb.resolve_attribute("function", "Gene"), (std::pair<std::string, std::string>{"Protein", "Function"}));
    EXPECT_EQ(kb.resolve_attribute("sequences", "Gene"), (std::pair<std::string, std::string>{"Gene", "DNASequence"}));
    EXPECT_EQ(kb.resolve_attribute("gene name", "Gene"), (std::pair<std::string, std::string>{"Gene", "GeneName"}));
    EXPECT_EQ(kb.resolve_attribute("functions", "Protein"), (std::pair<std::string, std::string>{"Protein", "Function"}));
    try {
        kb.resolve_attribute("colour", "Gene");
        FAIL();
    } catch (const error& e) {
        EXPECT_EQ(e.code(), errc::unknown_attribute);
    }
}

TEST(Knowledge, UserLexiconWins) {
    auto doc = bundled_doc();
    doc["lexicon"].push_back({{"surface_term", "sequence"}, {"kind", "attribute"}, {"target", "ProteinName"}, {"scope", "Protein"}});
    auto kb = load_knowledge(doc);
    EXPECT_EQ(kb.resolve_attribute("sequence", "Protein"), (std::pair<std::string, std::string>{"Protein", "ProteinName"}));
    EXPECT_EQ(kb.resolve_relation("homologs"), "Ortholog");
    EXPECT_EQ(kb.resolve_condition("Protein Coding")->concept_name, "Protein");
}

TEST(Knowledge, SymmetricDerivationsFlag) {
    auto kb = bundled_kb();
    EXPECT_TRUE(kb.declares_derivative("Gene", "Protein"));
    EXPECT_EQ(kb.derivation_edges().size(), 2u);
    auto doc = bundled_doc();
    doc["options"]["symmetric_derivations"] = false;
    EXPECT_EQ(load_knowledge(doc).derivation_edges().size(), 1u);
}
