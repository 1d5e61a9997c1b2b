#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "canonical_store.hpp"
#include "error.hpp"
#include "schema_knowledge.hpp"
#include "text.hpp"
#include "tool_gateway.hpp"

namespace kriq {

/// Everything a query needs: base tables, knowledge, canonical store, tools.
struct System {
    std::filesystem::path data_dir;
    std::filesystem::path knowledge_file;
    std::map<std::string, RelationalTable> tables; // by table name
    KnowledgeBase kb;
    CanonicalStore store;
    ToolGateway gateway;
    std::vector<std::string> warnings;
};

/// Loads `<data_dir>/<Table>.csv` for every ontology entry of the knowledge
/// document. Tool fixture paths resolve against the document's directory.
inline System load_system(const std::filesystem::path& data_dir, const std::filesystem::path& knowledge_file,
                          GatewayOptions gateway_options = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(data_dir)) throw error(errc::io_error, "no data directory " + data_dir.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text::read_file(knowledge_file.string()));
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::inconsistent_knowledge, knowledge_file.string() + ": " + e.what());
    }

    System sys;
    sys.data_dir = data_dir;
    sys.knowledge_file = knowledge_file;
    sys.kb = load_knowledge(doc);
    sys.gateway = ToolGateway(gateway_options);
    register_tools(sys.gateway, doc, knowledge_file.parent_path());

    std::set<std::string> wanted;
    for (const auto& e : sys.kb.ontology()) {
        wanted.insert(e.table_name);
        auto file = data_dir / (e.table_name + ".csv");
        if (!fs::exists(file)) throw error(errc::io_error, "missing table file " + file.string());
        auto table = read_table(file);
        std::set<std::string> declared(e.attributes.begin(), e.attributes.end());
        declared.insert(e.key_attribute);
        for (const auto& c : table.columns)
            if (!declared.count(c)) sys.warnings.push_back(e.table_name + "." + c + " is not in the ontology");
        for (const auto& a : declared)
            if (!table.column_index(a)) sys.warnings.push_back(e.table_name + " has no column " + a);
        sys.store.add_table(table, e);
        sys.tables.emplace(e.table_name, std::move(table));
    }
    std::vector<std::string> extra;
    for (const auto& f : fs::directory_iterator(data_dir))
        if (f.is_regular_file() && f.path().extension() == ".csv" && !wanted.count(f.path().stem().string()))
            extra.push_back(f.path().filename().string());
    std::sort(extra.begin(), extra.end());
    for (const auto& f : extra) sys.warnings.push_back(f + " has no ontology entry; ignored");
    return sys;
}

} // namespace kriq
