#pragma once

#include <filesystem>

#include <kriq/system.hpp>

#ifndef KRIQ_DEFAULT_DATA_DIR
#error "KRIQ_DEFAULT_DATA_DIR must point at data/bundled"
#endif

namespace fixtures {

inline std::filesystem::path bundled_dir() { return KRIQ_DEFAULT_DATA_DIR; }
inline std::filesystem::path bundled_knowledge() { return bundled_dir() / "knowledge.json"; }

/// The bundled UniProt/Entrez system, loaded once per call.
inline kriq::System bundled() { return kriq::load_system(bundled_dir(), bundled_knowledge()); }

} // namespace fixtures
