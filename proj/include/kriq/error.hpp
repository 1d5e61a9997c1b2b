#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kriq {

enum class errc {
    missing_key_column,
    duplicate_key,
    empty_key,
    arity_mismatch,
    malformed_table,
    inconsistent_knowledge,
    unknown_concept,
    ambiguous_concept,
    unknown_attribute,
    ambiguous_attribute,
    unparsable_sentence,
    no_template_match,
    selector_unresolved,
    unknown_concept_in_goal,
    unknown_attribute_in_goal,
    malformed_goal,
    empty_plan,
    not_directly_renderable,
    tool_unavailable,
    schema_mismatch,
    invalid_spec,
    not_loaded,
    io_error,
};

inline constexpr std::string_view name_of(errc c) {
    switch (c) {
    case errc::missing_key_column: return "MissingKeyColumn";
    case errc::duplicate_key: return "DuplicateKey";
    case errc::empty_key: return "EmptyKey";
    case errc::arity_mismatch: return "ArityMismatch";
    case errc::malformed_table: return "MalformedTable";
    case errc::inconsistent_knowledge: return "InconsistentKnowledge";
    case errc::unknown_concept: return "UnknownConcept";
    case errc::ambiguous_concept: return "AmbiguousConcept";
    case errc::unknown_attribute: return "UnknownAttribute";
    case errc::ambiguous_attribute: return "AmbiguousAttribute";
    case errc::unparsable_sentence: return "UnparsableSentence";
    case errc::no_template_match: return "NoTemplateMatch";
    case errc::selector_unresolved: return "SelectorUnresolved";
    case errc::unknown_concept_in_goal: return "UnknownConceptInGoal";
    case errc::unknown_attribute_in_goal: return "UnknownAttributeInGoal";
    case errc::malformed_goal: return "MalformedGoal";
    case errc::empty_plan: return "EmptyPlan";
    case errc::not_directly_renderable: return "NotDirectlyRenderable";
    case errc::tool_unavailable: return "ToolUnavailable";
    case errc::schema_mismatch: return "SchemaMismatch";
    case errc::invalid_spec: return "InvalidSpec";
    case errc::not_loaded: return "NotLoaded";
    case errc::io_error: return "IoError";
    }
    return "Unknown";
}

/// Every failure in the library is reported as an `error` carrying a stable
/// name (e.g. "DuplicateKey") that the CLI and HTTP layers echo verbatim.
class error : public std::runtime_error {
public:
    error(errc code, const std::string& what)
        : std::runtime_error(std::string(name_of(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }
    std::string_view name() const noexcept { return name_of(code_); }

private:
    errc code_;
};

} // namespace kriq
