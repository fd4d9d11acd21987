#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "scenaug/scenario.hpp"

namespace scenaug {

/// Parses a scenario document. Throws SchemaError for structural problems and
/// out-of-domain values, IntegrityError for broken cross-references.
Scenario load_scenario(std::string_view document);
Scenario load_scenario_file(const std::filesystem::path& path);

/// Deterministic serialization: fixed key order, one entity per line, every
/// number with three decimals. Values finer than a millimeter do not survive.
std::string save_scenario(const Scenario& s);
void save_scenario_file(const Scenario& s, const std::filesystem::path& path);

/// `["VEHICLE", 21.400, 2.600, 0.000, 2.000, 4.500, 0.000, "Lane1"]`, the
/// agent tuple in table order shared by the file format and the prompts.
std::string agent_vector_text(const AgentState& a);
std::string point_list_text(std::span<const Vec2> points);

/// Parses one agent tuple. Throws VectorParseError naming missing or mistyped fields.
AgentState parse_agent_vector(const std::string& id, const nlohmann::json& vector);

/// Heading as read from a three-decimal document: values that overshoot the
/// (-pi, pi] range only by rounding are snapped to pi.
double heading_from_document(double h);

}  // namespace scenaug
