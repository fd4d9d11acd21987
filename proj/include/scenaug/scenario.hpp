#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scenaug/vec2.hpp"

namespace scenaug {

enum class AgentType { EgoVehicle, Vehicle, Pedestrian, Bicycle, TrafficCone, Barrier, GenericObject };
enum class RelativeDirection { Same, Opposite, Crossing };
enum class TrafficLightState { Red, Yellow, Green, Unknown };
enum class TurnType { Left, Right, Straight };
enum class AreaKind { Drivable, Walkway, Carpark, Other };
enum class ScenarioType { ConstructionZone, AccidentSite, Jaywalker, ParkedVehicleNudge, OvertakeOncoming, Other };

// Canonical SCREAMING_SNAKE names used on disk and in prompts. Parsing is
// case-insensitive and returns nullopt for unknown names.
std::string_view to_string(AgentType t);
std::string_view to_string(RelativeDirection d);
std::string_view to_string(TrafficLightState s);
std::string_view to_string(TurnType t);
std::string_view to_string(AreaKind k);
std::string_view to_string(ScenarioType t);

std::optional<AgentType> parse_agent_type(std::string_view s);
std::optional<RelativeDirection> parse_relative_direction(std::string_view s);
std::optional<TrafficLightState> parse_traffic_light(std::string_view s);
std::optional<TurnType> parse_turn_type(std::string_view s);
std::optional<AreaKind> parse_area_kind(std::string_view s);
std::optional<ScenarioType> parse_scenario_type(std::string_view s);

/// True for agent types that drive along lanes.
bool is_vehicle_like(AgentType t);

struct AgentState {
  std::string id;
  AgentType type = AgentType::Vehicle;
  Vec2 center;
  double heading = 0.0;  ///< radians, east = 0, counter-clockwise positive
  double width = 0.0;
  double length = 0.0;
  double velocity = 0.0;
  std::optional<std::string> lane_id;

  bool operator==(const AgentState&) const = default;
};

/// Exactly one of a sampled centerline or a cubic Bezier.
using LaneGeometry = std::variant<Polyline, ControlQuad>;

struct Lane {
  std::string id;
  std::string travel_direction;  ///< cardinal label, e.g. "Eastwards"
  RelativeDirection relative_direction_to_ego = RelativeDirection::Same;
  double width = 0.0;
  double speed_limit = 0.0;  ///< m/s
  LaneGeometry geometry;

  bool operator==(const Lane&) const = default;
};

struct LaneConnector {
  std::string id;
  std::string from_lane;
  std::string to_lane;
  TrafficLightState traffic_light_state = TrafficLightState::Unknown;
  TurnType turn_type = TurnType::Straight;
  double speed_limit = 0.0;
  LaneGeometry geometry;

  bool operator==(const LaneConnector&) const = default;
};

struct Area {
  std::string id;
  AreaKind kind = AreaKind::Drivable;
  Polyline boundary;  ///< implicitly closed

  bool operator==(const Area&) const = default;
};

struct Scenario {
  std::string scenario_id;
  ScenarioType scenario_type = ScenarioType::Other;
  std::vector<AgentState> agents;
  std::vector<Lane> lanes;
  std::vector<LaneConnector> connectors;
  std::vector<Area> areas;

  bool operator==(const Scenario&) const = default;

  [[nodiscard]] const AgentState& ego() const;
  [[nodiscard]] const AgentState* find_agent(std::string_view id) const;
  [[nodiscard]] const Lane* find_lane(std::string_view id) const;
  [[nodiscard]] const LaneConnector* find_connector(std::string_view id) const;
};

/// Throws ValidationError when an agent breaks its own invariants.
void validate_agent(const AgentState& a);
/// Throws ValidationError for per-entity invariants and IntegrityError for
/// cross-references (dangling lane ids, duplicates, ego count).
void validate_scenario(const Scenario& s);

/// Arc length of the geometry (polyline length or Bezier arc length).
double geometry_length(const LaneGeometry& g);
/// Dense centerline sampling used by rendering and simulation (about 1 m apart for Beziers).
Polyline sample_geometry(const LaneGeometry& g, double max_step = 1.0);

bool polygon_is_simple(std::span<const Vec2> ring);
bool point_in_polygon(Vec2 p, std::span<const Vec2> ring);
double polygon_area(std::span<const Vec2> ring);

// ---------------------------------------------------------------------------
// Modifications

enum class ModAction { Add, Remove, Modify };
std::string_view to_string(ModAction a);
std::optional<ModAction> parse_mod_action(std::string_view s);

struct ModificationDict {
  ModAction action = ModAction::Add;
  std::string modified_agent;
  std::string rationale;
  /// Keys other than action/agent/rationale, values kept verbatim.
  std::map<std::string, std::string> extra;

  bool operator==(const ModificationDict&) const = default;
};

struct TranscriptMessage {
  std::string agent;  ///< "sma", "qa", "engineer", "vlm"
  std::string role;   ///< "system", "user", "assistant"
  std::string content;

  bool operator==(const TranscriptMessage&) const = default;
};

struct ModificationResult {
  std::string insights;
  std::string summary;
  std::vector<ModificationDict> modification_dicts;
  std::string calculations;
  std::vector<AgentState> modified_vectors;
  std::vector<TranscriptMessage> transcript;
  int iterations = 0;  ///< SMA generations that produced a candidate

  bool operator==(const ModificationResult&) const = default;
};

/// Applies the dicts in order. Throws IntegrityError for missing targets or
/// duplicate adds, ValidationError for invalid resulting agents.
Scenario apply_modification(const Scenario& s, const ModificationResult& m);

/// Ids of agents touched by ADD or MODIFY.
std::vector<std::string> modified_agent_ids(const ModificationResult& m);

}  // namespace scenaug
