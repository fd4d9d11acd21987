#include "scenaug/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

#include <fmt/format.h>

#include "scenaug/errors.hpp"
#include "scenaug/geometry.hpp"
#include "text_util.hpp"

namespace scenaug {

namespace {

template <typename E, size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<AgentType, 7> kAgentTypes{{
    {AgentType::EgoVehicle, "EGO_VEHICLE"},
    {AgentType::Vehicle, "VEHICLE"},
    {AgentType::Pedestrian, "PEDESTRIAN"},
    {AgentType::Bicycle, "BICYCLE"},
    {AgentType::TrafficCone, "TRAFFIC_CONE"},
    {AgentType::Barrier, "BARRIER"},
    {AgentType::GenericObject, "GENERIC_OBJECT"},
}};
constexpr NameTable<RelativeDirection, 3> kRelDirs{{
    {RelativeDirection::Same, "SAME"},
    {RelativeDirection::Opposite, "OPPOSITE"},
    {RelativeDirection::Crossing, "CROSSING"},
}};
constexpr NameTable<TrafficLightState, 4> kLights{{
    {TrafficLightState::Red, "RED"},
    {TrafficLightState::Yellow, "YELLOW"},
    {TrafficLightState::Green, "GREEN"},
    {TrafficLightState::Unknown, "UNKNOWN"},
}};
constexpr NameTable<TurnType, 3> kTurns{{
    {TurnType::Left, "LEFT"},
    {TurnType::Right, "RIGHT"},
    {TurnType::Straight, "STRAIGHT"},
}};
constexpr NameTable<AreaKind, 4> kAreaKinds{{
    {AreaKind::Drivable, "DRIVABLE"},
    {AreaKind::Walkway, "WALKWAY"},
    {AreaKind::Carpark, "CARPARK"},
    {AreaKind::Other, "OTHER"},
}};
constexpr NameTable<ScenarioType, 6> kScenarioTypes{{
    {ScenarioType::ConstructionZone, "CONSTRUCTION_ZONE"},
    {ScenarioType::AccidentSite, "ACCIDENT_SITE"},
    {ScenarioType::Jaywalker, "JAYWALKER"},
    {ScenarioType::ParkedVehicleNudge, "PARKED_VEHICLE_NUDGE"},
    {ScenarioType::OvertakeOncoming, "OVERTAKE_ONCOMING"},
    {ScenarioType::Other, "OTHER"},
}};
constexpr NameTable<ModAction, 3> kActions{{
    {ModAction::Add, "ADD"},
    {ModAction::Remove, "REMOVE"},
    {ModAction::Modify, "MODIFY"},
}};

template <typename E, size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <typename E, size_t N>
std::optional<E> lookup(const NameTable<E, N>& table, std::string_view s) {
  s = detail::trim(s);
  for (const auto& [e, name] : table) {
    if (detail::iequals(name, s)) return e;
  }
  return std::nullopt;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = (q - p).cross(r - p);
    return (v > 0) - (v < 0);
  };
  auto on_segment = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

void validate_geometry(const LaneGeometry& g, std::string_view owner) {
  if (const auto* pl = std::get_if<Polyline>(&g)) {
    if (pl->size() < 2) throw ValidationError(fmt::format("{}: polyline needs at least 2 points", owner));
    for (size_t i = 1; i < pl->size(); ++i) {
      if (!(distance((*pl)[i - 1], (*pl)[i]) > 0.0)) {
        throw ValidationError(fmt::format("{}: polyline segment {} has zero length", owner, i));
      }
    }
  } else {
    const auto& q = std::get<ControlQuad>(g);
    if (q.p0 == q.p1 && q.p1 == q.p2 && q.p2 == q.p3) {
      throw ValidationError(fmt::format("{}: Bezier control points coincide", owner));
    }
  }
}

template <typename T>
void require_unique_ids(const std::vector<T>& items, std::string_view category) {
  std::set<std::string_view> seen;
  for (const auto& item : items) {
    if (item.id.empty()) throw IntegrityError(fmt::format("{} with empty id", category));
    if (!seen.insert(item.id).second) {
      throw IntegrityError(fmt::format("duplicate {} id '{}'", category, item.id));
    }
  }
}

}  // namespace

std::string_view to_string(AgentType t) { return name_of(kAgentTypes, t); }
std::string_view to_string(RelativeDirection d) { return name_of(kRelDirs, d); }
std::string_view to_string(TrafficLightState s) { return name_of(kLights, s); }
std::string_view to_string(TurnType t) { return name_of(kTurns, t); }
std::string_view to_string(AreaKind k) { return name_of(kAreaKinds, k); }
std::string_view to_string(ScenarioType t) { return name_of(kScenarioTypes, t); }
std::string_view to_string(ModAction a) { return name_of(kActions, a); }

std::optional<AgentType> parse_agent_type(std::string_view s) { return lookup(kAgentTypes, s); }
std::optional<RelativeDirection> parse_relative_direction(std::string_view s) { return lookup(kRelDirs, s); }
std::optional<TrafficLightState> parse_traffic_light(std::string_view s) { return lookup(kLights, s); }
std::optional<TurnType> parse_turn_type(std::string_view s) { return lookup(kTurns, s); }
std::optional<AreaKind> parse_area_kind(std::string_view s) { return lookup(kAreaKinds, s); }
std::optional<ScenarioType> parse_scenario_type(std::string_view s) { return lookup(kScenarioTypes, s); }
std::optional<ModAction> parse_mod_action(std::string_view s) { return lookup(kActions, s); }

bool is_vehicle_like(AgentType t) {
  return t == AgentType::EgoVehicle || t == AgentType::Vehicle || t == AgentType::Bicycle;
}

const AgentState& Scenario::ego() const {
  for (const auto& a : agents) {
    if (a.type == AgentType::EgoVehicle) return a;
  }
  throw IntegrityError("scenario has no ego vehicle");
}

const AgentState* Scenario::find_agent(std::string_view id) const {
  auto it = std::find_if(agents.begin(), agents.end(), [&](const AgentState& a) { return a.id == id; });
  return it == agents.end() ? nullptr : &*it;
}

const Lane* Scenario::find_lane(std::string_view id) const {
  auto it = std::find_if(lanes.begin(), lanes.end(), [&](const Lane& l) { return l.id == id; });
  return it == lanes.end() ? nullptr : &*it;
}

const LaneConnector* Scenario::find_connector(std::string_view id) const {
  auto it = std::find_if(connectors.begin(), connectors.end(), [&](const LaneConnector& c) { return c.id == id; });
  return it == connectors.end() ? nullptr : &*it;
}

void validate_agent(const AgentState& a) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (a.id.empty()) throw ValidationError("agent with empty id");
  if (!finite(a.center.x) || !finite(a.center.y)) throw ValidationError(fmt::format("agent {}: non-finite center", a.id));
  if (!(a.width > 0.0) || !finite(a.width)) throw ValidationError(fmt::format("agent {}: width must be > 0", a.id));
  if (!(a.length > 0.0) || !finite(a.length)) throw ValidationError(fmt::format("agent {}: length must be > 0", a.id));
  if (!(a.velocity >= 0.0) || !finite(a.velocity)) {
    throw ValidationError(fmt::format("agent {}: velocity must be >= 0", a.id));
  }
  if (!(a.heading > -std::numbers::pi && a.heading <= std::numbers::pi)) {
    throw ValidationError(fmt::format("agent {}: heading {} outside (-pi, pi]", a.id, a.heading));
  }
}

void validate_scenario(const Scenario& s) {
  for (const auto& a : s.agents) validate_agent(a);
  for (const auto& l : s.lanes) {
    if (!(l.width > 0.0)) throw ValidationError(fmt::format("lane {}: width must be > 0", l.id));
    if (!(l.speed_limit > 0.0)) throw ValidationError(fmt::format("lane {}: speed limit must be > 0", l.id));
    validate_geometry(l.geometry, l.id);
  }
  for (const auto& c : s.connectors) {
    if (!(c.speed_limit > 0.0)) throw ValidationError(fmt::format("connector {}: speed limit must be > 0", c.id));
    validate_geometry(c.geometry, c.id);
  }
  for (const auto& ar : s.areas) {
    if (ar.boundary.size() < 3) throw ValidationError(fmt::format("area {}: boundary needs >= 3 points", ar.id));
    if (ar.boundary.front() == ar.boundary.back()) {
      throw ValidationError(fmt::format("area {}: closing point must not be repeated", ar.id));
    }
    if (!polygon_is_simple(ar.boundary)) {
      throw ValidationError(fmt::format("area {}: boundary self-intersects", ar.id));
    }
  }

  require_unique_ids(s.agents, "agent");
  require_unique_ids(s.lanes, "lane");
  require_unique_ids(s.connectors, "lane connector");
  require_unique_ids(s.areas, "area");

  const auto egos = std::count_if(s.agents.begin(), s.agents.end(),
                                  [](const AgentState& a) { return a.type == AgentType::EgoVehicle; });
  if (egos != 1) throw IntegrityError(fmt::format("scenario must have exactly one ego vehicle, found {}", egos));

  for (const auto& a : s.agents) {
    if (a.lane_id && !s.find_lane(*a.lane_id) && !s.find_connector(*a.lane_id)) {
      throw IntegrityError(fmt::format("agent {} references unknown lane '{}'", a.id, *a.lane_id));
    }
  }
  for (const auto& c : s.connectors) {
    if (c.from_lane == c.to_lane) throw IntegrityError(fmt::format("connector {} joins a lane to itself", c.id));
    if (!s.find_lane(c.from_lane)) throw IntegrityError(fmt::format("connector {}: unknown from_lane '{}'", c.id, c.from_lane));
    if (!s.find_lane(c.to_lane)) throw IntegrityError(fmt::format("connector {}: unknown to_lane '{}'", c.id, c.to_lane));
  }
}

double geometry_length(const LaneGeometry& g) {
  if (const auto* pl = std::get_if<Polyline>(&g)) return polyline_length(*pl);
  return arc_length(std::get<ControlQuad>(g));
}

Polyline sample_geometry(const LaneGeometry& g, double max_step) {
  if (const auto* pl = std::get_if<Polyline>(&g)) return *pl;
  const auto& q = std::get<ControlQuad>(g);
  const double len = arc_length(q);
  const int n = std::max(8, static_cast<int>(std::ceil(len / max_step)));
  Polyline out;
  out.reserve(static_cast<size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) out.push_back(bezier_point(q, static_cast<double>(i) / n));
  return out;
}

bool polygon_is_simple(std::span<const Vec2> ring) {
  const size_t n = ring.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    if (ring[i] == ring[(i + 1) % n]) return false;
  }
  for (size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i], b = ring[(i + 1) % n];
    for (size_t j = i + 1; j < n; ++j) {
      const Vec2 c = ring[j], d = ring[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges share one vertex; they must not fold back onto each other.
        const Vec2 shared = j == i + 1 ? b : a;
        const Vec2 u = (j == i + 1 ? a : b) - shared;
        const Vec2 v = (j == i + 1 ? d : c) - shared;
        if (u.cross(v) == 0.0 && u.dot(v) > 0.0) return false;
        continue;
      }
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> ring) {
  bool inside = false;
  const size_t n = ring.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

double polygon_area(std::span<const Vec2> ring) {
  double acc = 0.0;
  const size_t n = ring.size();
  for (size_t i = 0; i < n; ++i) acc += ring[i].cross(ring[(i + 1) % n]);
  return 0.5 * std::abs(acc);
}

Scenario apply_modification(const Scenario& s, const ModificationResult& m) {
  Scenario out = s;
  auto vector_for = [&](const std::string& id) -> const AgentState& {
    for (auto it = m.modified_vectors.rbegin(); it != m.modified_vectors.rend(); ++it) {
      if (it->id == id) return *it;
    }
    throw IntegrityError(fmt::format("no modified vector supplied for agent '{}'", id));
  };
  auto position_of = [&](const std::string& id) {
    return std::find_if(out.agents.begin(), out.agents.end(), [&](const AgentState& a) { return a.id == id; });
  };

  for (const auto& d : m.modification_dicts) {
    auto it = position_of(d.modified_agent);
    switch (d.action) {
      case ModAction::Add: {
        if (it != out.agents.end()) {
          throw IntegrityError(fmt::format("ADD of existing agent '{}'", d.modified_agent));
        }
        const AgentState& v = vector_for(d.modified_agent);
        validate_agent(v);
        out.agents.push_back(v);
        break;
      }
      case ModAction::Remove:
        if (it == out.agents.end()) {
          throw IntegrityError(fmt::format("REMOVE of unknown agent '{}'", d.modified_agent));
        }
        out.agents.erase(it);
        break;
      case ModAction::Modify: {
        if (it == out.agents.end()) {
          throw IntegrityError(fmt::format("MODIFY of unknown agent '{}'", d.modified_agent));
        }
        const AgentState& v = vector_for(d.modified_agent);
        validate_agent(v);
        *it = v;
        break;
      }
    }
  }
  validate_scenario(out);
  return out;
}

std::vector<std::string> modified_agent_ids(const ModificationResult& m) {
  std::vector<std::string> ids;
  for (const auto& d : m.modification_dicts) {
    if (d.action != ModAction::Remove &&
        std::find(ids.begin(), ids.end(), d.modified_agent) == ids.end()) {
      ids.push_back(d.modified_agent);
    }
  }
  return ids;
}

}  // namespace scenaug
