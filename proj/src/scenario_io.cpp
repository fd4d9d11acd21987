#include "scenaug/scenario_io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "scenaug/errors.hpp"
#include "text_util.hpp"

namespace scenaug {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 8> kVectorFields = {"type",  "x",      "y",        "heading",
                                                           "width", "length", "velocity", "lane_id"};

// Half a unit in the last written decimal.
constexpr double kRoundingSlack = 5e-4 + 1e-12;

const json& require(const json& obj, std::string_view key, std::string_view where) {
  if (!obj.is_object()) throw SchemaError(fmt::format("{}: expected an object", where));
  auto it = obj.find(std::string(key));
  if (it == obj.end()) throw SchemaError(fmt::format("{}: missing field '{}'", where, key));
  return *it;
}

std::string require_string(const json& obj, std::string_view key, std::string_view where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(fmt::format("{}: field '{}' must be a string", where, key));
  return v.get<std::string>();
}

double require_number(const json& v, std::string_view what) {
  if (!v.is_number()) throw SchemaError(fmt::format("{} must be a number", what));
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(fmt::format("{} must be finite", what));
  return d;
}

double require_number(const json& obj, std::string_view key, std::string_view where) {
  return require_number(require(obj, key, where), fmt::format("{}: field '{}'", where, key));
}

const json& require_array(const json& obj, std::string_view key, std::string_view where) {
  const json& v = require(obj, key, where);
  if (!v.is_array()) throw SchemaError(fmt::format("{}: field '{}' must be an array", where, key));
  return v;
}

template <typename E>
E require_enum(const json& obj, std::string_view key, std::string_view where,
               std::optional<E> (*parse)(std::string_view)) {
  const std::string s = require_string(obj, key, where);
  auto e = parse(s);
  if (!e) throw SchemaError(fmt::format("{}: unknown {} '{}'", where, key, s));
  return *e;
}

Polyline parse_points(const json& arr, std::string_view where) {
  if (!arr.is_array()) throw SchemaError(fmt::format("{}: expected a point list", where));
  Polyline pts;
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw SchemaError(fmt::format("{}: each point must be [x, y]", where));
    pts.push_back({require_number(p[0], where), require_number(p[1], where)});
  }
  return pts;
}

LaneGeometry parse_geometry(const json& obj, std::string_view where) {
  const json& g = require(obj, "geometry", where);
  if (!g.is_object() || g.size() != 1) {
    throw SchemaError(fmt::format("{}: geometry must hold exactly one of 'polyline' or 'bezier'", where));
  }
  if (g.contains("polyline")) return parse_points(g["polyline"], where);
  if (g.contains("bezier")) {
    Polyline pts = parse_points(g["bezier"], where);
    if (pts.size() != 4) throw SchemaError(fmt::format("{}: bezier needs exactly 4 control points", where));
    return ControlQuad{pts[0], pts[1], pts[2], pts[3]};
  }
  throw SchemaError(fmt::format("{}: geometry must hold exactly one of 'polyline' or 'bezier'", where));
}

std::string geometry_text(const LaneGeometry& g) {
  if (const auto* pl = std::get_if<Polyline>(&g)) return "{\"polyline\": " + point_list_text(*pl) + "}";
  const auto pts = std::get<ControlQuad>(g).points();
  return "{\"bezier\": " + point_list_text(pts) + "}";
}

template <typename T, typename F>
void write_list(std::string& out, std::string_view key, const std::vector<T>& items, F&& line, bool last) {
  out += fmt::format("  \"{}\": [", key);
  if (items.empty()) {
    out += "]";
  } else {
    out += "\n";
    for (size_t i = 0; i < items.size(); ++i) {
      out += "    " + line(items[i]);
      out += i + 1 < items.size() ? ",\n" : "\n";
    }
    out += "  ]";
  }
  out += last ? "\n" : ",\n";
}

}  // namespace

double heading_from_document(double h) {
  if (h > std::numbers::pi && h <= std::numbers::pi + kRoundingSlack) return std::numbers::pi;
  if (h <= -std::numbers::pi && h >= -std::numbers::pi - kRoundingSlack) return std::numbers::pi;
  return h;
}

std::string point_list_text(std::span<const Vec2> points) {
  std::string out = "[";
  for (size_t i = 0; i < points.size(); ++i) {
    if (i) out += ", ";
    out += "[" + detail::f3(points[i].x) + ", " + detail::f3(points[i].y) + "]";
  }
  return out + "]";
}

std::string agent_vector_text(const AgentState& a) {
  return fmt::format("[{}, {}, {}, {}, {}, {}, {}, {}]", detail::quote(to_string(a.type)), detail::f3(a.center.x),
                     detail::f3(a.center.y), detail::f3(a.heading), detail::f3(a.width), detail::f3(a.length),
                     detail::f3(a.velocity), a.lane_id ? detail::quote(*a.lane_id) : std::string("null"));
}

AgentState parse_agent_vector(const std::string& id, const json& v) {
  if (!v.is_array()) throw VectorParseError(fmt::format("vector for {} must be a list", id));
  if (v.size() != kVectorFields.size()) {
    std::string missing;
    for (size_t i = v.size(); i < kVectorFields.size(); ++i) {
      if (!missing.empty()) missing += ", ";
      missing += kVectorFields[i];
    }
    if (v.size() < kVectorFields.size()) {
      throw VectorParseError(
          fmt::format("vector for {} has {} of 8 fields; missing: {}", id, v.size(), missing));
    }
    throw VectorParseError(fmt::format("vector for {} has {} fields, expected 8", id, v.size()));
  }
  AgentState a;
  a.id = id;
  if (!v[0].is_string()) throw VectorParseError(fmt::format("vector for {}: field 'type' must be a string", id));
  const auto type = parse_agent_type(v[0].get<std::string>());
  if (!type) throw VectorParseError(fmt::format("vector for {}: unknown agent type '{}'", id, v[0].get<std::string>()));
  a.type = *type;
  std::array<double, 6> nums{};
  for (size_t i = 1; i <= 6; ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
      throw VectorParseError(fmt::format("vector for {}: field '{}' must be a number", id, kVectorFields[i]));
    }
    nums[i - 1] = v[i].get<double>();
  }
  a.center = {nums[0], nums[1]};
  a.heading = nums[2];
  a.width = nums[3];
  a.length = nums[4];
  a.velocity = nums[5];
  if (v[7].is_string()) {
    a.lane_id = v[7].get<std::string>();
  } else if (!v[7].is_null()) {
    throw VectorParseError(fmt::format("vector for {}: field 'lane_id' must be a string or null", id));
  }
  return a;
}

Scenario load_scenario(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SchemaError(fmt::format("scenario is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw SchemaError("scenario document must be a JSON object");

  Scenario s;
  s.scenario_id = require_string(doc, "scenario_id", "scenario");
  s.scenario_type = require_enum<ScenarioType>(doc, "scenario_type", "scenario", &parse_scenario_type);

  for (const auto& a : require_array(doc, "agents", "scenario")) {
    const std::string id = require_string(a, "id", "agent");
    AgentState agent;
    try {
      agent = parse_agent_vector(id, require(a, "vector", fmt::format("agent {}", id)));
    } catch (const VectorParseError& e) {
      throw SchemaError(e.what());
    }
    agent.heading = heading_from_document(agent.heading);
    s.agents.push_back(std::move(agent));
  }
  for (const auto& l : require_array(doc, "lanes", "scenario")) {
    Lane lane;
    lane.id = require_string(l, "id", "lane");
    const std::string where = "lane " + lane.id;
    lane.travel_direction = require_string(l, "travel_direction", where);
    lane.relative_direction_to_ego =
        require_enum<RelativeDirection>(l, "relative_direction_to_ego", where, &parse_relative_direction);
    lane.width = require_number(l, "width", where);
    lane.speed_limit = require_number(l, "speed_limit", where);
    lane.geometry = parse_geometry(l, where);
    s.lanes.push_back(std::move(lane));
  }
  for (const auto& c : require_array(doc, "lane_connectors", "scenario")) {
    LaneConnector con;
    con.id = require_string(c, "id", "lane connector");
    const std::string where = "lane connector " + con.id;
    con.from_lane = require_string(c, "from_lane", where);
    con.to_lane = require_string(c, "to_lane", where);
    con.traffic_light_state = require_enum<TrafficLightState>(c, "traffic_light_state", where, &parse_traffic_light);
    con.turn_type = require_enum<TurnType>(c, "turn_type", where, &parse_turn_type);
    con.speed_limit = require_number(c, "speed_limit", where);
    con.geometry = parse_geometry(c, where);
    s.connectors.push_back(std::move(con));
  }
  for (const auto& a : require_array(doc, "areas", "scenario")) {
    Area area;
    area.id = require_string(a, "id", "area");
    area.kind = require_enum<AreaKind>(a, "kind", "area " + area.id, &parse_area_kind);
    area.boundary = parse_points(require(a, "boundary", "area " + area.id), "area " + area.id);
    s.areas.push_back(std::move(area));
  }

  try {
    validate_scenario(s);
  } catch (const ValidationError& e) {
    throw SchemaError(e.what());
  }
  return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::filesystem::filesystem_error("cannot open scenario", path, std::make_error_code(std::errc::no_such_file_or_directory));
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str());
}

std::string save_scenario(const Scenario& s) {
  using detail::f3;
  using detail::quote;
  std::string out = "{\n";
  out += "  \"scenario_id\": " + quote(s.scenario_id) + ",\n";
  out += "  \"scenario_type\": " + quote(to_string(s.scenario_type)) + ",\n";
  write_list(out, "agents", s.agents, [](const AgentState& a) {
    return fmt::format("{{\"id\": {}, \"vector\": {}}}", quote(a.id), agent_vector_text(a));
  }, false);
  write_list(out, "lanes", s.lanes, [](const Lane& l) {
    return fmt::format(
        "{{\"id\": {}, \"travel_direction\": {}, \"relative_direction_to_ego\": {}, \"width\": {}, "
        "\"speed_limit\": {}, \"geometry\": {}}}",
        quote(l.id), quote(l.travel_direction), quote(to_string(l.relative_direction_to_ego)), f3(l.width),
        f3(l.speed_limit), geometry_text(l.geometry));
  }, false);
  write_list(out, "lane_connectors", s.connectors, [](const LaneConnector& c) {
    return fmt::format(
        "{{\"id\": {}, \"from_lane\": {}, \"to_lane\": {}, \"traffic_light_state\": {}, \"turn_type\": {}, "
        "\"speed_limit\": {}, \"geometry\": {}}}",
        quote(c.id), quote(c.from_lane), quote(c.to_lane), quote(to_string(c.traffic_light_state)),
        quote(to_string(c.turn_type)), f3(c.speed_limit), geometry_text(c.geometry));
  }, false);
  write_list(out, "areas", s.areas, [](const Area& a) {
    return fmt::format("{{\"id\": {}, \"kind\": {}, \"boundary\": {}}}", quote(a.id), quote(to_string(a.kind)),
                       point_list_text(a.boundary));
  }, true);
  out += "}\n";
  return out;
}

void save_scenario_file(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::filesystem::filesystem_error("cannot write scenario", path, std::make_error_code(std::errc::io_error));
  out << save_scenario(s);
}

}  // namespace scenaug
