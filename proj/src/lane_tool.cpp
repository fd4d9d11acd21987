#include "scenaug/lane_tool.hpp"

#include <fmt/format.h>

#include "scenaug/errors.hpp"

namespace scenaug {

LaneQuad lane_quad(const LaneGeometry& g) {
  if (const auto* q = std::get_if<ControlQuad>(&g)) return {*q, 0.0};
  const auto& pl = std::get<Polyline>(g);
  if (pl.size() >= 4) {
    auto fit = fit_bezier(pl);
    return {fit.quad, fit.max_deviation};
  }
  // Two or three points: resample densely enough to fit.
  auto dense = resample_polyline(pl, polyline_length(pl) / 8.0);
  auto fit = fit_bezier(dense);
  return {fit.quad, fit.max_deviation};
}

LaneAnchor lane_point_tool(const Scenario& s, std::string_view id, double distance_m) {
  const LaneGeometry* g = nullptr;
  if (const Lane* l = s.find_lane(id)) {
    g = &l->geometry;
  } else if (const LaneConnector* c = s.find_connector(id)) {
    g = &c->geometry;
  } else {
    throw UnknownId(fmt::format("no lane or lane connector with id '{}'", id));
  }
  return point_at_arc_length(lane_quad(*g).quad, distance_m);
}

}  // namespace scenaug
