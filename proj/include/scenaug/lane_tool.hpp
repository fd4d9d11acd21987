#pragma once

#include <string_view>

#include "scenaug/geometry.hpp"
#include "scenaug/scenario.hpp"

namespace scenaug {

/// Centerline geometry of a lane or connector as a single quad. Polylines are
/// fitted on demand; `fit_deviation` reports how far the fit strays from them.
struct LaneQuad {
  ControlQuad quad;
  double fit_deviation = 0.0;
};
LaneQuad lane_quad(const LaneGeometry& g);

/// The function offered to the modifier agent: anchor on a lane or connector
/// centerline `distance_m` meters from its start. Throws UnknownId or RangeError.
LaneAnchor lane_point_tool(const Scenario& s, std::string_view lane_or_connector_id, double distance_m);

}  // namespace scenaug
