#pragma once

#include <span>
#include <vector>

#include "scenaug/vec2.hpp"

namespace scenaug {

/// A point on a lane centerline together with its tangent direction.
struct LaneAnchor {
  Vec2 position;
  double heading = 0.0;                ///< radians, tangent direction
  double arc_length_from_start = 0.0;  ///< meters
  bool clamped = false;                ///< requested distance was outside the curve but within grace
};

/// Distance beyond either end of a curve that is clamped instead of rejected.
inline constexpr double kArcLengthGrace = 0.5;

/// Throws DegenerateError when all four control points coincide.
void validate_quad(const ControlQuad& c);

Vec2 bezier_point(const ControlQuad& c, double t);
Vec2 bezier_derivative(const ControlQuad& c, double t);
double bezier_heading(const ControlQuad& c, double t);

double arc_length(const ControlQuad& c);
/// Arc length of the sub-curve between parameters t0 <= t1.
double arc_length(const ControlQuad& c, double t0, double t1);

/// Cumulative arc-length table over a quad, used for repeated inversions.
///
/// The curve is split into uniform parameter segments; each segment length is
/// integrated with adaptive 16-point Gauss-Legendre. Inversion locates the
/// segment by binary search and then bisects inside it.
class ArcLengthTable {
 public:
  explicit ArcLengthTable(const ControlQuad& c, int segments = 32);

  [[nodiscard]] double total() const { return cumulative_.back(); }
  [[nodiscard]] double length_at(double t) const;
  [[nodiscard]] double parameter_at(double s) const;
  [[nodiscard]] const ControlQuad& quad() const { return quad_; }

 private:
  ControlQuad quad_;
  std::vector<double> knots_;
  std::vector<double> cumulative_;
};

LaneAnchor point_at_arc_length(const ControlQuad& c, double s);
LaneAnchor point_at_arc_length(const ArcLengthTable& table, double s);

double polyline_length(std::span<const Vec2> points);

/// Resamples a polyline at equal arc-length spacing, keeping the exact final point.
Polyline resample_polyline(std::span<const Vec2> points, double spacing = 5.0);

/// Anchor at arc distance `s` along a polyline (same clamping rule as quads).
LaneAnchor polyline_point_at(std::span<const Vec2> points, double s);

struct BezierFit {
  ControlQuad quad;
  double max_deviation = 0.0;  ///< largest distance from an input point to the fitted curve
};

/// Least-squares cubic fit with pinned endpoints.
BezierFit fit_bezier(std::span<const Vec2> points);

/// Distance from `p` to the curve, refined by Newton projection.
double distance_to_curve(const ControlQuad& c, Vec2 p, double* t_out = nullptr);

/// Point displaced perpendicular to the anchor heading; positive = left of travel.
Vec2 offset_point(const LaneAnchor& a, double lateral_offset);

}  // namespace scenaug
