#include "scenaug/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <fmt/format.h>

#include "scenaug/errors.hpp"

namespace scenaug {

namespace {

// Positive half of the 16-point Gauss-Legendre rule on [-1, 1].
constexpr double kGaussLegendre16[8][2] = {
    {0.095012509837637454, 0.18945061045506859},
    {0.28160355077925892, 0.18260341504492361},
    {0.45801677765722737, 0.16915651939500262},
    {0.61787624440264377, 0.14959598881657676},
    {0.755404408355003, 0.12462897125553403},
    {0.86563120238783176, 0.095158511682492591},
    {0.9445750230732326, 0.062253523938647706},
    {0.98940093499164994, 0.027152459411754037},
};

Vec2 second_derivative(const ControlQuad& c, double t) {
  const double u = 1.0 - t;
  return (c.p2 - c.p1 * 2.0 + c.p0) * (6.0 * u) + (c.p3 - c.p2 * 2.0 + c.p1) * (6.0 * t);
}

double speed(const ControlQuad& c, double t) { return bezier_derivative(c, t).norm(); }

double gauss16(const ControlQuad& c, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (const auto& [x, w] : kGaussLegendre16) {
    sum += w * (speed(c, mid - half * x) + speed(c, mid + half * x));
  }
  return sum * half;
}

double adaptive_length(const ControlQuad& c, double a, double b, double whole, int depth) {
  const double m = 0.5 * (a + b);
  const double left = gauss16(c, a, m);
  const double right = gauss16(c, m, b);
  const double refined = left + right;
  if (depth >= 40 || std::abs(refined - whole) <= 1e-13 * std::max(1.0, std::abs(refined))) {
    return refined;
  }
  return adaptive_length(c, a, m, left, depth + 1) + adaptive_length(c, m, b, right, depth + 1);
}

double curve_scale(const ControlQuad& c) {
  double s = 0.0;
  for (const Vec2& p : c.points()) s = std::max({s, std::abs(p.x), std::abs(p.y)});
  return std::max(s, 1.0);
}

void check_parameter(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError(fmt::format("curve parameter {} outside [0, 1]", t));
  }
}

struct LeastSquaresQuad {
  ControlQuad quad;
  bool ok = false;
};

LeastSquaresQuad solve_inner_points(std::span<const Vec2> pts, std::span<const double> params) {
  const Vec2 p0 = pts.front();
  const Vec2 p3 = pts.back();
  double a11 = 0, a12 = 0, a22 = 0;
  Vec2 r1, r2;
  for (size_t i = 0; i < pts.size(); ++i) {
    const double t = params[i];
    const double u = 1.0 - t;
    const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
    const Vec2 r = pts[i] - p0 * b0 - p3 * b3;
    a11 += b1 * b1;
    a12 += b1 * b2;
    a22 += b2 * b2;
    r1 += r * b1;
    r2 += r * b2;
  }
  const double det = a11 * a22 - a12 * a12;
  if (std::abs(det) < 1e-14 * std::max(1.0, a11 * a22)) return {};
  const Vec2 p1 = (r1 * a22 - r2 * a12) / det;
  const Vec2 p2 = (r2 * a11 - r1 * a12) / det;
  return {{p0, p1, p2, p3}, true};
}

double refine_projection(const ControlQuad& c, Vec2 p, double t) {
  for (int i = 0; i < 30; ++i) {
    const Vec2 d = bezier_point(c, t) - p;
    const Vec2 d1 = bezier_derivative(c, t);
    const Vec2 d2 = second_derivative(c, t);
    const double f = d.dot(d1);
    const double fp = d1.dot(d1) + d.dot(d2);
    if (fp <= 0.0 || !std::isfinite(fp)) break;
    const double next = std::clamp(t - f / fp, 0.0, 1.0);
    if (std::abs(next - t) < 1e-15) {
      t = next;
      break;
    }
    t = next;
  }
  return t;
}

double max_deviation(const ControlQuad& c, std::span<const Vec2> pts) {
  double worst = 0.0;
  for (const Vec2& p : pts) worst = std::max(worst, distance_to_curve(c, p));
  return worst;
}

BezierFit fit_with_parameters(std::span<const Vec2> pts, std::vector<double> params) {
  const Vec2 p0 = pts.front();
  const Vec2 p3 = pts.back();
  BezierFit best{{p0, p0 + (p3 - p0) / 3.0, p0 + (p3 - p0) * (2.0 / 3.0), p3},
                 std::numeric_limits<double>::infinity()};
  for (int iter = 0; iter < 200; ++iter) {
    const auto solved = solve_inner_points(pts, params);
    if (!solved.ok) break;
    double worst = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i != 0 && i + 1 != pts.size()) params[i] = refine_projection(solved.quad, pts[i], params[i]);
      worst = std::max(worst, distance(bezier_point(solved.quad, params[i]), pts[i]));
    }
    const bool improved = worst < best.max_deviation - 1e-15;
    if (worst < best.max_deviation) best = {solved.quad, worst};
    if (!improved || worst < 1e-13) break;
  }
  if (!std::isfinite(best.max_deviation)) best.max_deviation = max_deviation(best.quad, pts);
  return best;
}

/// Unit direction when the curve is a monotone straight segment, where arc
/// length is plain distance from p0.
std::optional<Vec2> straight_direction(const ControlQuad& c) {
  const Vec2 chord = c.p3 - c.p0;
  const double len = chord.norm();
  if (!(len > 0.0)) return std::nullopt;
  const Vec2 u = chord / len;
  double prev = 0.0;
  for (const Vec2& q : {c.p1, c.p2}) {
    const Vec2 r = q - c.p0;
    if (std::abs(u.cross(r)) > 1e-12 * len) return std::nullopt;
    const double along = u.dot(r);
    if (along < prev - 1e-12 * len || along > len * (1.0 + 1e-12)) return std::nullopt;
    prev = along;
  }
  return u;
}

}  // namespace

void validate_quad(const ControlQuad& c) {
  if (c.p0 == c.p1 && c.p1 == c.p2 && c.p2 == c.p3) {
    throw DegenerateError("Bezier control points all coincide");
  }
}

Vec2 bezier_point(const ControlQuad& c, double t) {
  check_parameter(t);
  const double u = 1.0 - t;
  const double b0 = u * u * u;
  const double b1 = 3.0 * u * u * t;
  const double b2 = 3.0 * u * t * t;
  const double b3 = t * t * t;
  return {b0 * c.p0.x + b1 * c.p1.x + b2 * c.p2.x + b3 * c.p3.x,
          b0 * c.p0.y + b1 * c.p1.y + b2 * c.p2.y + b3 * c.p3.y};
}

Vec2 bezier_derivative(const ControlQuad& c, double t) {
  const double u = 1.0 - t;
  return (c.p1 - c.p0) * (3.0 * u * u) + (c.p2 - c.p1) * (6.0 * u * t) + (c.p3 - c.p2) * (3.0 * t * t);
}

double bezier_heading(const ControlQuad& c, double t) {
  check_parameter(t);
  const double eps = 1e-12 * curve_scale(c);
  Vec2 d = bezier_derivative(c, t);
  if (d.norm() > eps) return normalize_angle(std::atan2(d.y, d.x));

  validate_quad(c);
  // Vanishing tangent: step toward the interior until the direction is defined.
  const double dir = t < 0.5 ? 1.0 : -1.0;
  for (double step = 1e-6; step <= 0.5; step *= 10.0) {
    d = bezier_derivative(c, t + dir * step);
    if (d.norm() > eps) return normalize_angle(std::atan2(d.y, d.x));
  }
  throw DegenerateError("Bezier derivative vanishes; heading undefined");
}

double arc_length(const ControlQuad& c) { return arc_length(c, 0.0, 1.0); }

double arc_length(const ControlQuad& c, double t0, double t1) {
  if (t1 <= t0) return 0.0;
  return adaptive_length(c, t0, t1, gauss16(c, t0, t1), 0);
}

ArcLengthTable::ArcLengthTable(const ControlQuad& c, int segments) : quad_(c) {
  validate_quad(c);
  knots_.resize(static_cast<size_t>(segments) + 1);
  cumulative_.resize(knots_.size());
  for (int i = 0; i <= segments; ++i) knots_[static_cast<size_t>(i)] = static_cast<double>(i) / segments;
  knots_.back() = 1.0;
  cumulative_[0] = 0.0;
  for (size_t i = 1; i < knots_.size(); ++i) {
    cumulative_[i] = cumulative_[i - 1] + arc_length(c, knots_[i - 1], knots_[i]);
  }
}

double ArcLengthTable::length_at(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const auto k = static_cast<size_t>(std::max<std::ptrdiff_t>(0, (it - knots_.begin()) - 1));
  if (k + 1 >= knots_.size()) return cumulative_.back();
  return cumulative_[k] + arc_length(quad_, knots_[k], t);
}

double ArcLengthTable::parameter_at(double s) const {
  if (s <= 0.0) return 0.0;
  if (s >= total()) return 1.0;
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const auto k = static_cast<size_t>((it - cumulative_.begin()) - 1);
  double lo = knots_[k];
  double hi = knots_[k + 1];
  const double target = s - cumulative_[k];
  const double base = knots_[k];
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (arc_length(quad_, base, mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

LaneAnchor point_at_arc_length(const ControlQuad& c, double s) {
  return point_at_arc_length(ArcLengthTable(c), s);
}

LaneAnchor point_at_arc_length(const ArcLengthTable& table, double s) {
  const double total = table.total();
  if (!std::isfinite(s) || s < -kArcLengthGrace || s > total + kArcLengthGrace) {
    throw RangeError(fmt::format("arc distance {:.3f} m outside curve of length {:.3f} m", s, total));
  }
  LaneAnchor a;
  a.clamped = s < 0.0 || s > total;
  s = std::clamp(s, 0.0, total);
  a.arc_length_from_start = s;
  const ControlQuad& c = table.quad();
  if (auto dir = straight_direction(c)) {
    a.position = s >= total ? c.p3 : c.p0 + *dir * s;
    a.heading = std::atan2(dir->y, dir->x);
    return a;
  }
  const double t = table.parameter_at(s);
  a.position = bezier_point(c, t);
  a.heading = bezier_heading(c, t);
  return a;
}

double polyline_length(std::span<const Vec2> points) {
  double total = 0.0;
  for (size_t i = 1; i < points.size(); ++i) total += distance(points[i - 1], points[i]);
  return total;
}

Polyline resample_polyline(std::span<const Vec2> points, double spacing) {
  if (!(spacing > 0.0)) throw DomainError("resample spacing must be positive");
  if (points.size() < 2) throw DegenerateError("polyline needs at least two points");
  const double total = polyline_length(points);
  if (!(total > 0.0)) throw DegenerateError("polyline has zero length");

  Polyline out{points.front()};
  constexpr double tol = 1e-9;
  long k = 1;
  double seg_start = 0.0;
  for (size_t i = 1; i < points.size(); ++i) {
    const Vec2 a = points[i - 1];
    const Vec2 b = points[i];
    const double len = distance(a, b);
    const double seg_end = seg_start + len;
    if (len > 0.0) {
      double target = static_cast<double>(k) * spacing;
      while (target < seg_end - tol) {
        out.push_back(a + (b - a) * ((target - seg_start) / len));
        target = static_cast<double>(++k) * spacing;
      }
      if (std::abs(target - seg_end) <= tol) {
        out.push_back(b);
        ++k;
      }
    }
    seg_start = seg_end;
  }
  if (!(out.back() == points.back())) out.push_back(points.back());
  return out;
}

LaneAnchor polyline_point_at(std::span<const Vec2> points, double s) {
  if (points.size() < 2) throw DegenerateError("polyline needs at least two points");
  const double total = polyline_length(points);
  if (!(total > 0.0)) throw DegenerateError("polyline has zero length");
  if (!std::isfinite(s) || s < -kArcLengthGrace || s > total + kArcLengthGrace) {
    throw RangeError(fmt::format("arc distance {:.3f} m outside polyline of length {:.3f} m", s, total));
  }
  LaneAnchor a;
  a.clamped = s < 0.0 || s > total;
  s = std::clamp(s, 0.0, total);
  a.arc_length_from_start = s;

  double acc = 0.0;
  for (size_t i = 1; i < points.size(); ++i) {
    const Vec2 seg = points[i] - points[i - 1];
    const double len = seg.norm();
    if (len <= 0.0) continue;
    if (s <= acc + len || i + 1 == points.size()) {
      const double f = std::clamp((s - acc) / len, 0.0, 1.0);
      a.position = f == 1.0 ? points[i] : points[i - 1] + seg * f;
      a.heading = normalize_angle(std::atan2(seg.y, seg.x));
      return a;
    }
    acc += len;
  }
  a.position = points.back();
  return a;
}

double distance_to_curve(const ControlQuad& c, Vec2 p, double* t_out) {
  constexpr int samples = 128;
  std::vector<double> d(samples + 1);
  for (int i = 0; i <= samples; ++i) d[static_cast<size_t>(i)] = distance(bezier_point(c, static_cast<double>(i) / samples), p);

  double best_t = 0.0;
  double best_d = std::numeric_limits<double>::infinity();
  auto consider = [&](double t) {
    const double dist = distance(bezier_point(c, t), p);
    if (dist < best_d) {
      best_d = dist;
      best_t = t;
    }
  };
  // Golden-section search in every bracket around a local minimum of the samples,
  // then a Newton polish from the result.
  constexpr double inv_phi = 0.6180339887498949;
  for (int i = 0; i <= samples; ++i) {
    const size_t k = static_cast<size_t>(i);
    const bool left_ok = i == 0 || d[k] <= d[k - 1];
    const bool right_ok = i == samples || d[k] <= d[k + 1];
    if (!left_ok || !right_ok) continue;
    double lo = std::max(0.0, (i - 1.0) / samples);
    double hi = std::min(1.0, (i + 1.0) / samples);
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = distance(bezier_point(c, x1), p), f2 = distance(bezier_point(c, x2), p);
    for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = distance(bezier_point(c, x1), p);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = distance(bezier_point(c, x2), p);
      }
    }
    const double t = 0.5 * (lo + hi);
    consider(t);
    consider(refine_projection(c, p, t));
    consider(static_cast<double>(i) / samples);
  }
  if (t_out) *t_out = best_t;
  return best_d;
}

BezierFit fit_bezier(std::span<const Vec2> points) {
  if (points.size() < 4) {
    throw DegenerateError(fmt::format("Bezier fit needs at least 4 points, got {}", points.size()));
  }
  const double total = polyline_length(points);
  if (!(total > 0.0)) throw DegenerateError("polyline has zero length");

  const size_t n = points.size();
  std::vector<double> chord(n), uniform(n);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) acc += distance(points[i - 1], points[i]);
    chord[i] = acc / total;
    uniform[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  }
  chord.back() = 1.0;

  BezierFit best = fit_with_parameters(points, chord);
  if (best.max_deviation > 1e-12) {
    // Samples taken at equal parameter steps are reproduced exactly from a
    // uniform start, which chord-length alone only approaches slowly.
    BezierFit alt = fit_with_parameters(points, uniform);
    if (alt.max_deviation < best.max_deviation) best = alt;
  }
  best.max_deviation = max_deviation(best.quad, points);
  return best;
}

Vec2 offset_point(const LaneAnchor& a, double lateral_offset) {
  return a.position + left_normal(a.heading) * lateral_offset;
}

}  // namespace scenaug
