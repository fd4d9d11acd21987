#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "scenaug/errors.hpp"
#include "scenaug/geometry.hpp"
#include "scenaug/lane_tool.hpp"
#include "support.hpp"

using namespace scenaug;

namespace {

// Independent references --------------------------------------------------

double speed(const ControlQuad& c, double t) {
  // Derivative from the power-basis coefficients, not the library's Bernstein form.
  const Vec2 a = (c.p1 - c.p0) * 3.0;
  const Vec2 b = (c.p2 - c.p1 * 2.0 + c.p0) * 6.0;
  const Vec2 d = (c.p3 - c.p2 * 3.0 + c.p1 * 3.0 - c.p0) * 3.0;
  return (a + b * t + d * (t * t)).norm();
}

double simpson(const ControlQuad& c, double a, double b, double fa, double fm, double fb, double whole, double eps,
               int depth) {
  const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = speed(c, lm), frm = speed(c, rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
  return simpson(c, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(c, m, b, fm, frm, fb, right, eps / 2.0, depth - 1);
}

double simpson_length(const ControlQuad& c) {
  const double fa = speed(c, 0.0), fm = speed(c, 0.5), fb = speed(c, 1.0);
  return simpson(c, 0.0, 1.0, fa, fm, fb, (fa + 4.0 * fm + fb) / 6.0, 1e-12, 50);
}

Vec2 de_casteljau(const ControlQuad& c, double t) {
  auto lerp = [t](Vec2 a, Vec2 b) { return a + (b - a) * t; };
  const Vec2 a = lerp(c.p0, c.p1), b = lerp(c.p1, c.p2), d = lerp(c.p2, c.p3);
  const Vec2 e = lerp(a, b), f = lerp(b, d);
  return lerp(e, f);
}

struct DenseTable {
  std::vector<Vec2> pts;
  std::vector<double> cum;
  explicit DenseTable(const ControlQuad& c, int n = 10000) {
    for (int i = 0; i <= n; ++i) pts.push_back(de_casteljau(c, static_cast<double>(i) / n));
    cum.push_back(0.0);
    for (int i = 1; i <= n; ++i) cum.push_back(cum.back() + distance(pts[i - 1], pts[i]));
  }
  Vec2 at(double s) const {
    size_t lo = 0, hi = cum.size() - 1;
    while (hi - lo > 1) {
      const size_t mid = (lo + hi) / 2;
      (cum[mid] <= s ? lo : hi) = mid;
    }
    const double u = (s - cum[lo]) / (cum[hi] - cum[lo]);
    return pts[lo] + (pts[hi] - pts[lo]) * u;
  }
};

ControlQuad random_quad(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  return {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
}

const ControlQuad kArch{{0, 0}, {0, 10}, {10, 10}, {10, 0}};
const ControlQuad kEast30{{0, 0}, {10, 0}, {20, 0}, {30, 0}};

}  // namespace

TEST_CASE("bezier_point interpolates endpoints and matches de Casteljau") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const ControlQuad c = random_quad(rng);
    CHECK(bezier_point(c, 0.0) == c.p0);
    CHECK(bezier_point(c, 1.0) == c.p3);
    const Vec2 p = bezier_point(c, 0.37), q = de_casteljau(c, 0.37);
    CHECK(distance(p, q) < 1e-9);
  }
  CHECK(bezier_point(kEast30, 0.5) == Vec2{15.0, 0.0});
  const Vec2 mid = bezier_point(kArch, 0.5);
  CHECK(mid.x == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(mid.y == doctest::Approx(7.5).epsilon(1e-12));
  CHECK_THROWS_AS(bezier_point(kArch, 1.5), DomainError);
  CHECK_THROWS_AS(bezier_point(kArch, -0.01), DomainError);
}

TEST_CASE("bezier_heading follows the tangent") {
  CHECK(bezier_heading(kEast30, 0.3) == 0.0);
  CHECK(bezier_heading({{0, 0}, {0, 10}, {0, 20}, {0, 30}}, 0.5) == doctest::Approx(std::numbers::pi / 2));
  CHECK(std::abs(bezier_heading(kArch, 0.5)) < 1e-12);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const ControlQuad c = random_quad(rng);
    for (double t : {0.1, 0.4, 0.8}) {
      if (speed(c, t) < 1.0) continue;
      const double h = 1e-6;
      const Vec2 d = de_casteljau(c, t + h) - de_casteljau(c, t - h);
      CHECK(angle_between(bezier_heading(c, t), std::atan2(d.y, d.x)) < 1e-5);
    }
  }
  // Vanishing derivative at the start: falls back to an interior tangent.
  CHECK(bezier_heading({{0, 0}, {0, 0}, {30, 0}, {30, 0}}, 0.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(validate_quad({{1, 1}, {1, 1}, {1, 1}, {1, 1}}), DegenerateError);
}

TEST_CASE("arc_length agrees with the adaptive Simpson reference") {
  CHECK(arc_length(kEast30) == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(arc_length({{0, 0}, {0, 0}, {30, 0}, {30, 0}}) == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(std::abs(arc_length(kArch) - simpson_length(kArch)) / simpson_length(kArch) < 1e-6);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const ControlQuad c = random_quad(rng);
    const double ref = simpson_length(c);
    CHECK(std::abs(arc_length(c) - ref) / ref < 1e-6);
  }
}

TEST_CASE("point_at_arc_length inverts the arc length") {
  const LaneAnchor a = point_at_arc_length(kEast30, 21.4);
  CHECK(a.position == Vec2{21.4, 0.0});
  CHECK(a.heading == 0.0);
  CHECK_FALSE(a.clamped);

  const LaneAnchor start = point_at_arc_length(kArch, 0.0);
  CHECK(start.position == kArch.p0);
  CHECK(start.heading == doctest::Approx(std::numbers::pi / 2));

  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const ControlQuad c = random_quad(rng);
    const ArcLengthTable table(c);
    const DenseTable dense(c);
    double prev = -1.0;
    for (int k = 0; k < 10; ++k) {
      const double s = table.total() * (k + 0.5) / 10.0;
      const LaneAnchor got = point_at_arc_length(table, s);
      CHECK(distance(got.position, dense.at(s)) < 1e-4);
      CHECK(std::abs(got.arc_length_from_start - s) < 1e-4);
      CHECK(got.arc_length_from_start > prev);
      prev = got.arc_length_from_start;
    }
  }
}

TEST_CASE("out-of-range distances clamp within the grace band and fail beyond it") {
  const LaneAnchor over = point_at_arc_length(kEast30, 30.3);
  CHECK(over.clamped);
  CHECK(over.position == kEast30.p3);
  const LaneAnchor under = point_at_arc_length(kEast30, -0.4);
  CHECK(under.clamped);
  CHECK(under.position == kEast30.p0);
  CHECK_THROWS_AS(point_at_arc_length(kEast30, 30.6), RangeError);
  CHECK_THROWS_AS(point_at_arc_length(kEast30, -1.0), RangeError);
}

TEST_CASE("resample_polyline spacing") {
  const Polyline straight{{0, 0}, {12, 0}};
  const Polyline r = resample_polyline(straight, 5.0);
  REQUIRE(r.size() == 4);
  CHECK(r[1] == Vec2{5, 0});
  CHECK(r[2] == Vec2{10, 0});
  CHECK(r[3] == Vec2{12, 0});

  const Polyline even{{0, 0}, {5, 0}, {10, 0}, {15, 0}};
  CHECK(resample_polyline(even, 5.0) == even);

  const Polyline ell{{0, 0}, {10, 0}, {10, 10}};
  const Polyline l5 = resample_polyline(ell, 5.0);
  REQUIRE(l5.size() == 5);
  CHECK(l5[2] == Vec2{10, 0});
  CHECK(distance(l5[3], Vec2{10, 5}) < 1e-12);

  CHECK_THROWS_AS(resample_polyline(Polyline{{1, 1}, {1, 1}}, 5.0), DegenerateError);
}

TEST_CASE("fit_bezier") {
  Polyline line;
  for (int i = 0; i <= 8; ++i) line.push_back({2.5 * i, 1.0 * i});
  const BezierFit lf = fit_bezier(line);
  CHECK(lf.max_deviation < 1e-9);
  CHECK(lf.quad.p0 == line.front());
  CHECK(lf.quad.p3 == line.back());

  std::mt19937_64 rng(9);
  for (int n = 0; n < 20; ++n) {
    const ControlQuad c = random_quad(rng);
    Polyline samples;
    for (int i = 0; i <= 20; ++i) samples.push_back(de_casteljau(c, i / 20.0));
    const BezierFit f = fit_bezier(samples);
    for (const Vec2& p : samples) CHECK(distance_to_curve(f.quad, p) < 1e-6);
  }

  // Quarter circle of radius 20 sampled every 5 m; deviation measured against the true circle.
  Polyline arc;
  const double r = 20.0, len = r * std::numbers::pi / 2;
  for (double s = 0.0; s < len; s += 5.0) arc.push_back({r * std::cos(s / r), r * std::sin(s / r)});
  arc.push_back({0.0, r});
  const BezierFit cf = fit_bezier(arc);
  double worst = 0.0;
  for (int i = 0; i <= 400; ++i) worst = std::max(worst, std::abs(bezier_point(cf.quad, i / 400.0).norm() - r));
  CHECK(worst < 0.2);
  CHECK(cf.max_deviation < 0.2);

  CHECK_THROWS_AS(fit_bezier(Polyline{{0, 0}, {1, 0}, {2, 0}}), DegenerateError);
}

TEST_CASE("lane_point_tool on the single-lane fixture") {
  const Scenario s = test::load("single_lane");
  const LaneAnchor a = lane_point_tool(s, "Lane1", 21.4);
  CHECK(a.position == Vec2{21.4, 0.0});
  CHECK(a.heading == 0.0);
  CHECK(lane_point_tool(s, "Lane1", 0.0).position == Vec2{0.0, 0.0});
  CHECK_THROWS_AS(lane_point_tool(s, "Lane99", 1.0), UnknownId);
  CHECK_THROWS_AS(lane_point_tool(s, "Lane1", 500.0), RangeError);

  const Scenario x = test::load("intersection_bezier");
  CHECK(lane_point_tool(x, "C_left", 0.0).position == Vec2{-8.0, -1.75});
}

TEST_CASE("offset_point is left-positive") {
  const LaneAnchor east{{21.4, 0.0}, 0.0, 21.4, false};
  CHECK(offset_point(east, 1.0) == Vec2{21.4, 1.0});
  CHECK(offset_point(east, 0.0) == east.position);
  const LaneAnchor north{{3.0, 4.0}, std::numbers::pi / 2, 0.0, false};
  const Vec2 p = offset_point(north, 2.0);
  CHECK(p.x == doctest::Approx(1.0));
  CHECK(p.y == doctest::Approx(4.0));
}
