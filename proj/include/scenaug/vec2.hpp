#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace scenaug {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  [[nodiscard]] double norm() const { return std::hypot(x, y); }
  [[nodiscard]] constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  [[nodiscard]] constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Unit vector pointing along `heading` (east = 0, counter-clockwise).
inline Vec2 direction(double heading) { return {std::cos(heading), std::sin(heading)}; }

/// Left-hand normal of `heading`.
inline Vec2 left_normal(double heading) { return {-std::sin(heading), std::cos(heading)}; }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Smallest absolute difference between two headings, in [0, pi].
inline double angle_between(double a, double b) { return std::abs(normalize_angle(a - b)); }

using Polyline = std::vector<Vec2>;

/// Control points of a cubic Bezier curve.
struct ControlQuad {
  Vec2 p0, p1, p2, p3;

  bool operator==(const ControlQuad&) const = default;
  [[nodiscard]] std::array<Vec2, 4> points() const { return {p0, p1, p2, p3}; }
};

/// Corners of an oriented rectangle centered at `center`, counter-clockwise,
/// starting at the front-left corner.
inline std::array<Vec2, 4> oriented_box(Vec2 center, double heading, double length, double width) {
  const Vec2 f = direction(heading) * (0.5 * length);
  const Vec2 l = left_normal(heading) * (0.5 * width);
  return {center + f + l, center - f + l, center - f - l, center + f - l};
}

}  // namespace scenaug
