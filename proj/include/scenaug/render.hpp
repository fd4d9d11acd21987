#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "scenaug/scenario.hpp"

namespace scenaug {

struct RenderStyle {
  std::string ego_color = "#ff0000";
  std::string modified_agent_color = "#0000ff";
  std::string other_agent_color = "#404040";
  std::string drivable_fill = "#808080";
  std::string walkway_fill = "#808000";
  std::string carpark_fill = "#a8a8a8";
  std::string other_area_fill = "#c8c8c8";
  std::string lane_color = "#e6e6e6";
  std::string grid_color = "#c0c0c0";
  std::string background = "#ffffff";
  double grid_spacing = 5.0;     ///< m
  double extent = 60.0;          ///< half-width of the square canvas around ego, m
  double margin = 10.0;          ///< added around modified agents outside the extent, m
  double pixels_per_meter = 4.0;

  void validate() const;
};

/// North-up, ego-centered affine map from world meters to image units (y grows downward).
struct ViewTransform {
  Vec2 center;
  double extent = 60.0;
  double scale = 4.0;

  [[nodiscard]] Vec2 to_image(Vec2 world) const {
    return {(world.x - center.x + extent) * scale, (extent - (world.y - center.y)) * scale};
  }
  [[nodiscard]] Vec2 to_world(Vec2 image) const {
    return {image.x / scale - extent + center.x, extent - image.y / scale + center.y};
  }
  [[nodiscard]] double size() const { return 2.0 * extent * scale; }
};

struct RenderResult {
  std::string svg;
  ViewTransform view;
  int clipped_agents = 0;
};

RenderResult render_bev(const Scenario& s, const std::set<std::string>& modified_ids, const RenderStyle& style = {});

/// Square PNG of an SVG produced by render_bev. Throws RasterError for
/// malformed input or a size outside [64, 4096].
std::vector<std::uint8_t> rasterize(std::string_view svg, int pixels);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  ///< row-major, 3 bytes per pixel

  [[nodiscard]] std::array<std::uint8_t, 3> at(int x, int y) const {
    const size_t i = (static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

std::vector<std::uint8_t> encode_png(const RgbImage& img);
RgbImage decode_png(std::span<const std::uint8_t> png);

}  // namespace scenaug
