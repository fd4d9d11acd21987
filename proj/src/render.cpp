#include "scenaug/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <optional>

#include <fmt/format.h>
#include <png.h>

#include "scenaug/errors.hpp"
#include "text_util.hpp"

namespace scenaug {

namespace {

using detail::f3;

std::string points_attr(const ViewTransform& view, std::span<const Vec2> world) {
  std::string out;
  for (size_t i = 0; i < world.size(); ++i) {
    const Vec2 p = view.to_image(world[i]);
    if (i) out += ' ';
    out += f3(p.x) + "," + f3(p.y);
  }
  return out;
}

int area_layer(AreaKind k) {
  switch (k) {
    case AreaKind::Drivable: return 0;
    case AreaKind::Carpark: return 1;
    case AreaKind::Other: return 2;
    case AreaKind::Walkway: return 3;
  }
  return 2;
}

// --- minimal SVG reader for the subset written above ------------------------

struct Element {
  std::string name;
  std::map<std::string, std::string> attrs;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

double parse_number(std::string_view s) {
  const std::string tmp(detail::trim(s));
  if (tmp.empty()) throw RasterError("empty number in SVG");
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) throw RasterError(fmt::format("bad number '{}' in SVG", tmp));
  return v;
}

std::optional<Rgb> parse_color(const std::string& s) {
  if (s == "none") return std::nullopt;
  if (s.size() != 7 || s[0] != '#') throw RasterError(fmt::format("unsupported color '{}'", s));
  Rgb c;
  auto hex = [&](size_t i) {
    const std::string part = s.substr(i, 2);
    if (part.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
      throw RasterError(fmt::format("bad color '{}'", s));
    }
    return static_cast<std::uint8_t>(std::strtol(part.c_str(), nullptr, 16));
  };
  c.r = hex(1);
  c.g = hex(3);
  c.b = hex(5);
  return c;
}

std::vector<Vec2> parse_points(const std::string& s) {
  std::vector<Vec2> pts;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    if (i >= s.size()) break;
    size_t end = s.find(' ', i);
    if (end == std::string::npos) end = s.size();
    const std::string_view pair(s.data() + i, end - i);
    const size_t comma = pair.find(',');
    if (comma == std::string_view::npos) throw RasterError("point without comma in SVG");
    pts.push_back({parse_number(pair.substr(0, comma)), parse_number(pair.substr(comma + 1))});
    i = end;
  }
  return pts;
}

std::vector<Element> parse_svg(std::string_view svg) {
  std::vector<Element> out;
  bool svg_closed = false;
  size_t i = 0;
  while (true) {
    i = svg.find('<', i);
    if (i == std::string_view::npos) break;
    if (svg.substr(i, 2) == "<?") {
      const size_t e = svg.find("?>", i);
      if (e == std::string_view::npos) throw RasterError("unterminated processing instruction");
      i = e + 2;
      continue;
    }
    if (svg.substr(i, 4) == "<!--") {
      const size_t e = svg.find("-->", i);
      if (e == std::string_view::npos) throw RasterError("unterminated comment");
      i = e + 3;
      continue;
    }
    const size_t close = svg.find('>', i);
    if (close == std::string_view::npos) throw RasterError("unterminated tag");
    std::string_view tag = svg.substr(i + 1, close - i - 1);
    i = close + 1;
    if (!tag.empty() && tag.front() == '/') {
      if (detail::trim(tag.substr(1)) == "svg") svg_closed = true;
      continue;
    }
    if (!tag.empty() && tag.back() == '/') tag.remove_suffix(1);
    Element el;
    size_t p = 0;
    while (p < tag.size() && !std::isspace(static_cast<unsigned char>(tag[p]))) ++p;
    el.name = std::string(tag.substr(0, p));
    if (el.name.empty() || !std::isalpha(static_cast<unsigned char>(el.name[0]))) {
      throw RasterError("malformed element name in SVG");
    }
    while (p < tag.size()) {
      while (p < tag.size() && std::isspace(static_cast<unsigned char>(tag[p]))) ++p;
      if (p >= tag.size()) break;
      const size_t eq = tag.find('=', p);
      if (eq == std::string_view::npos || eq + 1 >= tag.size() || tag[eq + 1] != '"') {
        throw RasterError(fmt::format("malformed attribute in <{}>", el.name));
      }
      const size_t end = tag.find('"', eq + 2);
      if (end == std::string_view::npos) throw RasterError(fmt::format("unterminated attribute in <{}>", el.name));
      el.attrs[std::string(detail::trim(tag.substr(p, eq - p)))] = std::string(tag.substr(eq + 2, end - eq - 2));
      p = end + 1;
    }
    out.push_back(std::move(el));
  }
  if (out.empty() || out.front().name != "svg") throw RasterError("document is not an SVG image");
  if (!svg_closed) throw RasterError("SVG document is truncated");
  return out;
}

class Canvas {
 public:
  Canvas(int size, Rgb fill) : size_(size), pixels_(static_cast<size_t>(size) * static_cast<size_t>(size) * 3) {
    for (size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }

  // Even-odd scanline fill sampled at pixel centers.
  void fill_polygon(std::span<const Vec2> poly, Rgb c) {
    if (poly.size() < 3) return;
    double min_y = poly[0].y, max_y = poly[0].y;
    for (const Vec2& p : poly) {
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y1 = std::min(size_ - 1, static_cast<int>(std::floor(max_y - 0.5)));
    std::vector<double> xs;
    for (int py = y0; py <= y1; ++py) {
      const double y = py + 0.5;
      xs.clear();
      for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Vec2 a = poly[i], b = poly[j];
        if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
      std::sort(xs.begin(), xs.end());
      for (size_t k = 0; k + 1 < xs.size(); k += 2) {
        const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
        const int x1 = std::min(size_ - 1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
        for (int px = x0; px <= x1; ++px) set(px, py, c);
      }
    }
  }

  void stroke_segment(Vec2 a, Vec2 b, double width, Rgb c) {
    const Vec2 d = b - a;
    const double len = d.norm();
    if (len <= 0.0) return;
    const Vec2 n = Vec2{-d.y, d.x} * (0.5 * std::max(width, 1.0) / len);
    const std::array<Vec2, 4> quad{a + n, b + n, b - n, a - n};
    fill_polygon(quad, c);
  }

  RgbImage take() && { return {size_, size_, std::move(pixels_)}; }

 private:
  void set(int x, int y, Rgb c) {
    const size_t i = (static_cast<size_t>(y) * static_cast<size_t>(size_) + static_cast<size_t>(x)) * 3;
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  int size_;
  std::vector<std::uint8_t> pixels_;
};

const std::string& attr(const Element& el, const std::string& key) {
  auto it = el.attrs.find(key);
  if (it == el.attrs.end()) throw RasterError(fmt::format("<{}> lacks attribute '{}'", el.name, key));
  return it->second;
}

std::string attr_or(const Element& el, const std::string& key, const std::string& fallback) {
  auto it = el.attrs.find(key);
  return it == el.attrs.end() ? fallback : it->second;
}

}  // namespace

void RenderStyle::validate() const {
  if (!(grid_spacing > 0.0)) throw ValidationError("grid spacing must be positive");
  if (!(extent > 0.0)) throw ValidationError("render extent must be positive");
  if (!(pixels_per_meter > 0.0)) throw ValidationError("render scale must be positive");
}

RenderResult render_bev(const Scenario& s, const std::set<std::string>& modified_ids, const RenderStyle& style) {
  style.validate();
  const AgentState& ego = s.ego();

  RenderResult result;
  ViewTransform& view = result.view;
  view.center = ego.center;
  view.scale = style.pixels_per_meter;
  view.extent = style.extent;
  for (const auto& a : s.agents) {
    if (!modified_ids.contains(a.id)) continue;
    const Vec2 d = a.center - ego.center;
    view.extent = std::max(view.extent, std::max(std::abs(d.x), std::abs(d.y)) + style.margin);
  }
  const double size = view.size();
  const double e = view.extent;

  std::string& svg = result.svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\" "
      "data-extent=\"{1}\" data-center-x=\"{2}\" data-center-y=\"{3}\" data-scale=\"{4}\">\n",
      f3(size), f3(e), f3(view.center.x), f3(view.center.y), f3(view.scale));
  svg += fmt::format("<rect class=\"background\" x=\"0\" y=\"0\" width=\"{0}\" height=\"{0}\" fill=\"{1}\"/>\n",
                     f3(size), style.background);

  svg += "<g id=\"areas\">\n";
  std::vector<const Area*> areas;
  for (const auto& a : s.areas) areas.push_back(&a);
  std::stable_sort(areas.begin(), areas.end(),
                   [](const Area* x, const Area* y) { return area_layer(x->kind) < area_layer(y->kind); });
  for (const Area* a : areas) {
    const std::string& fill = a->kind == AreaKind::Drivable  ? style.drivable_fill
                              : a->kind == AreaKind::Walkway ? style.walkway_fill
                              : a->kind == AreaKind::Carpark ? style.carpark_fill
                                                             : style.other_area_fill;
    svg += fmt::format("<polygon class=\"area {}\" data-id=\"{}\" points=\"{}\" fill=\"{}\"/>\n",
                       detail::to_lower(to_string(a->kind)), a->id, points_attr(view, a->boundary), fill);
  }
  svg += "</g>\n<g id=\"lanes\">\n";
  const double lane_px = std::max(1.0, 0.2 * view.scale);
  for (const auto& l : s.lanes) {
    svg += fmt::format("<polyline class=\"lane\" data-id=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
                       l.id, points_attr(view, sample_geometry(l.geometry)), style.lane_color, f3(lane_px));
  }
  for (const auto& c : s.connectors) {
    svg += fmt::format("<polyline class=\"connector\" data-id=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
                       c.id, points_attr(view, sample_geometry(c.geometry)), style.lane_color, f3(lane_px));
  }

  svg += "</g>\n<g id=\"grid\">\n";
  const long lines = static_cast<long>(std::floor(e / style.grid_spacing));
  // Grid lines sit at world multiples of the spacing.
  const double x_first = std::ceil((view.center.x - e) / style.grid_spacing) * style.grid_spacing;
  const double y_first = std::ceil((view.center.y - e) / style.grid_spacing) * style.grid_spacing;
  for (long i = 0; i <= 2 * lines + 1; ++i) {
    const double wx = x_first + static_cast<double>(i) * style.grid_spacing;
    if (wx > view.center.x + e) break;
    const double ix = view.to_image({wx, 0.0}).x;
    svg += fmt::format("<line class=\"grid\" x1=\"{0}\" y1=\"0.000\" x2=\"{0}\" y2=\"{1}\" stroke=\"{2}\" stroke-width=\"1.000\"/>\n",
                       f3(ix), f3(size), style.grid_color);
  }
  for (long i = 0; i <= 2 * lines + 1; ++i) {
    const double wy = y_first + static_cast<double>(i) * style.grid_spacing;
    if (wy > view.center.y + e) break;
    const double iy = view.to_image({0.0, wy}).y;
    svg += fmt::format("<line class=\"grid\" x1=\"0.000\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"{2}\" stroke-width=\"1.000\"/>\n",
                       f3(iy), f3(size), style.grid_color);
  }

  svg += "</g>\n<g id=\"agents\">\n";
  auto draw_agent = [&](const AgentState& a, std::string_view cls, const std::string& fill) {
    const Vec2 d = a.center - view.center;
    if (std::abs(d.x) > e || std::abs(d.y) > e) {
      ++result.clipped_agents;
      return;
    }
    const auto box = oriented_box(a.center, a.heading, a.length, a.width);
    svg += fmt::format("<polygon class=\"agent {}\" data-id=\"{}\" data-type=\"{}\" points=\"{}\" fill=\"{}\"/>\n", cls,
                       a.id, to_string(a.type), points_attr(view, box), fill);
    const Vec2 nose = a.center + direction(a.heading) * (0.5 * a.length);
    const Vec2 from = view.to_image(a.center), to = view.to_image(nose);
    svg += fmt::format("<line class=\"heading\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ffffff\" stroke-width=\"1.000\"/>\n",
                       f3(from.x), f3(from.y), f3(to.x), f3(to.y));
  };
  // Ego last so it is never hidden by overlapping agents.
  for (const auto& a : s.agents) {
    if (a.type == AgentType::EgoVehicle) continue;
    const bool modified = modified_ids.contains(a.id);
    draw_agent(a, modified ? "modified" : "other", modified ? style.modified_agent_color : style.other_agent_color);
  }
  draw_agent(ego, "ego", style.ego_color);
  svg += "</g>\n</svg>\n";
  return result;
}

std::vector<std::uint8_t> rasterize(std::string_view svg, int pixels) {
  if (pixels < 64 || pixels > 4096) throw RasterError(fmt::format("raster size {} outside [64, 4096]", pixels));
  const auto elements = parse_svg(svg);

  const Element& root = elements.front();
  const std::string& vb = attr(root, "viewBox");
  std::vector<double> box;
  for (size_t i = 0; i < vb.size();) {
    while (i < vb.size() && vb[i] == ' ') ++i;
    if (i >= vb.size()) break;
    size_t end = vb.find(' ', i);
    if (end == std::string::npos) end = vb.size();
    box.push_back(parse_number(std::string_view(vb).substr(i, end - i)));
    i = end;
  }
  if (box.size() != 4 || !(box[2] > 0.0)) throw RasterError("SVG viewBox must hold four numbers");
  const double k = pixels / box[2];
  auto map = [&](Vec2 p) { return Vec2{(p.x - box[0]) * k, (p.y - box[1]) * k}; };

  Canvas canvas(pixels, Rgb{255, 255, 255});
  for (size_t i = 1; i < elements.size(); ++i) {
    const Element& el = elements[i];
    if (el.name == "rect") {
      const auto fill = parse_color(attr_or(el, "fill", "#000000"));
      const double x = parse_number(attr(el, "x")), y = parse_number(attr(el, "y"));
      const double w = parse_number(attr(el, "width")), h = parse_number(attr(el, "height"));
      const std::array<Vec2, 4> q{map({x, y}), map({x + w, y}), map({x + w, y + h}), map({x, y + h})};
      if (fill) canvas.fill_polygon(q, *fill);
    } else if (el.name == "polygon") {
      auto pts = parse_points(attr(el, "points"));
      for (Vec2& p : pts) p = map(p);
      if (const auto fill = parse_color(attr_or(el, "fill", "#000000"))) canvas.fill_polygon(pts, *fill);
    } else if (el.name == "polyline" || el.name == "line") {
      std::vector<Vec2> pts;
      if (el.name == "line") {
        pts = {{parse_number(attr(el, "x1")), parse_number(attr(el, "y1"))},
               {parse_number(attr(el, "x2")), parse_number(attr(el, "y2"))}};
      } else {
        pts = parse_points(attr(el, "points"));
      }
      const auto stroke = parse_color(attr_or(el, "stroke", "none"));
      if (!stroke) continue;
      const double width = parse_number(attr_or(el, "stroke-width", "1")) * k;
      for (size_t j = 1; j < pts.size(); ++j) canvas.stroke_segment(map(pts[j - 1]), map(pts[j]), width, *stroke);
    }
  }
  return encode_png(std::move(canvas).take());
}

namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
  std::span<const std::uint8_t> data;
  size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->data.size()) png_error(png, "truncated PNG");
  std::memcpy(out, cur->data.data() + cur->offset, length);
  cur->offset += length;
}

[[noreturn]] void png_throw(png_structp, png_const_charp msg) { throw RasterError(fmt::format("PNG error: {}", msg)); }
void png_ignore_warning(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, &png_throw, &png_ignore_warning);
  if (!png) throw RasterError("cannot create PNG writer");
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, &png_write_to_vector, &png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(img.rgb.data() + static_cast<size_t>(y) * static_cast<size_t>(img.width) * 3));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw RasterError("not a PNG image");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, &png_throw, &png_ignore_warning);
  if (!png) throw RasterError("cannot create PNG reader");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{bytes, 0};
  RgbImage img;
  try {
    png_set_read_fn(png, &cursor, &png_read_from_span);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != static_cast<size_t>(img.width) * 3) throw RasterError("unexpected PNG layout");
    img.rgb.resize(static_cast<size_t>(img.width) * static_cast<size_t>(img.height) * 3);
    for (int y = 0; y < img.height; ++y) {
      png_read_row(png, img.rgb.data() + static_cast<size_t>(y) * static_cast<size_t>(img.width) * 3, nullptr);
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace scenaug
