#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "linerec/raster.hpp"
#include "linerec/rng.hpp"
#include "linerec/trajectory.hpp"

// A bank of 20 synthetic "characters": stroke patterns defined as polylines in
// the unit square (x right, y down, like the raster frame). Class c is written
// as the letter 'a' + c in transcripts and corpora.

namespace linerec {

constexpr int kGlyphClasses = 20;

inline char class_label(int c) {
  if (c < 0 || c > 25) throw std::invalid_argument("class_label: class out of range");
  return static_cast<char>('a' + c);
}

inline int label_class(char ch) {
  if (ch < 'a' || ch > 'z') throw std::invalid_argument("label_class: bad label character");
  return ch - 'a';
}

inline std::string transcript_string(const std::vector<int>& t) {
  std::string s;
  s.reserve(t.size());
  for (int c : t) s.push_back(class_label(c));
  return s;
}

inline std::vector<int> transcript_classes(const std::string& s) {
  std::vector<int> t;
  t.reserve(s.size());
  for (char ch : s) t.push_back(label_class(ch));
  return t;
}

// Canonical strokes for one class, in [0,1]^2.
inline std::vector<Stroke> glyph_strokes(int c) {
  auto S = [](std::initializer_list<Point> pts) { return Stroke{std::vector<Point>(pts)}; };
  switch (c) {
    case 0:  // vertical bar
      return {S({{0.50, 0.05}, {0.50, 0.95}})};
    case 1:  // horizontal bar
      return {S({{0.05, 0.50}, {0.95, 0.50}})};
    case 2:  // backslash diagonal
      return {S({{0.10, 0.05}, {0.90, 0.95}})};
    case 3:  // slash diagonal
      return {S({{0.10, 0.95}, {0.90, 0.05}})};
    case 4:  // X
      return {S({{0.10, 0.05}, {0.90, 0.95}}), S({{0.90, 0.05}, {0.10, 0.95}})};
    case 5:  // V
      return {S({{0.10, 0.10}, {0.50, 0.90}, {0.90, 0.10}})};
    case 6:  // caret
      return {S({{0.10, 0.90}, {0.50, 0.10}, {0.90, 0.90}})};
    case 7:  // L
      return {S({{0.20, 0.05}, {0.20, 0.90}, {0.90, 0.90}})};
    case 8:  // top-left corner
      return {S({{0.20, 0.90}, {0.20, 0.10}, {0.90, 0.10}})};
    case 9:  // T
      return {S({{0.10, 0.10}, {0.90, 0.10}}), S({{0.50, 0.10}, {0.50, 0.90}})};
    case 10:  // plus
      return {S({{0.50, 0.10}, {0.50, 0.90}}), S({{0.10, 0.50}, {0.90, 0.50}})};
    case 11:  // square
      return {S({{0.15, 0.12}, {0.85, 0.12}, {0.85, 0.88}, {0.15, 0.88}, {0.15, 0.12}})};
    case 12:  // triangle
      return {S({{0.50, 0.08}, {0.90, 0.90}, {0.10, 0.90}, {0.50, 0.08}})};
    case 13: {  // circle as a closed 12-gon
      Stroke s;
      for (int k = 0; k <= 12; ++k) {
        const double a = 2.0 * M_PI * k / 12.0;
        s.pts.push_back({0.5 + 0.40 * std::cos(a), 0.5 + 0.40 * std::sin(a)});
      }
      return {s};
    }
    case 14:  // U
      return {S({{0.15, 0.10}, {0.15, 0.72}, {0.32, 0.90}, {0.68, 0.90}, {0.85, 0.72},
                 {0.85, 0.10}})};
    case 15:  // arch
      return {S({{0.15, 0.90}, {0.15, 0.28}, {0.32, 0.10}, {0.68, 0.10}, {0.85, 0.28},
                 {0.85, 0.90}})};
    case 16:  // Z
      return {S({{0.10, 0.10}, {0.90, 0.10}, {0.10, 0.90}, {0.90, 0.90}})};
    case 17:  // S
      return {S({{0.85, 0.14}, {0.20, 0.14}, {0.20, 0.50}, {0.80, 0.50}, {0.80, 0.86},
                 {0.15, 0.86}})};
    case 18:  // H
      return {S({{0.15, 0.05}, {0.15, 0.95}}), S({{0.85, 0.05}, {0.85, 0.95}}),
              S({{0.15, 0.50}, {0.85, 0.50}})};
    case 19:  // double bar
      return {S({{0.33, 0.05}, {0.33, 0.95}}), S({{0.67, 0.05}, {0.67, 0.95}})};
    default:
      throw std::invalid_argument("glyph_strokes: class " + std::to_string(c) +
                                  " out of range [0," + std::to_string(kGlyphClasses - 1) + ")");
  }
}

// Per-instance geometric perturbation applied to the unit-square strokes.
struct GlyphPerturb {
  double scale_x = 1.0, scale_y = 1.0;  // pixels per unit
  double shear = 0.0;                   // x += shear * (0.5 - y_unit) * scale_y
  double rotate = 0.0;                  // radians about the glyph center
  double jitter = 0.0;                  // per-point uniform, in pixels
};

// Transforms canonical strokes into pixel coordinates with the glyph's
// top-left corner near the origin; used by both the raster and the
// trajectory writers so the two modalities stay aligned.
inline std::vector<Stroke> glyph_instance(int c, const GlyphPerturb& p, Rng& rng) {
  std::vector<Stroke> out = glyph_strokes(c);
  const double cr = std::cos(p.rotate), sr = std::sin(p.rotate);
  for (auto& s : out) {
    for (auto& pt : s.pts) {
      double u = pt[0] - 0.5, v = pt[1] - 0.5;
      const double ru = cr * u - sr * v, rv = sr * u + cr * v;
      double x = (ru + 0.5) * p.scale_x + p.shear * (-rv) * p.scale_y;
      double y = (rv + 0.5) * p.scale_y;
      x += rng.uniform(-p.jitter, p.jitter);
      y += rng.uniform(-p.jitter, p.jitter);
      pt = {x, y};
    }
  }
  return out;
}

// Stamps a soft disk of the given radius; ink accumulates via min().
inline void stamp_dot(Raster& r, double cx, double cy, double radius, double ink) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
  const int y1 = std::min(r.h - 1, static_cast<int>(std::ceil(cy + radius + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
  const int x1 = std::min(r.w - 1, static_cast<int>(std::ceil(cx + radius + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      double val;
      if (d <= radius - 0.5) {
        val = ink;
      } else if (d >= radius + 0.5) {
        continue;
      } else {
        const double t = (d - (radius - 0.5));  // 0..1 across the soft rim
        val = ink + t * (1.0 - ink);
      }
      double& px = r.px[static_cast<size_t>(y) * r.w + x];
      if (val < px) px = val;
    }
  }
}

// Draws pixel-space strokes onto a raster by stamping dots along each segment.
inline void draw_strokes(Raster& r, const std::vector<Stroke>& strokes, double ox, double oy,
                         double radius, double ink) {
  for (const auto& s : strokes) {
    if (s.pts.empty()) continue;
    stamp_dot(r, ox + s.pts[0][0], oy + s.pts[0][1], radius, ink);
    for (size_t i = 1; i < s.pts.size(); ++i) {
      const double ax = ox + s.pts[i - 1][0], ay = oy + s.pts[i - 1][1];
      const double bx = ox + s.pts[i][0], by = oy + s.pts[i][1];
      const double len = std::hypot(bx - ax, by - ay);
      const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.3)));
      for (int k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        stamp_dot(r, ax + t * (bx - ax), ay + t * (by - ay), radius, ink);
      }
    }
  }
}

}  // namespace linerec
