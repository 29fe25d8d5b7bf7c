#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "linerec/raster.hpp"
#include "linerec/trajectory.hpp"

// Text-line normalization: tilt regression, rotation about the ink centroid,
// vertical trimming, height normalization, and equal-distance resampling of
// pen trajectories.

namespace linerec {

inline constexpr double kInkThreshold = 0.5;  // intensity below this counts as ink

struct TiltEstimate {
  double angle = 0.0;  // radians; arctan of the least-squares slope
  bool degenerate = false;  // no ink / vertical: angle forced to 0
};

namespace detail {
inline TiltEstimate tilt_from_moments(double n, double sx, double sy, double sxx, double sxy) {
  TiltEstimate out;
  if (n < 2) {
    out.degenerate = true;
    return out;
  }
  const double var_x = sxx - sx * sx / n;
  if (var_x <= 1e-12) {
    out.degenerate = true;
    return out;
  }
  const double slope = (sxy - sx * sy / n) / var_x;
  out.angle = std::atan(slope);
  return out;
}
}  // namespace detail

inline TiltEstimate tilt_estimate(const Raster& r, double ink_threshold = kInkThreshold) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      if (r.at(y, x) < ink_threshold) {
        n += 1;
        sx += x;
        sy += y;
        sxx += static_cast<double>(x) * x;
        sxy += static_cast<double>(x) * y;
      }
  return detail::tilt_from_moments(n, sx, sy, sxx, sxy);
}

inline TiltEstimate tilt_estimate(const Trajectory& t) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& s : t.strokes)
    for (const auto& p : s.pts) {
      n += 1;
      sx += p[0];
      sy += p[1];
      sxx += p[0] * p[0];
      sxy += p[0] * p[1];
    }
  return detail::tilt_from_moments(n, sx, sy, sxx, sxy);
}

// Rotates by -angle about the ink centroid, resampling bilinearly onto a
// white canvas of the same extents.
inline Raster deskew(const Raster& r, double angle, double ink_threshold = kInkThreshold) {
  if (!std::isfinite(angle)) throw std::invalid_argument("deskew: non-finite angle");
  double n = 0, cx = 0, cy = 0;
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      if (r.at(y, x) < ink_threshold) {
        n += 1;
        cx += x;
        cy += y;
      }
  if (n > 0) {
    cx /= n;
    cy /= n;
  } else {
    cx = 0.5 * (r.w - 1);
    cy = 0.5 * (r.h - 1);
  }
  // output pixel q maps back to input at R(+angle) (q - c) + c
  const double ca = std::cos(angle), sa = std::sin(angle);
  Raster out(r.h, r.w);
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sxp = cx + ca * dx - sa * dy;
      const double syp = cy + sa * dx + ca * dy;
      out.at(y, x) = r.sample(syp, sxp);
    }
  return out;
}

inline Trajectory deskew(const Trajectory& t, double angle) {
  if (!std::isfinite(angle)) throw std::invalid_argument("deskew: non-finite angle");
  double n = 0, cx = 0, cy = 0;
  for (const auto& s : t.strokes)
    for (const auto& p : s.pts) {
      n += 1;
      cx += p[0];
      cy += p[1];
    }
  if (n == 0) return t;
  cx /= n;
  cy /= n;
  const double ca = std::cos(-angle), sa = std::sin(-angle);
  Trajectory out = t;
  for (auto& s : out.strokes)
    for (auto& p : s.pts) {
      const double dx = p[0] - cx, dy = p[1] - cy;
      p[0] = cx + ca * dx - sa * dy;
      p[1] = cy + sa * dx + ca * dy;
    }
  return out;
}

// test helper semantics: rotation by +angle about the point centroid, the
// inverse of deskew(t, angle)
inline Trajectory rotate_trajectory(const Trajectory& t, double angle) {
  return deskew(t, -angle);
}

inline Raster trim_vertical(const Raster& r, double ink_threshold = kInkThreshold) {
  int top = -1, bottom = -1;
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      if (r.at(y, x) < ink_threshold) {
        if (top < 0) top = y;
        bottom = y;
        break;  // next row once this one is known inked
      }
  if (top < 0) throw std::invalid_argument("trim_vertical: blank raster");
  Raster out(bottom - top + 1, r.w);
  for (int y = top; y <= bottom; ++y)
    for (int x = 0; x < r.w; ++x) out.at(y - top, x) = r.at(y, x);
  return out;
}

inline Raster normalize_height(const Raster& r, int target_h) {
  if (target_h < 1) throw std::invalid_argument("normalize_height: target must be >= 1");
  const double s = static_cast<double>(target_h) / r.h;
  const int target_w = std::max(1, static_cast<int>(std::lround(r.w * s)));
  Raster out(target_h, target_w);
  for (int y = 0; y < target_h; ++y)
    for (int x = 0; x < target_w; ++x)
      out.at(y, x) = r.sample((y + 0.5) / s - 0.5, (x + 0.5) / s - 0.5);
  return out;
}

// Scales both axes so the vertical extent becomes target_h and shifts the
// bounding box corner to the origin. A flat trajectory keeps scale 1.
inline Trajectory normalize_height(const Trajectory& t, int target_h) {
  if (target_h < 1) throw std::invalid_argument("normalize_height: target must be >= 1");
  double x0, y0, x1, y1;
  t.bounds(x0, y0, x1, y1);
  const double s = (y1 - y0) > 1e-12 ? target_h / (y1 - y0) : 1.0;
  Trajectory out = t;
  for (auto& st : out.strokes)
    for (auto& p : st.pts) {
      p[0] = (p[0] - x0) * s;
      p[1] = (p[1] - y0) * s;
    }
  return out;
}

// Per stroke: walk the polyline and emit points at exact Euclidean distance
// `step` from the previous emitted point (circle-polyline intersection). The
// stroke's first and last points are always kept.
inline Trajectory resample_equidistant(const Trajectory& t, double step) {
  if (!(step > 0)) throw std::invalid_argument("resample_equidistant: step must be positive");
  Trajectory out;
  for (const auto& s : t.strokes) {
    Stroke ns;
    if (s.pts.empty()) continue;
    ns.pts.push_back(s.pts.front());
    if (s.pts.size() > 1) {
      Point q = s.pts.front();  // last emitted
      size_t seg = 0;           // current segment index: s.pts[seg] -> s.pts[seg+1]
      double tcur = 0.0;        // param position within current segment
      while (seg + 1 < s.pts.size()) {
        const Point& a = s.pts[seg];
        const Point& b = s.pts[seg + 1];
        const double dx = b[0] - a[0], dy = b[1] - a[1];
        const double fx = a[0] - q[0], fy = a[1] - q[1];
        const double A = dx * dx + dy * dy;
        const double B = 2.0 * (fx * dx + fy * dy);
        const double C = fx * fx + fy * fy - step * step;
        double thit = -1.0;
        if (A > 0) {
          const double disc = B * B - 4.0 * A * C;
          if (disc >= 0) {
            const double sq = std::sqrt(disc);
            // exit crossing: larger root; take it if it lies ahead in segment
            const double t2 = (-B + sq) / (2.0 * A);
            if (t2 >= tcur - 1e-12 && t2 <= 1.0) thit = std::max(t2, tcur);
          }
        }
        if (thit >= 0) {
          q = {a[0] + thit * dx, a[1] + thit * dy};
          ns.pts.push_back(q);
          tcur = thit;
          if (tcur >= 1.0) {
            ++seg;
            tcur = 0.0;
          }
        } else {
          ++seg;
          tcur = 0.0;
        }
      }
      const Point& last = s.pts.back();
      const double dlx = last[0] - ns.pts.back()[0], dly = last[1] - ns.pts.back()[1];
      if (std::sqrt(dlx * dlx + dly * dly) > 1e-9 * step) ns.pts.push_back(last);
    }
    out.strokes.push_back(std::move(ns));
  }
  return out;
}

}  // namespace linerec
