#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "linerec/charbox.hpp"
#include "linerec/glyphs.hpp"
#include "linerec/lm.hpp"
#include "linerec/preprocess.hpp"
#include "linerec/raster.hpp"
#include "linerec/rng.hpp"
#include "linerec/trajectory.hpp"

// Text-line synthesis. One layout engine drives both modalities: glyphs are
// perturbed, placed left to right with jittered spacing and baseline, then
// either stamped as ink onto a raster or emitted as pen strokes. Ground-truth
// boxes are exact: ink bounds (intensity below the ink threshold) for rasters,
// padded point extents for trajectories. Everything is a pure function of
// (text, seed, params).

namespace linerec {

struct SynthParams {
  int height = 32;
  double glyph_h_lo = 0.55, glyph_h_hi = 0.80;  // glyph height / line height
  double aspect_lo = 0.70, aspect_hi = 1.00;    // glyph width / glyph height
  double space_lo = -0.10, space_hi = 0.40;     // gap as a fraction of glyph width
  double margin_lo = 2.0, margin_hi = 6.0;      // px each side
  double baseline_jitter = 0.04;                // fraction of height
  double shear_lo = -0.06, shear_hi = 0.06;
  double rotate_max = 0.04;                     // radians
  double point_jitter = 0.15;                   // px
  double thick_lo = 0.9, thick_hi = 1.3;        // pen radius, px
  double ink_lo = 0.00, ink_hi = 0.15;          // stroke core intensity
  // distortions for the harder domain
  double bg_lo = 1.0, bg_hi = 1.0;   // background shading range; < 1 enables it
  double wave_amp = 0.0;             // baseline wave amplitude, fraction of height
  double wave_freq = 0.0;            // wave cycles per 100 px
  double speckle = 0.0;              // per-pixel clutter probability (always above threshold)

  static SynthParams clean() { return SynthParams{}; }

  // Rougher "writer" domain: slanted, wavy, shaded paper, pen clutter. Kept
  // above the ink threshold so box ground truth stays exact.
  static SynthParams writer() { return writer(1.0); }

  // Interpolated writer domain: 0 is the clean preset, 1 the full writer
  // preset, values above 1 extrapolate. The shading floor, stroke intensity,
  // and clutter rate are clamped so ink-threshold box extraction stays exact
  // at any strength.
  static SynthParams writer(double strength) {
    if (strength < 0.0) throw std::invalid_argument("SynthParams::writer: negative strength");
    const SynthParams a;  // clean
    SynthParams p;
    auto lerp = [&](double c, double w) { return c + strength * (w - c); };
    p.glyph_h_lo = lerp(a.glyph_h_lo, 0.45);
    p.glyph_h_hi = lerp(a.glyph_h_hi, 0.85);
    p.aspect_lo = lerp(a.aspect_lo, 0.55);
    p.aspect_hi = lerp(a.aspect_hi, 1.05);
    p.space_lo = lerp(a.space_lo, -0.05);
    p.space_hi = lerp(a.space_hi, 0.55);
    p.baseline_jitter = lerp(a.baseline_jitter, 0.10);
    p.shear_lo = lerp(a.shear_lo, -0.22);
    p.shear_hi = lerp(a.shear_hi, 0.28);
    p.rotate_max = lerp(a.rotate_max, 0.10);
    p.point_jitter = lerp(a.point_jitter, 0.50);
    p.thick_lo = std::max(0.6, lerp(a.thick_lo, 0.80));
    p.thick_hi = lerp(a.thick_hi, 1.90);
    p.ink_lo = 0.0;
    p.ink_hi = std::min(0.45, lerp(a.ink_hi, 0.25));
    p.bg_lo = strength == 0.0 ? 1.0 : std::max(0.58, lerp(1.0, 0.62));
    p.bg_hi = strength == 0.0 ? 1.0 : std::max(p.bg_lo, lerp(1.0, 0.95));
    p.wave_amp = lerp(a.wave_amp, 0.08);
    p.wave_freq = lerp(a.wave_freq, 0.8);
    p.speckle = std::min(0.02, lerp(a.speckle, 0.004));
    return p;
  }
};

struct TextLineSample {
  std::string id;
  std::vector<int> transcript;
  std::vector<CharBox> boxes;  // one per character, in order; score 1
  Raster raster;
  Trajectory traj;
  bool is_online = false;
};

namespace detail {

struct PlacedGlyph {
  std::vector<Stroke> strokes;  // canvas coordinates
  double radius = 1.0;
  double ink = 0.0;
};

// Lays the glyphs out on the line; strokes come back in canvas coordinates.
// Returns the canvas width.
inline int layout_line(const std::vector<int>& text, Rng& rng, const SynthParams& p,
                       std::vector<PlacedGlyph>& out) {
  if (text.empty()) throw std::invalid_argument("synth: text must not be empty");
  const double H = p.height;
  const double margin_l = rng.uniform(p.margin_lo, p.margin_hi);
  const double margin_r = rng.uniform(p.margin_lo, p.margin_hi);
  const double wave_phase = rng.uniform(0.0, 2.0 * M_PI);
  double cursor = margin_l;
  double right = cursor;
  out.clear();
  for (size_t i = 0; i < text.size(); ++i) {
    const double gh = H * rng.uniform(p.glyph_h_lo, p.glyph_h_hi);
    const double gw = gh * rng.uniform(p.aspect_lo, p.aspect_hi);
    GlyphPerturb gp;
    gp.scale_x = gw;
    gp.scale_y = gh;
    gp.shear = rng.uniform(p.shear_lo, p.shear_hi);
    gp.rotate = rng.uniform(-p.rotate_max, p.rotate_max);
    gp.jitter = p.point_jitter;
    PlacedGlyph pg;
    pg.strokes = glyph_instance(text[i], gp, rng);
    pg.radius = rng.uniform(p.thick_lo, p.thick_hi);
    pg.ink = rng.uniform(p.ink_lo, p.ink_hi);

    double oy = 0.5 * (H - gh) + H * p.baseline_jitter * rng.uniform(-1.0, 1.0);
    if (p.wave_amp > 0.0)
      oy += p.wave_amp * H *
            std::sin(2.0 * M_PI * p.wave_freq * (cursor + 0.5 * gw) / 100.0 + wave_phase);
    const double slack = pg.radius + 1.5;
    oy = std::clamp(oy, slack, H - gh - slack);

    for (auto& s : pg.strokes)
      for (auto& pt : s.pts) pt = {pt[0] + cursor, pt[1] + oy};
    for (const auto& s : pg.strokes)
      for (const auto& pt : s.pts) right = std::max(right, pt[0]);
    out.push_back(std::move(pg));

    const double gap = gw * rng.uniform(p.space_lo, p.space_hi);
    cursor += gw + gap;
  }
  return std::max(p.height, static_cast<int>(std::ceil(right + margin_r)));
}

// Exact bounds of pixels this glyph inks (intensity < threshold) when stamped
// alone on white, computed on a private scratch canvas and clipped to the
// frame. Background shading and clutter never dip below the threshold, so the
// bounds are exact on the final canvas too.
inline CharBox ink_bounds(const PlacedGlyph& pg, int canvas_h, int canvas_w) {
  double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
  for (const auto& s : pg.strokes)
    for (const auto& pt : s.pts) {
      x0 = std::min(x0, pt[0]);
      y0 = std::min(y0, pt[1]);
      x1 = std::max(x1, pt[0]);
      y1 = std::max(y1, pt[1]);
    }
  const double pad = pg.radius + 1.5;
  const int ox = static_cast<int>(std::floor(x0 - pad));
  const int oy = static_cast<int>(std::floor(y0 - pad));
  Raster scratch(static_cast<int>(std::ceil(y1 + pad)) - oy + 1,
                 static_cast<int>(std::ceil(x1 + pad)) - ox + 1, 1.0);
  draw_strokes(scratch, pg.strokes, -ox, -oy, pg.radius, pg.ink);
  int ix0 = scratch.w, iy0 = scratch.h, ix1 = -1, iy1 = -1;
  for (int y = 0; y < scratch.h; ++y)
    for (int x = 0; x < scratch.w; ++x)
      if (scratch.at(y, x) < kInkThreshold) {
        ix0 = std::min(ix0, x);
        iy0 = std::min(iy0, y);
        ix1 = std::max(ix1, x);
        iy1 = std::max(iy1, y);
      }
  if (ix1 < 0) throw std::logic_error("synth: glyph stamped no ink");
  CharBox b;
  b.x_min = std::clamp<double>(ix0 + ox, 0, canvas_w);
  b.y_min = std::clamp<double>(iy0 + oy, 0, canvas_h);
  b.x_max = std::clamp<double>(ix1 + ox + 1, 0, canvas_w);
  b.y_max = std::clamp<double>(iy1 + oy + 1, 0, canvas_h);
  return b;
}

}  // namespace detail

inline TextLineSample synth_offline_line(const std::vector<int>& text, uint64_t seed,
                                         const SynthParams& p = SynthParams::clean()) {
  Rng rng(seed);
  std::vector<detail::PlacedGlyph> glyphs;
  const int W = detail::layout_line(text, rng, p, glyphs);
  Raster canvas(p.height, W, 1.0);
  if (p.bg_lo < 1.0) {
    const double fx = rng.uniform(0.01, 0.05), fy = rng.uniform(0.03, 0.12);
    const double px = rng.uniform(0.0, 2.0 * M_PI), py = rng.uniform(0.0, 2.0 * M_PI);
    for (int y = 0; y < canvas.h; ++y)
      for (int x = 0; x < canvas.w; ++x) {
        const double s = 0.5 + 0.25 * std::sin(fx * x + px) + 0.25 * std::sin(fy * y + py);
        canvas.px[static_cast<size_t>(y) * canvas.w + x] = p.bg_lo + (p.bg_hi - p.bg_lo) * s;
      }
  }
  TextLineSample out;
  out.transcript = text;
  for (size_t i = 0; i < glyphs.size(); ++i) {
    CharBox b = detail::ink_bounds(glyphs[i], canvas.h, canvas.w);
    b.class_id = text[i];
    b.score = 1.0;
    out.boxes.push_back(b);
    draw_strokes(canvas, glyphs[i].strokes, 0.0, 0.0, glyphs[i].radius, glyphs[i].ink);
  }
  if (p.speckle > 0.0)
    for (double& v : canvas.px)
      if (rng.uniform() < p.speckle) v = std::min(v, rng.uniform(0.55, 0.90));
  out.raster = std::move(canvas);
  return out;
}

// Online variant: the same layout emitted as pen strokes. Boxes are point
// extents padded by a nominal 1 px pen radius (so single-bar glyphs keep a
// usable width), clipped to the frame.
inline TextLineSample synth_online_line(const std::vector<int>& text, uint64_t seed,
                                        const SynthParams& p = SynthParams::clean()) {
  Rng rng(seed);
  std::vector<detail::PlacedGlyph> glyphs;
  const int W = detail::layout_line(text, rng, p, glyphs);
  TextLineSample out;
  out.is_online = true;
  out.transcript = text;
  for (size_t i = 0; i < glyphs.size(); ++i) {
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    for (const auto& s : glyphs[i].strokes) {
      for (const auto& pt : s.pts) {
        x0 = std::min(x0, pt[0]);
        y0 = std::min(y0, pt[1]);
        x1 = std::max(x1, pt[0]);
        y1 = std::max(y1, pt[1]);
      }
      out.traj.strokes.push_back(s);
    }
    CharBox b;
    b.x_min = std::clamp<double>(x0 - 1.0, 0, W);
    b.y_min = std::clamp<double>(y0 - 1.0, 0, p.height);
    b.x_max = std::clamp<double>(x1 + 1.0, 0, W);
    b.y_max = std::clamp<double>(y1 + 1.0, 0, p.height);
    b.class_id = text[static_cast<int>(i)];
    b.score = 1.0;
    out.boxes.push_back(b);
  }
  return out;
}

// Transcript with bigram structure: every class favors a few successors, the
// way real text mixes dominant transitions with a long tail. Uniform text has
// no context for a sequence prior to exploit; datasets meant to stand in for
// natural writing should come from this sampler instead of sample_text.
inline std::vector<int> chain_text(Rng& rng, int n_cls, int len_lo, int len_hi) {
  if (n_cls < 1 || len_lo < 1 || len_hi < len_lo)
    throw std::invalid_argument("chain_text: bad length or class range");
  const int len = rng.uniform_int(len_lo, len_hi);
  std::vector<int> text;
  text.reserve(static_cast<size_t>(len));
  int cur = rng.uniform_int(0, n_cls - 1);
  text.push_back(cur);
  while (static_cast<int>(text.size()) < len) {
    const double u = rng.uniform();
    int nxt;
    if (u < 0.45) nxt = (cur + 1) % n_cls;
    else if (u < 0.70) nxt = (cur + 2) % n_cls;
    else if (u < 0.85) nxt = (cur + 5) % n_cls;
    else nxt = rng.uniform_int(0, n_cls - 1);
    text.push_back(nxt);
    cur = nxt;
  }
  return text;
}

// Draws a transcript: uniform classes, or language-model driven when a model
// is supplied (falling back to uniform if a context cannot be extended).
inline std::vector<int> sample_text(Rng& rng, int n_cls, int len_lo, int len_hi,
                                    const NGramModel* lm = nullptr) {
  if (n_cls < 1 || len_lo < 1 || len_hi < len_lo)
    throw std::invalid_argument("sample_text: bad length or class range");
  const int len = rng.uniform_int(len_lo, len_hi);
  std::vector<int> text;
  text.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) {
    int c = -1;
    if (lm) {
      std::vector<int> ctx;
      if (text.size() >= 2) ctx = {text[text.size() - 2], text.back()};
      else if (text.size() == 1) ctx = {lm->bos(), text.back()};
      else ctx = {lm->bos(), lm->bos()};
      c = lm->sample_next(ctx, rng, /*exclude_eos=*/true);
    }
    if (c < 0) c = rng.uniform_int(0, n_cls - 1);
    text.push_back(c);
  }
  return text;
}

}  // namespace linerec
