#include <gtest/gtest.h>

#include <cmath>

#include "linerec/preprocess.hpp"
#include "linerec/rng.hpp"

using namespace linerec;

namespace {

Raster horizontal_bar(int h, int w, int row_from, int row_to) {
  Raster r(h, w);
  for (int y = row_from; y <= row_to; ++y)
    for (int x = 0; x < w; ++x) r.at(y, x) = 0.0;
  return r;
}

Trajectory line_trajectory(double x0, double y0, double x1, double y1, int n) {
  Trajectory t;
  Stroke s;
  for (int i = 0; i < n; ++i) {
    const double f = static_cast<double>(i) / (n - 1);
    s.pts.push_back({x0 + f * (x1 - x0), y0 + f * (y1 - y0)});
  }
  t.strokes.push_back(std::move(s));
  return t;
}

double arc_length(const Stroke& s) {
  double total = 0.0;
  for (size_t i = 1; i < s.pts.size(); ++i)
    total += std::hypot(s.pts[i][0] - s.pts[i - 1][0], s.pts[i][1] - s.pts[i - 1][1]);
  return total;
}

}  // namespace

TEST(Tilt, HorizontalLineIsZero) {
  Raster r = horizontal_bar(20, 60, 9, 11);
  const TiltEstimate est = tilt_estimate(r);
  EXPECT_FALSE(est.degenerate);
  EXPECT_NEAR(est.angle, 0.0, 1e-9);
}

TEST(Tilt, DiagonalPointsGiveQuarterPi) {
  Trajectory t = line_trajectory(0, 0, 10, 10, 50);
  const TiltEstimate est = tilt_estimate(t);
  EXPECT_FALSE(est.degenerate);
  EXPECT_NEAR(est.angle, M_PI / 4.0, 1e-12);
}

TEST(Tilt, DegenerateInputsFlagged) {
  Raster blank(10, 10);
  EXPECT_TRUE(tilt_estimate(blank).degenerate);
  EXPECT_EQ(tilt_estimate(blank).angle, 0.0);
  // vertical: a single-column stroke
  Trajectory v = line_trajectory(3, 0, 3, 9, 10);
  EXPECT_TRUE(tilt_estimate(v).degenerate);
}

TEST(Tilt, RecoversKnownRotation) {
  // draw a thick horizontal bar, rotate the raster by sampling, re-estimate
  Raster r = horizontal_bar(40, 160, 18, 21);
  Raster rot = deskew(r, -0.1);  // deskew by -a == rotate by +a
  const TiltEstimate est = tilt_estimate(rot);
  EXPECT_FALSE(est.degenerate);
  EXPECT_NEAR(est.angle, 0.1, 0.01);
}

TEST(Deskew, AngleZeroIsIdentity) {
  Rng rng(3);
  Raster r(16, 40);
  for (double& p : r.px) p = rng.uniform();
  Raster out = deskew(r, 0.0);
  for (size_t i = 0; i < r.px.size(); ++i) EXPECT_NEAR(out.px[i], r.px[i], 1e-6);
}

TEST(Deskew, TrajectoryRotationRoundTrip) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory t;
    Stroke s;
    const int n = rng.uniform_int(2, 12);
    for (int i = 0; i < n; ++i) s.pts.push_back({rng.uniform(0, 100), rng.uniform(0, 30)});
    t.strokes.push_back(s);
    const double a = rng.uniform(-M_PI / 4, M_PI / 4);
    Trajectory back = deskew(rotate_trajectory(t, a), a);
    for (size_t i = 0; i < s.pts.size(); ++i) {
      EXPECT_NEAR(back.strokes[0].pts[i][0], s.pts[i][0], 1e-9);
      EXPECT_NEAR(back.strokes[0].pts[i][1], s.pts[i][1], 1e-9);
    }
  }
}

TEST(Deskew, TiltAfterDeskewNearZero) {
  Raster r = horizontal_bar(48, 200, 22, 25);
  for (double a : {-0.15, 0.08, 0.2}) {
    Raster tilted = deskew(r, -a);
    Raster fixed = deskew(tilted, tilt_estimate(tilted).angle);
    EXPECT_NEAR(tilt_estimate(fixed).angle, 0.0, 5e-3);
  }
}

TEST(Trim, RemovesExactlyTheBlankRows) {
  Raster r(30, 50);
  for (int y = 10; y <= 17; ++y) r.at(y, 25) = 0.1;
  Raster out = trim_vertical(r);
  EXPECT_EQ(out.h, 8);
  EXPECT_EQ(out.w, 50);
  EXPECT_LT(out.at(0, 25), 0.5);
  EXPECT_LT(out.at(7, 25), 0.5);
}

TEST(Trim, FullInkUnchangedAndBlankRejected) {
  Raster full(5, 5, 0.0);
  Raster out = trim_vertical(full);
  EXPECT_EQ(out.h, 5);
  Raster blank(5, 5);
  EXPECT_THROW(trim_vertical(blank), std::invalid_argument);
}

TEST(Trim, HeightMatchesInkScanOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Raster r(40, 30);
    const int top = rng.uniform_int(0, 20);
    const int bot = rng.uniform_int(top, 39);
    for (int y = top; y <= bot; ++y) r.at(y, rng.uniform_int(0, 29)) = 0.0;
    EXPECT_EQ(trim_vertical(r).h, bot - top + 1);
  }
}

TEST(NormalizeHeight, ExactHalving) {
  Raster r(64, 200);
  Raster out = normalize_height(r, 32);
  EXPECT_EQ(out.h, 32);
  EXPECT_EQ(out.w, 100);
}

TEST(NormalizeHeight, AlreadyAtTarget) {
  Raster r(32, 77);
  Raster out = normalize_height(r, 32);
  EXPECT_EQ(out.w, 77);
}

TEST(NormalizeHeight, AspectPreservedWithinRounding) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = rng.uniform_int(8, 120), w = rng.uniform_int(8, 400);
    const int th = rng.uniform_int(8, 64);
    Raster out = normalize_height(Raster(h, w), th);
    EXPECT_EQ(out.h, th);
    // |w'·h − w·h'| ≤ h  (w' within half a pixel of the exact ratio)
    EXPECT_LE(std::abs(static_cast<double>(out.w) * h - static_cast<double>(w) * th),
              static_cast<double>(h));
  }
}

TEST(NormalizeHeight, TrajectoryScalesBothAxes) {
  Trajectory t = line_trajectory(10, 5, 30, 15, 21);  // height 10, width 20
  Trajectory out = normalize_height(t, 40);           // scale 4
  double x0, y0, x1, y1;
  out.bounds(x0, y0, x1, y1);
  EXPECT_NEAR(y1 - y0, 40.0, 1e-12);
  EXPECT_NEAR(x1 - x0, 80.0, 1e-12);
  EXPECT_NEAR(x0, 0.0, 1e-12);
  EXPECT_NEAR(y0, 0.0, 1e-12);
}

TEST(Resample, StraightStrokeElevenPoints) {
  Trajectory t = line_trajectory(0, 0, 10, 0, 2);
  Trajectory out = resample_equidistant(t, 1.0);
  ASSERT_EQ(out.strokes.size(), 1u);
  ASSERT_EQ(out.strokes[0].pts.size(), 11u);
  for (int i = 0; i <= 10; ++i) {
    EXPECT_NEAR(out.strokes[0].pts[static_cast<size_t>(i)][0], i, 1e-9);
    EXPECT_NEAR(out.strokes[0].pts[static_cast<size_t>(i)][1], 0.0, 1e-9);
  }
}

TEST(Resample, SinglePointStrokeUnchanged) {
  Trajectory t;
  Stroke s;
  s.pts.push_back({3.0, 4.0});
  t.strokes.push_back(s);
  Trajectory out = resample_equidistant(t, 1.0);
  ASSERT_EQ(out.strokes[0].pts.size(), 1u);
  EXPECT_EQ(out.strokes[0].pts[0][0], 3.0);
}

TEST(Resample, SpacingIsExactExceptFinalSegment) {
  Rng rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    // smooth-ish random polyline: gentle random walk
    Trajectory t;
    Stroke s;
    double x = 0, y = 0, heading = rng.uniform(-0.3, 0.3);
    s.pts.push_back({x, y});
    for (int i = 0; i < 40; ++i) {
      heading += rng.uniform(-0.25, 0.25);
      const double d = rng.uniform(0.5, 3.0);
      x += d * std::cos(heading);
      y += d * std::sin(heading);
      s.pts.push_back({x, y});
    }
    t.strokes.push_back(s);
    const double step = 1.0;
    Trajectory out = resample_equidistant(t, step);
    const auto& pts = out.strokes[0].pts;
    ASSERT_GE(pts.size(), 2u);
    for (size_t i = 1; i + 1 < pts.size(); ++i) {
      const double d = std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
      EXPECT_NEAR(d, step, 1e-6);
    }
    const size_t n = pts.size();
    const double dlast = std::hypot(pts[n - 1][0] - pts[n - 2][0], pts[n - 1][1] - pts[n - 2][1]);
    EXPECT_LE(dlast, step + 1e-6);
    // endpoints preserved
    EXPECT_EQ(pts.front()[0], s.pts.front()[0]);
    EXPECT_NEAR(pts.back()[0], s.pts.back()[0], 1e-9);
    EXPECT_NEAR(pts.back()[1], s.pts.back()[1], 1e-9);
  }
}

// On low-curvature strokes the resampled polyline keeps the original arc
// length to within one step. (Sharp corners legitimately shorten chords, so
// the property is scoped to smooth inputs.)
TEST(Resample, ArcLengthPreservedOnSmoothStrokes) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    Trajectory t;
    Stroke s;
    double x = 0, y = 0, heading = 0.0;
    s.pts.push_back({x, y});
    for (int i = 0; i < 60; ++i) {
      heading += rng.uniform(-0.1, 0.1);  // ≤ 0.1 rad per unit step
      x += std::cos(heading);
      y += std::sin(heading);
      s.pts.push_back({x, y});
    }
    t.strokes.push_back(s);
    const double step = 1.0;
    Trajectory out = resample_equidistant(t, step);
    EXPECT_NEAR(arc_length(out.strokes[0]), arc_length(t.strokes[0]), step);
  }
}
