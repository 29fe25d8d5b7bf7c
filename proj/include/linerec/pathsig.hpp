#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "linerec/checkpoint.hpp"
#include "linerec/trajectory.hpp"

// Truncated path signatures (order 2) of pen trajectories, rendered as
// image-like multichannel maps. Channel layout is frozen as
// [S0, S1x, S1y, S2xx, S2xy, S2yx, S2yy].

namespace linerec {

inline constexpr int kSigChannels = 7;

// rough per-channel magnitude bounds for a 9-point unit-step window; used to
// scale map values into a network-friendly range
inline constexpr std::array<double, kSigChannels> kSigScale = {1, 8, 8, 32, 32, 32, 32};

// Iterated-integral signature of a piecewise-linear path, truncated at order
// 2. Per straight segment with displacement d: S1 = d, S2 = d (x) d / 2; the
// running signature extends by Chen's identity
//   S2_new = S2 + S2_seg + S1 (x) d.
inline std::array<double, kSigChannels> signature_segment(const std::vector<Point>& pts) {
  if (pts.empty()) throw std::invalid_argument("signature_segment: no points");
  std::array<double, kSigChannels> s{1, 0, 0, 0, 0, 0, 0};
  for (size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i][0] - pts[i - 1][0];
    const double dy = pts[i][1] - pts[i - 1][1];
    const double s1x = s[1], s1y = s[2];
    s[3] += 0.5 * dx * dx + s1x * dx;
    s[4] += 0.5 * dx * dy + s1x * dy;
    s[5] += 0.5 * dy * dx + s1y * dx;
    s[6] += 0.5 * dy * dy + s1y * dy;
    s[1] += dx;
    s[2] += dy;
  }
  return s;
}

struct SignatureMap {
  int channels = kSigChannels;
  int h = 0, w = 0;
  std::vector<double> v;  // h * w * channels, channel-minor

  SignatureMap() = default;
  SignatureMap(int height, int width)
      : h(height), w(width), v(static_cast<size_t>(height) * width * kSigChannels, 0.0) {
    if (height < 1 || width < 1) throw std::invalid_argument("SignatureMap: extents must be >= 1");
  }

  double& at(int y, int x, int c) { return v[(static_cast<size_t>(y) * w + x) * channels + c]; }
  double at(int y, int x, int c) const { return v[(static_cast<size_t>(y) * w + x) * channels + c]; }
};

// Sliding-window signature features: each trajectory point contributes the
// signature of the sub-path formed by up to `window` consecutive points of
// its own stroke centered on it (pen-ups never join). The expected input is
// preprocessed: deskewed, height-normalized to `height`, resampled to unit
// spacing. Points map to their nearest pixel; later strokes/points win ties.
inline SignatureMap render_signature_map(const Trajectory& t, int height, int window = 9) {
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("render_signature_map: window must be odd and positive");
  if (t.total_points() == 0) throw std::invalid_argument("render_signature_map: empty trajectory");
  double x0, y0, x1, y1;
  t.bounds(x0, y0, x1, y1);
  const int width = std::max(1, static_cast<int>(std::lround(x1)) + 1);
  SignatureMap map(height, width);
  const int half = window / 2;
  std::vector<Point> win;
  for (const auto& s : t.strokes) {
    const int n = static_cast<int>(s.pts.size());
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - half);
      const int hi = std::min(n - 1, i + half);
      win.assign(s.pts.begin() + lo, s.pts.begin() + hi + 1);
      const auto sig = signature_segment(win);
      const int px = std::clamp(static_cast<int>(std::lround(s.pts[static_cast<size_t>(i)][0])), 0, width - 1);
      const int py = std::clamp(static_cast<int>(std::lround(s.pts[static_cast<size_t>(i)][1])), 0, height - 1);
      for (int c = 0; c < kSigChannels; ++c) map.at(py, px, c) = sig[static_cast<size_t>(c)];
    }
  }
  return map;
}

inline void save_signature_map(const SignatureMap& m, const std::string& path) {
  ByteWriter w;
  w.magic("LRSM");
  w.u32(1);
  w.u32(static_cast<uint32_t>(m.channels));
  w.u32(static_cast<uint32_t>(m.h));
  w.u32(static_cast<uint32_t>(m.w));
  for (double v : m.v) w.f64(v);
  w.to_file(path);
}

inline SignatureMap load_signature_map(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("LRSM");
  if (r.u32() != 1) throw std::runtime_error("unsupported signature map version in " + path);
  const int ch = static_cast<int>(r.u32());
  if (ch != kSigChannels)
    throw std::runtime_error("signature map channel count mismatch in " + path);
  const int h = static_cast<int>(r.u32());
  const int w = static_cast<int>(r.u32());
  SignatureMap m(h, w);
  for (double& v : m.v) v = r.f64();
  return m;
}

}  // namespace linerec
