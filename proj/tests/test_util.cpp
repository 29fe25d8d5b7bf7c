#include <gtest/gtest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "linerec/align.hpp"
#include "linerec/charbox.hpp"
#include "linerec/checkpoint.hpp"
#include "linerec/raster.hpp"
#include "linerec/rng.hpp"
#include "linerec/trajectory.hpp"

using namespace linerec;

namespace {

std::vector<int> ids(const std::string& s) {
  std::vector<int> out;
  for (char c : s) out.push_back(c - 'a');
  return out;
}

// brute-force edit distance by full recursion, memo-free (tiny inputs only)
int naive_dist(const std::vector<int>& a, const std::vector<int>& b, size_t i, size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  int best = naive_dist(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  best = std::min(best, naive_dist(a, b, i + 1, j) + 1);
  best = std::min(best, naive_dist(a, b, i, j + 1) + 1);
  return best;
}

}  // namespace

TEST(Align, IdenticalSequences) {
  const auto r = align_sequences(ids("abcde"), ids("abcde"));
  EXPECT_EQ(r.counts.distance(), 0);
  ASSERT_EQ(r.matches.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(r.matches[static_cast<size_t>(i)].first, i);
    EXPECT_EQ(r.matches[static_cast<size_t>(i)].second, i);
  }
}

TEST(Align, KittenSitting) {
  const auto r = align_sequences(ids("kitten"), ids("sitting"));
  EXPECT_EQ(r.counts.distance(), 3);
  EXPECT_EQ(r.matches.size(), 4u);  // i, t, t, n
}

TEST(Align, EmptyAndDisjoint) {
  EXPECT_EQ(align_sequences({}, ids("abc")).counts.ins, 3);
  EXPECT_EQ(align_sequences(ids("abc"), {}).counts.del, 3);
  const auto r = align_sequences(ids("aaa"), ids("bbb"));
  EXPECT_EQ(r.counts.sub, 3);
  EXPECT_TRUE(r.matches.empty());
}

TEST(Align, DistanceMatchesBruteForceAndCountsAddUp) {
  Rng rng(211);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> a, b;
    const int n = rng.uniform_int(0, 6), m = rng.uniform_int(0, 6);
    for (int i = 0; i < n; ++i) a.push_back(rng.uniform_int(0, 2));
    for (int i = 0; i < m; ++i) b.push_back(rng.uniform_int(0, 2));
    const auto r = align_sequences(a, b);
    EXPECT_EQ(r.counts.distance(), naive_dist(a, b, 0, 0));
    // alignment covers both sequences: matches+subs+dels span a, matches+subs+ins span b
    EXPECT_EQ(static_cast<long>(r.matches.size()) + r.counts.sub + r.counts.del,
              static_cast<long>(a.size()));
    EXPECT_EQ(static_cast<long>(r.matches.size()) + r.counts.sub + r.counts.ins,
              static_cast<long>(b.size()));
  }
}

TEST(Align, MatchesStrictlyIncreaseAndAreEqualSymbols) {
  Rng rng(223);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> a, b;
    for (int i = 0, n = rng.uniform_int(1, 10); i < n; ++i) a.push_back(rng.uniform_int(0, 3));
    for (int i = 0, m = rng.uniform_int(1, 10); i < m; ++i) b.push_back(rng.uniform_int(0, 3));
    const auto r = align_sequences(a, b);
    for (size_t k = 0; k < r.matches.size(); ++k) {
      const auto [i, j] = r.matches[k];
      EXPECT_EQ(a[static_cast<size_t>(i)], b[static_cast<size_t>(j)]);
      if (k > 0) {
        EXPECT_GT(i, r.matches[k - 1].first);
        EXPECT_GT(j, r.matches[k - 1].second);
      }
    }
  }
}

TEST(IntervalIou, Arithmetic) {
  EXPECT_DOUBLE_EQ(interval_iou(0, 10, 0, 10), 1.0);
  EXPECT_DOUBLE_EQ(interval_iou(0, 10, 20, 30), 0.0);
  // shifted by half the width: overlap w/2, union 3w/2
  EXPECT_NEAR(interval_iou(0, 10, 5, 15), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(interval_iou(5, 5, 0, 10), std::invalid_argument);
  CharBox a{0, 0, 10, 32, 1, 0.9};
  CharBox b{5, 0, 15, 32, 2, 0.8};
  EXPECT_NEAR(interval_iou(a, b), 1.0 / 3.0, 1e-15);
}

TEST(Checkpoint, ByteLevelLittleEndianFixture) {
  ByteWriter w;
  w.u32(0x01020304u);
  w.f64(1.5);
  w.str("ab");
  const std::string& b = w.buf;
  ASSERT_EQ(b.size(), 4u + 8u + 4u + 2u);
  // u32 little-endian
  EXPECT_EQ(static_cast<uint8_t>(b[0]), 0x04);
  EXPECT_EQ(static_cast<uint8_t>(b[3]), 0x01);
  // IEEE-754 double 1.5 = 0x3FF8000000000000, little-endian
  EXPECT_EQ(static_cast<uint8_t>(b[4]), 0x00);
  EXPECT_EQ(static_cast<uint8_t>(b[10]), 0xF8);
  EXPECT_EQ(static_cast<uint8_t>(b[11]), 0x3F);
  ByteReader r(b);
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.f64(), 1.5);
  EXPECT_EQ(r.str(), "ab");
  EXPECT_TRUE(r.at_end());
}

TEST(Checkpoint, ParamsRoundTripBitwise) {
  Rng rng(227);
  Graph g;
  g.param("a", Tensor({3, 4}));
  g.param("b", Tensor({7}));
  for (size_t i = 0; i < g.n_params(); ++i)
    for (double& v : g.param_at(i).v) v = rng.uniform(-3, 3);
  const std::string path = "/tmp/linerec_test_ckpt.bin";
  save_params(g, "{\"arch\":\"t\"}", path);

  Graph g2;
  g2.param("a", Tensor({3, 4}));
  g2.param("b", Tensor({7}));
  const std::string meta = load_params(g2, path);
  EXPECT_EQ(meta, "{\"arch\":\"t\"}");
  for (size_t i = 0; i < g.n_params(); ++i)
    for (size_t k = 0; k < g.param_at(i).v.size(); ++k)
      EXPECT_EQ(g2.param_at(i).v[k], g.param_at(i).v[k]);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsMismatchesAndTruncation) {
  Graph g;
  g.param("a", Tensor({2, 2}));
  const std::string path = "/tmp/linerec_test_ckpt2.bin";
  save_params(g, "", path);

  Graph wrong_shape;
  wrong_shape.param("a", Tensor({2, 3}));
  EXPECT_THROW(load_params(wrong_shape, path), std::runtime_error);

  Graph wrong_name;
  wrong_name.param("z", Tensor({2, 2}));
  EXPECT_THROW(load_params(wrong_name, path), std::runtime_error);

  // truncated file
  ByteReader full = ByteReader::from_file(path);
  ByteWriter trunc;
  trunc.buf = full.buf.substr(0, full.buf.size() - 5);
  trunc.to_file(path);
  Graph ok;
  ok.param("a", Tensor({2, 2}));
  EXPECT_THROW(load_params(ok, path), std::runtime_error);

  // bad magic
  ByteWriter bad;
  bad.buf = full.buf;
  bad.buf[0] = 'X';
  bad.to_file(path);
  EXPECT_THROW(load_params(ok, path), std::runtime_error);
  std::remove(path.c_str());
}

TEST(RasterIO, PgmRoundTrip) {
  Rng rng(229);
  Raster r(9, 13);
  for (double& p : r.px) p = rng.uniform();
  const std::string path = "/tmp/linerec_test_img.pgm";
  save_pgm(r, path);
  Raster back = load_pgm(path);
  ASSERT_EQ(back.h, 9);
  ASSERT_EQ(back.w, 13);
  for (size_t i = 0; i < r.px.size(); ++i) EXPECT_NEAR(back.px[i], r.px[i], 0.5 / 255.0 + 1e-9);
  // quantized values survive a second trip exactly
  save_pgm(back, path);
  Raster again = load_pgm(path);
  for (size_t i = 0; i < back.px.size(); ++i) EXPECT_EQ(again.px[i], back.px[i]);
  std::remove(path.c_str());
}

TEST(TrajectoryIO, JsonRoundTrip) {
  Trajectory t;
  Stroke s1, s2;
  s1.pts = {{0.0, 1.5}, {2.25, 3.0}};
  s2.pts = {{-1.0, 0.125}};
  t.strokes = {s1, s2};
  const std::string path = "/tmp/linerec_test_traj.json";
  save_trajectory(t, path);
  Trajectory back = load_trajectory(path);
  ASSERT_EQ(back.strokes.size(), 2u);
  ASSERT_EQ(back.strokes[0].pts.size(), 2u);
  EXPECT_EQ(back.strokes[0].pts[1][0], 2.25);
  EXPECT_EQ(back.strokes[1].pts[0][1], 0.125);
  std::remove(path.c_str());
}
