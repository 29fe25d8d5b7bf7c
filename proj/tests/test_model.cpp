#include <gtest/gtest.h>

#include <cstdio>
#include <vector>

#include "linerec/model.hpp"
#include "linerec/synth.hpp"
#include "linerec/weaksup.hpp"

using namespace linerec;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.height = 8;
  c.n_cls = 3;
  c.c1 = 2;
  c.c2 = 3;
  c.c3 = 4;
  c.c4 = 5;
  c.head_ch = 3;
  c.cls_ch = 4;
  c.ctx_hidden = 2;
  c.init_seed = 9;
  return c;
}

Raster noisy_line(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Raster r(h, w, 1.0);
  for (double& v : r.px) v = rng.uniform() < 0.2 ? rng.uniform(0.0, 0.4) : 1.0;
  return r;
}

}  // namespace

TEST(Model, GridShapesFollowCeilRule) {
  ModelConfig cfg;
  cfg.n_cls = 20;
  Model m(cfg);
  EXPECT_EQ(m.padded_width(1), 8);
  EXPECT_EQ(m.padded_width(8), 8);
  EXPECT_EQ(m.padded_width(9), 16);
  const auto g100 = m.forward(noisy_line(32, 100, 1), false);
  EXPECT_EQ(g100.geom.w_enc, 13);  // ceil(100 / 8)
  EXPECT_EQ(g100.geom.width_in, 100);
  EXPECT_EQ(g100.p_loc.size(), 13u);
  EXPECT_EQ(g100.p_bbox.size(), 52u);
  EXPECT_EQ(g100.p_cls.size(), 13u * 20u);
  EXPECT_FALSE(g100.has_ctx);
  const auto g64 = m.forward(noisy_line(32, 64, 1), false);
  const auto g128 = m.forward(noisy_line(32, 128, 1), false);
  EXPECT_EQ(g64.geom.w_enc, 8);
  EXPECT_EQ(g128.geom.w_enc, 16);  // doubling a multiple of 8 doubles the grid
}

TEST(Model, OutputsAreProbabilities) {
  Model m(tiny_config());
  const auto grid = m.forward(noisy_line(8, 40, 2), true);
  ASSERT_TRUE(grid.has_ctx);
  for (int n = 0; n < grid.geom.w_enc; ++n) {
    EXPECT_GT(grid.loc(n), 0.0);
    EXPECT_LT(grid.loc(n), 1.0);
    double sum = 0.0, ctx_sum = 0.0;
    for (int c = 0; c < grid.n_cls; ++c) {
      EXPECT_GE(grid.cls(n, c), 0.0);
      sum += grid.cls(n, c);
      ctx_sum += grid.ctx(n, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_NEAR(ctx_sum, 1.0, 1e-9);
  }
}

TEST(Model, ForwardIsDeterministic) {
  Model m(tiny_config());
  const Raster r = noisy_line(8, 48, 3);
  const auto a = m.forward(r, false);
  const auto b = m.forward(r, false);
  EXPECT_EQ(a.p_loc, b.p_loc);
  EXPECT_EQ(a.p_bbox, b.p_bbox);
  EXPECT_EQ(a.p_cls, b.p_cls);
}

TEST(Model, RecurrentBranchNeverTouchesInferenceHeads) {
  Model m(tiny_config());
  const Raster r = noisy_line(8, 48, 4);
  const auto infer = m.forward(r, false);
  const auto train = m.forward(r, true);
  EXPECT_EQ(infer.p_loc, train.p_loc);
  EXPECT_EQ(infer.p_bbox, train.p_bbox);
  EXPECT_EQ(infer.p_cls, train.p_cls);

  m.graph().reset_tape();
  auto before = m.graph().op_counts();
  m.forward(r, false);
  auto after_infer = m.graph().op_counts();
  EXPECT_EQ(after_infer.count("bilstm") ? after_infer["bilstm"] : 0,
            before.count("bilstm") ? before["bilstm"] : 0);
  m.forward(r, true);
  auto after_train = m.graph().op_counts();
  EXPECT_EQ(after_train["bilstm"], (before.count("bilstm") ? before["bilstm"] : 0) + 2);
}

TEST(Model, TranslationCovarianceOnInteriorRegions) {
  ModelConfig cfg;
  cfg.n_cls = 5;
  Model m(cfg);
  Raster base(32, 256, 1.0);
  Rng rng(7);
  for (int y = 4; y < 28; ++y)
    for (int x = 60; x < 180; ++x)
      if (rng.uniform() < 0.3) base.px[static_cast<size_t>(y) * base.w + x] = rng.uniform(0.0, 0.3);
  Raster shifted(32, 256, 1.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 240; ++x)
      shifted.px[static_cast<size_t>(y) * shifted.w + x + 16] =
          base.px[static_cast<size_t>(y) * base.w + x];
  const auto ga = m.forward(base, false);
  const auto gb = m.forward(shifted, false);
  // 16 px = 2 regions; compare regions far from both line ends
  for (int n = 12; n <= 18; ++n) {
    EXPECT_NEAR(ga.loc(n), gb.loc(n + 2), 1e-9);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(ga.bbox(n, k), gb.bbox(n + 2, k), 1e-9);
    for (int c = 0; c < 5; ++c) EXPECT_NEAR(ga.cls(n, c), gb.cls(n + 2, c), 1e-9);
  }
}

TEST(Model, HeightAndConfigValidation) {
  ModelConfig bad = tiny_config();
  bad.height = 12;
  EXPECT_THROW(Model{bad}, std::invalid_argument);
  Model m(tiny_config());
  EXPECT_THROW(m.forward(noisy_line(16, 40, 1), false), std::invalid_argument);
  EXPECT_THROW(m.make_input(SignatureMap(8, 10)), std::invalid_argument);
}

TEST(Model, InputInversionAndPadding) {
  Model m(tiny_config());
  Raster r(8, 9, 1.0);
  r.px[3 * 9 + 2] = 0.25;
  const Tensor t = m.make_input(r);
  ASSERT_EQ(t.dim(1), 16);
  EXPECT_DOUBLE_EQ(t.v[(3 * 16 + 2)], 0.75);  // ink = 1 - intensity
  EXPECT_DOUBLE_EQ(t.v[0], 0.0);              // white maps to zero
  for (int y = 0; y < 8; ++y)
    for (int x = 9; x < 16; ++x) EXPECT_DOUBLE_EQ(t.v[static_cast<size_t>(y) * 16 + x], 0.0);
}

TEST(Model, BoxCodecRoundtripAndClamping) {
  GridGeom g{10, 8, 32, 80};
  Rng rng(13);
  for (int t = 0; t < 500; ++t) {
    const int n = rng.uniform_int(3, 6);
    // drawn so the decoded box stays strictly inside the frame (no clamping)
    const std::array<double, 4> raw = {rng.uniform(-0.4, 0.4), rng.uniform(-0.1, 0.1),
                                       rng.uniform(std::log(0.5), std::log(2.0)),
                                       rng.uniform(std::log(0.3), std::log(0.55))};
    const CharBox b = decode_box(g, n, raw);
    const auto back = encode_box(g, n, b);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(back[static_cast<size_t>(k)], raw[static_cast<size_t>(k)], 1e-9);
  }
  // extreme raw values stay inside the frame
  const CharBox huge = decode_box(g, 9, {5.0, 3.0, 4.0, 4.0});
  EXPECT_GE(huge.x_min, 0.0);
  EXPECT_LE(huge.x_max, 80.0);
  EXPECT_GE(huge.y_min, 0.0);
  EXPECT_LE(huge.y_max, 32.0);
  EXPECT_THROW(decode_box(g, 10, {0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(encode_box(g, -1, huge), std::invalid_argument);
}

TEST(Model, CheckpointRestoresForwardBitwise) {
  const std::string path = testing::TempDir() + "model_ckpt.bin";
  Model m(tiny_config());
  const Raster r = noisy_line(8, 40, 5);
  const auto before = m.forward(r, false);
  m.save(path);
  for (size_t i = 0; i < m.graph().n_params(); ++i)
    for (double& v : m.graph().param_at(i).v) v += 0.123;
  const auto perturbed = m.forward(r, false);
  EXPECT_NE(perturbed.p_loc, before.p_loc);
  m.load(path);
  const auto after = m.forward(r, false);
  EXPECT_EQ(after.p_loc, before.p_loc);
  EXPECT_EQ(after.p_bbox, before.p_bbox);
  EXPECT_EQ(after.p_cls, before.p_cls);

  ModelConfig other = tiny_config();
  other.c4 = 6;
  Model m2(other);
  EXPECT_THROW(m2.load(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST(Model, ContextBranchGradientReachesEncoder) {
  Model m(tiny_config());
  Graph& g = m.graph();
  const Raster r = noisy_line(8, 24, 6);
  const Tensor in = m.make_input(r);
  g.reset_tape();
  g.zero_grad();
  const auto fv = m.forward_values(in, true, r.w);
  ASSERT_TRUE(fv.has_ctx);
  const Value loss = nll_pick_mean(g, fv.p_ctx, {{0, 1}, {2, 0}});
  g.backward(loss);
  double stem_grad = 0.0, loc_grad = 0.0;
  const Tensor& stem = g.tensor(g.param_value("stem.w"));
  for (double gv : stem.g) stem_grad += std::abs(gv);
  const Tensor& loc = g.tensor(g.param_value("loc_head.w"));
  for (double gv : loc.g) loc_grad += std::abs(gv);
  EXPECT_GT(stem_grad, 0.0);   // the auxiliary branch regularizes the trunk
  EXPECT_EQ(loc_grad, 0.0);    // but never the unrelated heads
  g.reset_tape();
  g.zero_grad();
}

// End-to-end analytic-vs-numeric gradient agreement through the entire
// training loss (all heads + the recurrent branch) on a miniature model.
TEST(Model, FullLossGradCheck) {
  Model m(tiny_config());
  // keep every preactivation away from the relu kink at exactly 0, where a
  // finite difference straddles the subgradient: jitter the zero-initialized
  // biases and give the white background a faint wash
  Rng jitter(99);
  for (size_t i = 0; i < m.graph().n_params(); ++i)
    for (double& v : m.graph().param_at(i).v) v += jitter.uniform(-0.05, 0.05);
  SynthParams sp;
  sp.height = 8;
  auto sample = synth_offline_line({0, 2, 1}, 17, sp);
  for (double& px : sample.raster.px) px = std::min(px, 1.0 - jitter.uniform(0.002, 0.02));
  const Tensor in = m.make_input(sample.raster);
  auto build = [&](Graph& g) {
    const auto fv = m.forward_values(in, true, sample.raster.w);
    const auto entries = store_from_boxes(sample.boxes, sample.transcript);
    const auto assign = supervise_full(entries, fv.geom);
    const auto losses = compute_losses(g, fv, assign, entries, sample.transcript, true);
    return losses.total_v;
  };
  const double max_rel = grad_check(m.graph(), build, 1e-5);
  EXPECT_LT(max_rel, 1e-5);
}
