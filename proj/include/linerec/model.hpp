#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "linerec/charbox.hpp"
#include "linerec/checkpoint.hpp"
#include "linerec/graph.hpp"
#include "linerec/ops.hpp"
#include "linerec/pathsig.hpp"
#include "linerec/raster.hpp"
#include "linerec/rng.hpp"

// The recognizer: a small fully convolutional encoder that collapses the line
// height to 1, three per-region heads (location confidence, box regression,
// character classification), and a training-only bidirectional recurrent
// branch whose auxiliary classifier regularizes the classification features.
// The input width is right-padded to a multiple of the horizontal stride, so
// the prediction row always has ceil(W / region_width) entries.

namespace linerec {

struct GridGeom {
  int w_enc = 0;
  int region_width = 8;
  int height = 0;
  int width_in = 0;  // width before padding
};

struct PredictionGrid {
  GridGeom geom;
  int n_cls = 0;
  std::vector<double> p_loc;   // w_enc
  std::vector<double> p_bbox;  // w_enc * 4, raw box encoding
  std::vector<double> p_cls;   // w_enc * n_cls, rows sum to 1
  std::vector<double> p_ctx;   // recurrent-branch rows; training mode only
  bool has_ctx = false;

  double loc(int n) const { return p_loc[static_cast<size_t>(n)]; }
  double bbox(int n, int k) const { return p_bbox[static_cast<size_t>(n) * 4 + k]; }
  double cls(int n, int c) const { return p_cls[static_cast<size_t>(n) * n_cls + c]; }
  double ctx(int n, int c) const { return p_ctx[static_cast<size_t>(n) * n_cls + c]; }
};

// Raw encoding per region n: center offset in region widths, vertical offset
// in heights, log size relative to (region_width, height).
inline CharBox decode_box(const GridGeom& g, int n, const std::array<double, 4>& raw) {
  if (n < 0 || n >= g.w_enc) throw std::invalid_argument("decode_box: region out of range");
  const double rw = g.region_width;
  const double cx = (n + 0.5) * rw + raw[0] * rw;
  const double cy = 0.5 * g.height + raw[1] * g.height;
  const double w = std::exp(raw[2]) * rw;
  const double h = std::exp(raw[3]) * g.height;
  CharBox b;
  b.x_min = std::clamp(cx - 0.5 * w, 0.0, static_cast<double>(g.width_in));
  b.x_max = std::clamp(cx + 0.5 * w, 0.0, static_cast<double>(g.width_in));
  b.y_min = std::clamp(cy - 0.5 * h, 0.0, static_cast<double>(g.height));
  b.y_max = std::clamp(cy + 0.5 * h, 0.0, static_cast<double>(g.height));
  // keep degenerate fully-out-of-frame boxes representable as edge slivers
  if (b.x_max - b.x_min < 1e-9) {
    if (b.x_min >= g.width_in) b.x_min = g.width_in - 1e-9;
    b.x_max = b.x_min + 1e-9;
  }
  if (b.y_max - b.y_min < 1e-9) {
    if (b.y_min >= g.height) b.y_min = g.height - 1e-9;
    b.y_max = b.y_min + 1e-9;
  }
  return b;
}

inline CharBox decode_box(const PredictionGrid& grid, int n) {
  return decode_box(grid.geom, n,
                    {grid.bbox(n, 0), grid.bbox(n, 1), grid.bbox(n, 2), grid.bbox(n, 3)});
}

inline std::array<double, 4> encode_box(const GridGeom& g, int n, const CharBox& b) {
  if (n < 0 || n >= g.w_enc) throw std::invalid_argument("encode_box: region out of range");
  const double rw = g.region_width;
  const double w = std::max(b.w(), 1e-6);
  const double h = std::max(b.h(), 1e-6);
  return {(b.cx() - (n + 0.5) * rw) / rw, (b.cy() - 0.5 * g.height) / g.height,
          std::log(w / rw), std::log(h / g.height)};
}

struct ModelConfig {
  int height = 32;
  int n_cls = 20;
  int in_ch = 1;  // 1 for rasters, kSigChannels for signature maps
  int c1 = 4, c2 = 8, c3 = 16, c4 = 32;  // trunk widths
  int head_ch = 16;   // loc / bbox neck width
  int cls_ch = 24;    // classification neck width (the recurrent branch input)
  int ctx_hidden = 12;  // recurrent hidden size per direction
  uint64_t init_seed = 1;

  std::string fingerprint() const {
    std::ostringstream s;
    s << "v1:h" << height << ":n" << n_cls << ":i" << in_ch << ":c" << c1 << "," << c2 << ","
      << c3 << "," << c4 << ":hc" << head_ch << ":cc" << cls_ch << ":xh" << ctx_hidden;
    return s.str();
  }
};

// Values on the live tape for one forward pass; used to build losses.
struct ForwardValues {
  Value p_loc;   // [w]
  Value p_bbox;  // [w, 4]
  Value p_cls;   // [w, n_cls]
  Value p_ctx;   // [w, n_cls] when trained with the recurrent branch
  bool has_ctx = false;
  GridGeom geom;
};

class Model {
 public:
  static constexpr int kRegionWidth = 8;

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg_.height < 8 || cfg_.height % 8 != 0)
      throw std::invalid_argument("Model: height must be a positive multiple of 8");
    if (cfg_.n_cls < 2) throw std::invalid_argument("Model: need at least 2 classes");
    Rng rng(cfg_.init_seed);
    auto w = [&](const std::string& name, std::vector<int> shape, int fan_in,
                 double gain = 1.0) {
      g_.param(name, init_uniform(std::move(shape), fan_in, rng, gain));
    };
    auto b = [&](const std::string& name, int n) { g_.param(name, Tensor({n}, 0.0)); };
    const double relu_gain = std::sqrt(2.0);

    w("stem.w", {3, 3, cfg_.in_ch, cfg_.c1}, 9 * cfg_.in_ch, relu_gain);
    b("stem.b", cfg_.c1);
    res_params("b1", cfg_.c1, rng);
    w("d1.w", {3, 3, cfg_.c1, cfg_.c2}, 9 * cfg_.c1, relu_gain);
    b("d1.b", cfg_.c2);
    res_params("b2", cfg_.c2, rng);
    w("d2.w", {3, 3, cfg_.c2, cfg_.c3}, 9 * cfg_.c2, relu_gain);
    b("d2.b", cfg_.c3);
    res_params("b3", cfg_.c3, rng);
    const int kh = cfg_.height / 8;
    w("col.w", {kh, 1, cfg_.c3, cfg_.c4}, kh * cfg_.c3, relu_gain);
    b("col.b", cfg_.c4);

    // output heads start at zero so the first predictions are exactly neutral
    // (p_loc 0.5, uniform classes, unit-prior boxes). random heads on top of a
    // fresh trunk produce gradient spikes at lr 0.01 that kill the relu stack
    // in the first few steps; a zero head is a built-in warmup instead.
    auto z = [&](const std::string& name, std::vector<int> shape) {
      g_.param(name, Tensor(std::move(shape), 0.0));
    };
    w("loc_neck.w", {1, 3, cfg_.c4, cfg_.head_ch}, 3 * cfg_.c4, relu_gain);
    b("loc_neck.b", cfg_.head_ch);
    z("loc_head.w", {1, 1, cfg_.head_ch, 1});
    b("loc_head.b", 1);
    w("bbox_neck.w", {1, 3, cfg_.c4, cfg_.head_ch}, 3 * cfg_.c4, relu_gain);
    b("bbox_neck.b", cfg_.head_ch);
    z("bbox_head.w", {1, 1, cfg_.head_ch, 4});
    b("bbox_head.b", 4);
    w("cls_neck.w", {1, 3, cfg_.c4, cfg_.cls_ch}, 3 * cfg_.c4, relu_gain);
    b("cls_neck.b", cfg_.cls_ch);
    z("cls_head.w", {1, 1, cfg_.cls_ch, cfg_.n_cls});
    b("cls_head.b", cfg_.n_cls);

    // the recurrent head keeps a live init: its whole point is to push context
    // gradient into the encoder, which a zero output layer would cut off at
    // the first step (and it never sees the unstable fresh-trunk phase anyway)
    const int h = cfg_.ctx_hidden;
    lstm_params("ctx1", cfg_.cls_ch, h, rng);
    lstm_params("ctx2", 2 * h, h, rng);
    w("ctx_head.w", {2 * h, cfg_.n_cls}, 2 * h);
    b("ctx_head.b", cfg_.n_cls);
  }

  const ModelConfig& config() const { return cfg_; }
  Graph& graph() { return g_; }

  Tensor make_input(const Raster& r) const {
    if (cfg_.in_ch != 1) throw std::invalid_argument("Model: raster input needs in_ch 1");
    if (r.h != cfg_.height)
      throw std::invalid_argument("Model: input height " + std::to_string(r.h) +
                                  " does not match configured height " +
                                  std::to_string(cfg_.height));
    const int wp = padded_width(r.w);
    Tensor t({cfg_.height, wp, 1});
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) t.v[static_cast<size_t>(y) * wp + x] = 1.0 - r.at(y, x);
    return t;
  }

  Tensor make_input(const SignatureMap& m) const {
    if (cfg_.in_ch != kSigChannels)
      throw std::invalid_argument("Model: signature input needs in_ch 7");
    if (m.h != cfg_.height)
      throw std::invalid_argument("Model: input height " + std::to_string(m.h) +
                                  " does not match configured height " +
                                  std::to_string(cfg_.height));
    const int wp = padded_width(m.w);
    Tensor t({cfg_.height, wp, kSigChannels});
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x)
        for (int c = 0; c < kSigChannels; ++c)
          t.v[(static_cast<size_t>(y) * wp + x) * kSigChannels + c] =
              m.at(y, x, c) / kSigScale[static_cast<size_t>(c)];
    return t;
  }

  // Builds one forward pass on the graph tape. `width_in` is the width before
  // padding (pass the tensor's width when it was not padded by make_input).
  ForwardValues forward_values(const Tensor& input, bool train, int width_in) {
    if (input.ndim() != 3 || input.dim(0) != cfg_.height || input.dim(2) != cfg_.in_ch)
      throw std::invalid_argument("Model: bad input tensor " + Tensor::shape_str(input.shape));
    if (input.dim(1) % 8 != 0)
      throw std::invalid_argument("Model: input width must be padded to a multiple of 8");
    Graph& g = g_;
    Value x = g.input(input);
    x = relu(g, conv2d(g, x, p("stem.w"), p("stem.b"), 1, 1, 1, 1));
    x = max_pool2d(g, x, 2, 2, 2, 2);
    x = res_block(g, x, "b1");
    x = relu(g, conv2d(g, x, p("d1.w"), p("d1.b"), 2, 2, 1, 1));
    x = res_block(g, x, "b2");
    x = relu(g, conv2d(g, x, p("d2.w"), p("d2.b"), 2, 2, 1, 1));
    x = res_block(g, x, "b3");
    x = relu(g, conv2d(g, x, p("col.w"), p("col.b"), 1, 1, 0, 0));  // [1, w, c4]
    const int w_enc = g.tensor(x).dim(1);

    Value f_loc = relu(g, conv2d(g, x, p("loc_neck.w"), p("loc_neck.b"), 1, 1, 0, 1));
    Value z_loc = conv2d(g, f_loc, p("loc_head.w"), p("loc_head.b"), 1, 1, 0, 0);
    Value p_loc = reshape(g, sigmoid(g, z_loc), {w_enc});

    Value f_bbox = relu(g, conv2d(g, x, p("bbox_neck.w"), p("bbox_neck.b"), 1, 1, 0, 1));
    Value p_bbox = reshape(g, conv2d(g, f_bbox, p("bbox_head.w"), p("bbox_head.b"), 1, 1, 0, 0),
                           {w_enc, 4});

    Value f_cls = relu(g, conv2d(g, x, p("cls_neck.w"), p("cls_neck.b"), 1, 1, 0, 1));
    Value z_cls = conv2d(g, f_cls, p("cls_head.w"), p("cls_head.b"), 1, 1, 0, 0);
    Value p_cls = softmax_rows(g, reshape(g, z_cls, {w_enc, cfg_.n_cls}));

    ForwardValues fv;
    fv.p_loc = p_loc;
    fv.p_bbox = p_bbox;
    fv.p_cls = p_cls;
    fv.geom = GridGeom{w_enc, kRegionWidth, cfg_.height, width_in};
    if (train) {
      Value seq = reshape(g, f_cls, {w_enc, cfg_.cls_ch});
      Value h1 = bilstm(g, seq, p("ctx1.wx_f"), p("ctx1.wh_f"), p("ctx1.b_f"), p("ctx1.wx_b"),
                        p("ctx1.wh_b"), p("ctx1.b_b"));
      Value h2 = bilstm(g, h1, p("ctx2.wx_f"), p("ctx2.wh_f"), p("ctx2.b_f"), p("ctx2.wx_b"),
                        p("ctx2.wh_b"), p("ctx2.b_b"));
      fv.p_ctx = softmax_rows(g, affine(g, h2, p("ctx_head.w"), p("ctx_head.b")));
      fv.has_ctx = true;
    }
    return fv;
  }

  // Convenience: forward, copy the numbers out, release the tape.
  PredictionGrid forward(const Tensor& input, bool train, int width_in) {
    const size_t tape_before = g_.tape_size();
    ForwardValues fv = forward_values(input, train, width_in);
    PredictionGrid grid;
    grid.geom = fv.geom;
    grid.n_cls = cfg_.n_cls;
    grid.p_loc = g_.tensor(fv.p_loc).v;
    grid.p_bbox = g_.tensor(fv.p_bbox).v;
    grid.p_cls = g_.tensor(fv.p_cls).v;
    if (fv.has_ctx) {
      grid.p_ctx = g_.tensor(fv.p_ctx).v;
      grid.has_ctx = true;
    }
    if (tape_before == 0) g_.reset_tape();
    return grid;
  }

  PredictionGrid forward(const Raster& r, bool train) {
    return forward(make_input(r), train, r.w);
  }
  PredictionGrid forward(const SignatureMap& m, bool train) {
    return forward(make_input(m), train, m.w);
  }

  int padded_width(int w) const {
    if (w < 1) throw std::invalid_argument("Model: input width must be >= 1");
    return ((w + 7) / 8) * 8;
  }

  // include_ctx=false strips the training-only recurrent branch; such a
  // checkpoint loads fine and leaves the branch at its initialization, which
  // inference never reads.
  void save(const std::string& path, bool include_ctx = true) const {
    nlohmann::json meta{{"arch", cfg_.fingerprint()},
                        {"height", cfg_.height},
                        {"n_cls", cfg_.n_cls},
                        {"in_ch", cfg_.in_ch},
                        {"region_width", kRegionWidth},
                        {"ctx", include_ctx}};
    save_params(g_, meta.dump(), path, include_ctx ? "" : "ctx");
  }

  void load(const std::string& path) {
    const std::string meta_str = load_params(g_, path);
    const auto meta = nlohmann::json::parse(meta_str);
    const std::string arch = meta.at("arch").get<std::string>();
    if (arch != cfg_.fingerprint())
      throw std::runtime_error("checkpoint architecture " + arch + " does not match model " +
                               cfg_.fingerprint());
  }

  Value p(const std::string& name) const { return g_.param_value(name); }

 private:
  void res_params(const std::string& prefix, int ch, Rng& rng) {
    const double relu_gain = std::sqrt(2.0);
    g_.param(prefix + ".w1", init_uniform({3, 3, ch, ch}, 9 * ch, rng, relu_gain));
    g_.param(prefix + ".b1", Tensor({ch}, 0.0));
    g_.param(prefix + ".w2", init_uniform({3, 3, ch, ch}, 9 * ch, rng, relu_gain));
    g_.param(prefix + ".b2", Tensor({ch}, 0.0));
  }

  void lstm_params(const std::string& prefix, int in, int h, Rng& rng) {
    for (const char* dir : {"f", "b"}) {
      g_.param(prefix + ".wx_" + dir, init_uniform({4 * h, in}, in, rng));
      g_.param(prefix + ".wh_" + dir, init_uniform({4 * h, h}, h, rng));
      g_.param(prefix + ".b_" + dir, Tensor({4 * h}, 0.0));
    }
  }

  Value res_block(Graph& g, Value x, const std::string& prefix) {
    Value y = relu(g, conv2d(g, x, p(prefix + ".w1"), p(prefix + ".b1"), 1, 1, 1, 1));
    y = conv2d(g, y, p(prefix + ".w2"), p(prefix + ".b2"), 1, 1, 1, 1);
    return relu(g, add(g, x, y));
  }

  ModelConfig cfg_;
  Graph g_;
};

}  // namespace linerec
