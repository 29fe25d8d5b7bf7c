#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "linerec/graph.hpp"
#include "linerec/rng.hpp"

// Differentiable primitives. Execution is eager: each call computes the
// forward result immediately and records a closure for the backward sweep.
// Closures capture node ids, never node references; the tape vector may
// reallocate while the graph grows.

namespace linerec {

namespace detail {
inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

// --- elementwise -----------------------------------------------------------

inline Value relu(Graph& g, Value x) {
  const Tensor& xt = g.tensor(x);
  Graph::Node n{"relu", Tensor(xt.shape), nullptr, g.needs_grad(x)};
  for (size_t i = 0; i < xt.v.size(); ++i) n.t.v[i] = xt.v[i] > 0.0 ? xt.v[i] : 0.0;
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    const Tensor& ot = gg.tensor(v);
    xt2.alloc_grad();
    for (size_t i = 0; i < xt2.v.size(); ++i)
      if (xt2.v[i] > 0.0) xt2.g[i] += ot.g[i];
  };
  return v;
}

inline Value sigmoid(Graph& g, Value x) {
  const Tensor& xt = g.tensor(x);
  Graph::Node n{"sigmoid", Tensor(xt.shape), nullptr, g.needs_grad(x)};
  for (size_t i = 0; i < xt.v.size(); ++i) n.t.v[i] = 1.0 / (1.0 + std::exp(-xt.v[i]));
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    const Tensor& ot = gg.tensor(v);
    xt2.alloc_grad();
    for (size_t i = 0; i < xt2.v.size(); ++i) xt2.g[i] += ot.g[i] * ot.v[i] * (1.0 - ot.v[i]);
  };
  return v;
}

inline Value tanh_op(Graph& g, Value x) {
  const Tensor& xt = g.tensor(x);
  Graph::Node n{"tanh", Tensor(xt.shape), nullptr, g.needs_grad(x)};
  for (size_t i = 0; i < xt.v.size(); ++i) n.t.v[i] = std::tanh(xt.v[i]);
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    const Tensor& ot = gg.tensor(v);
    xt2.alloc_grad();
    for (size_t i = 0; i < xt2.v.size(); ++i) xt2.g[i] += ot.g[i] * (1.0 - ot.v[i] * ot.v[i]);
  };
  return v;
}

inline Value add(Graph& g, Value a, Value b) {
  const Tensor& at = g.tensor(a);
  const Tensor& bt = g.tensor(b);
  detail::check(at.shape == bt.shape, "add: shape mismatch " + Tensor::shape_str(at.shape) +
                                          " vs " + Tensor::shape_str(bt.shape));
  Graph::Node n{"add", Tensor(at.shape), nullptr, g.needs_grad(a) || g.needs_grad(b)};
  for (size_t i = 0; i < at.v.size(); ++i) n.t.v[i] = at.v[i] + bt.v[i];
  Value v = g.push(std::move(n));
  g.node(v).back = [a, b, v](Graph& gg) {
    const Tensor& ot = gg.tensor(v);
    for (Value in : {a, b}) {
      if (!gg.needs_grad(in)) continue;
      Tensor& t = gg.tensor(in);
      t.alloc_grad();
      for (size_t i = 0; i < t.v.size(); ++i) t.g[i] += ot.g[i];
    }
  };
  return v;
}

inline Value reshape(Graph& g, Value x, std::vector<int> shape) {
  const Tensor& xt = g.tensor(x);
  detail::check(Tensor::count(shape) == xt.size(),
                "reshape: element count mismatch " + Tensor::shape_str(xt.shape) + " -> " +
                    Tensor::shape_str(shape));
  Graph::Node n{"reshape", Tensor(std::move(shape)), nullptr, g.needs_grad(x)};
  n.t.v = xt.v;
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    const Tensor& ot = gg.tensor(v);
    xt2.alloc_grad();
    for (size_t i = 0; i < xt2.v.size(); ++i) xt2.g[i] += ot.g[i];
  };
  return v;
}

// --- conv / pool / affine ---------------------------------------------------

// x: [H,W,Cin], w: [kh,kw,Cin,Cout], optional bias [Cout]. Zero padding,
// cross-correlation.
inline Value conv2d(Graph& g, Value x, Value w, Value b, int sh, int sw, int ph, int pw) {
  const Tensor& xt = g.tensor(x);
  const Tensor& wt = g.tensor(w);
  detail::check(xt.ndim() == 3, "conv2d: input must be rank 3, got " + Tensor::shape_str(xt.shape));
  detail::check(wt.ndim() == 4, "conv2d: kernel must be rank 4, got " + Tensor::shape_str(wt.shape));
  const int H = xt.dim(0), W = xt.dim(1), Cin = xt.dim(2);
  const int kh = wt.dim(0), kw = wt.dim(1), Cout = wt.dim(3);
  detail::check(wt.dim(2) == Cin, "conv2d: kernel input channels " + std::to_string(wt.dim(2)) +
                                      " do not match input channels " + std::to_string(Cin));
  detail::check(kh <= H + 2 * ph, "conv2d: kernel height " + std::to_string(kh) +
                                      " exceeds padded input height " + std::to_string(H + 2 * ph));
  detail::check(kw <= W + 2 * pw, "conv2d: kernel width " + std::to_string(kw) +
                                      " exceeds padded input width " + std::to_string(W + 2 * pw));
  detail::check(sh >= 1 && sw >= 1, "conv2d: stride must be positive");
  if (b.valid()) {
    const Tensor& bt = g.tensor(b);
    detail::check(bt.size() == Cout, "conv2d: bias size " + std::to_string(bt.size()) +
                                         " does not match output channels " + std::to_string(Cout));
  }
  const int Ho = (H + 2 * ph - kh) / sh + 1;
  const int Wo = (W + 2 * pw - kw) / sw + 1;

  bool needs = g.needs_grad(x) || g.needs_grad(w) || (b.valid() && g.needs_grad(b));
  Graph::Node n{"conv2d", Tensor({Ho, Wo, Cout}), nullptr, needs};
  {
    const double* xv = xt.v.data();
    const double* wv = wt.v.data();
    const double* bv = b.valid() ? g.tensor(b).v.data() : nullptr;
    double* ov = n.t.v.data();
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double* orow = ov + (static_cast<size_t>(oy) * Wo + ox) * Cout;
        for (int co = 0; co < Cout; ++co) orow[co] = bv ? bv[co] : 0.0;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * sw - pw + kx;
            if (ix < 0 || ix >= W) continue;
            const double* xrow = xv + (static_cast<size_t>(iy) * W + ix) * Cin;
            const double* wrow = wv + (static_cast<size_t>(ky) * kw + kx) * Cin * Cout;
            for (int ci = 0; ci < Cin; ++ci) {
              const double xval = xrow[ci];
              if (xval == 0.0) continue;
              const double* wc = wrow + static_cast<size_t>(ci) * Cout;
              for (int co = 0; co < Cout; ++co) orow[co] += xval * wc[co];
            }
          }
        }
      }
  }
  Value v = g.push(std::move(n));
  g.node(v).back = [x, w, b, v, sh, sw, ph, pw](Graph& gg) {
    const Tensor& ot = gg.tensor(v);
    Tensor& xt2 = gg.tensor(x);
    Tensor& wt2 = gg.tensor(w);
    const int H = xt2.dim(0), W = xt2.dim(1), Cin = xt2.dim(2);
    const int kh = wt2.dim(0), kw = wt2.dim(1), Cout = wt2.dim(3);
    const int Ho = ot.dim(0), Wo = ot.dim(1);
    const bool gx = gg.needs_grad(x), gw = gg.needs_grad(w);
    const bool gb = b.valid() && gg.needs_grad(b);
    if (gx) xt2.alloc_grad();
    if (gw) wt2.alloc_grad();
    if (gb) gg.tensor(b).alloc_grad();
    double* bgrad = gb ? gg.tensor(b).g.data() : nullptr;
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const double* orow = ot.g.data() + (static_cast<size_t>(oy) * Wo + ox) * Cout;
        if (bgrad)
          for (int co = 0; co < Cout; ++co) bgrad[co] += orow[co];
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * sw - pw + kx;
            if (ix < 0 || ix >= W) continue;
            const size_t xoff = (static_cast<size_t>(iy) * W + ix) * Cin;
            const size_t woff = (static_cast<size_t>(ky) * kw + kx) * Cin * Cout;
            for (int ci = 0; ci < Cin; ++ci) {
              const double xval = xt2.v[xoff + ci];
              const double* wc = wt2.v.data() + woff + static_cast<size_t>(ci) * Cout;
              double dx = 0.0;
              for (int co = 0; co < Cout; ++co) {
                const double og = orow[co];
                if (gw) wt2.g[woff + static_cast<size_t>(ci) * Cout + co] += og * xval;
                dx += og * wc[co];
              }
              if (gx) xt2.g[xoff + ci] += dx;
            }
          }
        }
      }
  };
  return v;
}

inline Value max_pool2d(Graph& g, Value x, int kh, int kw, int sh, int sw) {
  const Tensor& xt = g.tensor(x);
  detail::check(xt.ndim() == 3, "max_pool2d: input must be rank 3");
  const int H = xt.dim(0), W = xt.dim(1), C = xt.dim(2);
  detail::check(kh <= H && kw <= W, "max_pool2d: window " + std::to_string(kh) + "x" +
                                        std::to_string(kw) + " exceeds input " +
                                        Tensor::shape_str(xt.shape));
  const int Ho = (H - kh) / sh + 1;
  const int Wo = (W - kw) / sw + 1;
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(Ho) * Wo * C);
  Graph::Node n{"max_pool2d", Tensor({Ho, Wo, C}), nullptr, g.needs_grad(x)};
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int c = 0; c < C; ++c) {
        double best = -1e300;
        int best_idx = -1;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const int iy = oy * sh + ky, ix = ox * sw + kx;
            const int idx = (iy * W + ix) * C + c;
            if (xt.v[static_cast<size_t>(idx)] > best) {
              best = xt.v[static_cast<size_t>(idx)];
              best_idx = idx;
            }
          }
        const size_t o = (static_cast<size_t>(oy) * Wo + ox) * C + c;
        n.t.v[o] = best;
        (*argmax)[o] = best_idx;
      }
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v, argmax](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    const Tensor& ot = gg.tensor(v);
    xt2.alloc_grad();
    for (size_t o = 0; o < ot.v.size(); ++o) xt2.g[static_cast<size_t>((*argmax)[o])] += ot.g[o];
  };
  return v;
}

// x: [N,D], w: [D,M], b: [M] -> [N,M]
inline Value affine(Graph& g, Value x, Value w, Value b) {
  const Tensor& xt = g.tensor(x);
  const Tensor& wt = g.tensor(w);
  detail::check(xt.ndim() == 2 && wt.ndim() == 2, "affine: operands must be rank 2");
  const int N = xt.dim(0), D = xt.dim(1), M = wt.dim(1);
  detail::check(wt.dim(0) == D, "affine: weight rows " + std::to_string(wt.dim(0)) +
                                    " do not match input features " + std::to_string(D));
  if (b.valid())
    detail::check(g.tensor(b).size() == M, "affine: bias size mismatch");
  bool needs = g.needs_grad(x) || g.needs_grad(w) || (b.valid() && g.needs_grad(b));
  Graph::Node n{"affine", Tensor({N, M}), nullptr, needs};
  for (int i = 0; i < N; ++i) {
    double* orow = n.t.v.data() + static_cast<size_t>(i) * M;
    if (b.valid()) {
      const Tensor& bt = g.tensor(b);
      for (int j = 0; j < M; ++j) orow[j] = bt.v[static_cast<size_t>(j)];
    }
    const double* xrow = xt.v.data() + static_cast<size_t>(i) * D;
    for (int k = 0; k < D; ++k) {
      const double xv = xrow[k];
      if (xv == 0.0) continue;
      const double* wrow = wt.v.data() + static_cast<size_t>(k) * M;
      for (int j = 0; j < M; ++j) orow[j] += xv * wrow[j];
    }
  }
  Value v = g.push(std::move(n));
  g.node(v).back = [x, w, b, v](Graph& gg) {
    const Tensor& ot = gg.tensor(v);
    Tensor& xt2 = gg.tensor(x);
    Tensor& wt2 = gg.tensor(w);
    const int N = xt2.dim(0), D = xt2.dim(1), M = wt2.dim(1);
    const bool gx = gg.needs_grad(x), gw = gg.needs_grad(w);
    const bool gb = b.valid() && gg.needs_grad(b);
    if (gx) xt2.alloc_grad();
    if (gw) wt2.alloc_grad();
    if (gb) gg.tensor(b).alloc_grad();
    for (int i = 0; i < N; ++i) {
      const double* og = ot.g.data() + static_cast<size_t>(i) * M;
      if (gb) {
        Tensor& bt = gg.tensor(b);
        for (int j = 0; j < M; ++j) bt.g[static_cast<size_t>(j)] += og[j];
      }
      for (int k = 0; k < D; ++k) {
        const double xv = xt2.v[static_cast<size_t>(i) * D + k];
        const double* wrow = wt2.v.data() + static_cast<size_t>(k) * M;
        double dx = 0.0;
        for (int j = 0; j < M; ++j) {
          dx += og[j] * wrow[j];
          if (gw) wt2.g[static_cast<size_t>(k) * M + j] += og[j] * xv;
        }
        if (gx) xt2.g[static_cast<size_t>(i) * D + k] += dx;
      }
    }
  };
  return v;
}

// --- softmax ----------------------------------------------------------------

// Row-wise stable softmax on [N,K].
inline Value softmax_rows(Graph& g, Value x) {
  const Tensor& xt = g.tensor(x);
  detail::check(xt.ndim() == 2, "softmax_rows: input must be rank 2");
  const int N = xt.dim(0), K = xt.dim(1);
  Graph::Node n{"softmax", Tensor({N, K}), nullptr, g.needs_grad(x)};
  for (int i = 0; i < N; ++i) {
    const double* row = xt.v.data() + static_cast<size_t>(i) * K;
    double* orow = n.t.v.data() + static_cast<size_t>(i) * K;
    double mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      orow[k] = std::exp(row[k] - mx);
      sum += orow[k];
    }
    for (int k = 0; k < K; ++k) orow[k] /= sum;
  }
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    const Tensor& ot = gg.tensor(v);
    xt2.alloc_grad();
    const int N = ot.dim(0), K = ot.dim(1);
    for (int i = 0; i < N; ++i) {
      const double* y = ot.v.data() + static_cast<size_t>(i) * K;
      const double* dy = ot.g.data() + static_cast<size_t>(i) * K;
      double dot = 0.0;
      for (int k = 0; k < K; ++k) dot += dy[k] * y[k];
      for (int k = 0; k < K; ++k) xt2.g[static_cast<size_t>(i) * K + k] += y[k] * (dy[k] - dot);
    }
  };
  return v;
}

// --- bidirectional LSTM -----------------------------------------------------

namespace detail {
struct LstmStash {
  // per direction, per step: gate activations and cell traces, each W*h
  std::array<std::vector<double>, 2> gi, gf, gg_, go, c, tc, h;
};

// One direction over x [W,C]. Gate row order in wx/wh/b: i, f, g, o.
inline void lstm_dir(const double* xv, int W, int C, int h, const double* wx, const double* wh,
                     const double* b, bool rev, std::vector<double>& gi, std::vector<double>& gf,
                     std::vector<double>& gg, std::vector<double>& go, std::vector<double>& cc,
                     std::vector<double>& tc, std::vector<double>& hh) {
  gi.assign(static_cast<size_t>(W) * h, 0.0);
  gf = gi;
  gg = gi;
  go = gi;
  cc = gi;
  tc = gi;
  hh = gi;
  std::vector<double> hprev(static_cast<size_t>(h), 0.0), cprev(static_cast<size_t>(h), 0.0);
  std::vector<double> z(static_cast<size_t>(4) * h);
  for (int s = 0; s < W; ++s) {
    const int t = rev ? W - 1 - s : s;
    for (int r = 0; r < 4 * h; ++r) z[static_cast<size_t>(r)] = b[r];
    const double* xt = xv + static_cast<size_t>(t) * C;
    for (int k = 0; k < C; ++k) {
      const double xval = xt[k];
      if (xval == 0.0) continue;
      for (int r = 0; r < 4 * h; ++r) z[static_cast<size_t>(r)] += wx[static_cast<size_t>(r) * C + k] * xval;
    }
    for (int k = 0; k < h; ++k) {
      const double hv = hprev[static_cast<size_t>(k)];
      if (hv == 0.0) continue;
      for (int r = 0; r < 4 * h; ++r) z[static_cast<size_t>(r)] += wh[static_cast<size_t>(r) * h + k] * hv;
    }
    double* pi = gi.data() + static_cast<size_t>(s) * h;
    double* pf = gf.data() + static_cast<size_t>(s) * h;
    double* pg = gg.data() + static_cast<size_t>(s) * h;
    double* po = go.data() + static_cast<size_t>(s) * h;
    double* pc = cc.data() + static_cast<size_t>(s) * h;
    double* ptc = tc.data() + static_cast<size_t>(s) * h;
    double* ph = hh.data() + static_cast<size_t>(s) * h;
    for (int k = 0; k < h; ++k) {
      pi[k] = 1.0 / (1.0 + std::exp(-z[static_cast<size_t>(k)]));
      pf[k] = 1.0 / (1.0 + std::exp(-z[static_cast<size_t>(h + k)]));
      pg[k] = std::tanh(z[static_cast<size_t>(2 * h + k)]);
      po[k] = 1.0 / (1.0 + std::exp(-z[static_cast<size_t>(3 * h + k)]));
      pc[k] = pf[k] * cprev[static_cast<size_t>(k)] + pi[k] * pg[k];
      ptc[k] = std::tanh(pc[k]);
      ph[k] = po[k] * ptc[k];
      hprev[static_cast<size_t>(k)] = ph[k];
      cprev[static_cast<size_t>(k)] = pc[k];
    }
  }
}
}  // namespace detail

// Bidirectional gated recurrence over x [W,C] -> [W, 2*hidden]; forward
// direction fills columns [0,h), reverse fills [h,2h). The whole recurrence
// is one tape node; backward runs truncated-free BPTT over the stashed gates.
inline Value bilstm(Graph& g, Value x, Value wx_f, Value wh_f, Value b_f, Value wx_b, Value wh_b,
                    Value b_b) {
  const Tensor& xt = g.tensor(x);
  detail::check(xt.ndim() == 2, "bilstm: input must be rank 2, got " + Tensor::shape_str(xt.shape));
  const int W = xt.dim(0), C = xt.dim(1);
  detail::check(W >= 1, "bilstm: sequence length must be >= 1");
  const Tensor& wxf = g.tensor(wx_f);
  detail::check(wxf.ndim() == 2 && wxf.dim(1) == C,
                "bilstm: wx columns " + std::to_string(wxf.dim(1)) + " do not match input features " +
                    std::to_string(C));
  const int h = wxf.dim(0) / 4;
  detail::check(wxf.dim(0) == 4 * h, "bilstm: wx rows must be 4*hidden");

  auto st = std::make_shared<detail::LstmStash>();
  const Value wxs[2] = {wx_f, wx_b};
  const Value whs[2] = {wh_f, wh_b};
  const Value bs[2] = {b_f, b_b};
  for (int d = 0; d < 2; ++d)
    detail::lstm_dir(xt.v.data(), W, C, h, g.tensor(wxs[d]).v.data(), g.tensor(whs[d]).v.data(),
                     g.tensor(bs[d]).v.data(), d == 1, st->gi[d], st->gf[d], st->gg_[d], st->go[d],
                     st->c[d], st->tc[d], st->h[d]);

  bool needs = g.needs_grad(x);
  for (Value p : {wx_f, wh_f, b_f, wx_b, wh_b, b_b}) needs = needs || g.needs_grad(p);
  Graph::Node n{"bilstm", Tensor({W, 2 * h}), nullptr, needs};
  for (int s = 0; s < W; ++s) {
    const int t_f = s;            // step s of forward dir sits at position s
    const int t_b = W - 1 - s;    // step s of reverse dir sits at position W-1-s
    for (int k = 0; k < h; ++k) {
      n.t.v[static_cast<size_t>(t_f) * 2 * h + k] = st->h[0][static_cast<size_t>(s) * h + k];
      n.t.v[static_cast<size_t>(t_b) * 2 * h + h + k] = st->h[1][static_cast<size_t>(s) * h + k];
    }
  }
  Value v = g.push(std::move(n));
  g.node(v).back = [x, wx_f, wh_f, b_f, wx_b, wh_b, b_b, v, st, W, C, h](Graph& gg) {
    const Tensor& ot = gg.tensor(v);
    Tensor& xt2 = gg.tensor(x);
    const bool gx = gg.needs_grad(x);
    if (gx) xt2.alloc_grad();
    const Value wxs[2] = {wx_f, wx_b};
    const Value whs[2] = {wh_f, wh_b};
    const Value bs[2] = {b_f, b_b};
    for (int d = 0; d < 2; ++d) {
      Tensor& wx = gg.tensor(wxs[d]);
      Tensor& wh = gg.tensor(whs[d]);
      Tensor& bb = gg.tensor(bs[d]);
      const bool gwx = gg.needs_grad(wxs[d]), gwh = gg.needs_grad(whs[d]), gb = gg.needs_grad(bs[d]);
      if (gwx) wx.alloc_grad();
      if (gwh) wh.alloc_grad();
      if (gb) bb.alloc_grad();
      std::vector<double> dh_carry(static_cast<size_t>(h), 0.0), dc_carry(static_cast<size_t>(h), 0.0);
      std::vector<double> dz(static_cast<size_t>(4) * h);
      for (int s = W - 1; s >= 0; --s) {
        const int t = d == 0 ? s : W - 1 - s;  // input position of this step
        const double* pi = st->gi[d].data() + static_cast<size_t>(s) * h;
        const double* pf = st->gf[d].data() + static_cast<size_t>(s) * h;
        const double* pg = st->gg_[d].data() + static_cast<size_t>(s) * h;
        const double* po = st->go[d].data() + static_cast<size_t>(s) * h;
        const double* ptc = st->tc[d].data() + static_cast<size_t>(s) * h;
        const double* cprev = s > 0 ? st->c[d].data() + static_cast<size_t>(s - 1) * h : nullptr;
        const double* hprev = s > 0 ? st->h[d].data() + static_cast<size_t>(s - 1) * h : nullptr;
        for (int k = 0; k < h; ++k) {
          const double dh = ot.g[static_cast<size_t>(t) * 2 * h + d * h + k] + dh_carry[static_cast<size_t>(k)];
          const double dout = dh * ptc[k];
          const double dc = dc_carry[static_cast<size_t>(k)] + dh * po[k] * (1.0 - ptc[k] * ptc[k]);
          const double di = dc * pg[k];
          const double dgate = dc * pi[k];
          const double df = dc * (cprev ? cprev[k] : 0.0);
          dz[static_cast<size_t>(k)] = di * pi[k] * (1.0 - pi[k]);
          dz[static_cast<size_t>(h + k)] = df * pf[k] * (1.0 - pf[k]);
          dz[static_cast<size_t>(2 * h + k)] = dgate * (1.0 - pg[k] * pg[k]);
          dz[static_cast<size_t>(3 * h + k)] = dout * po[k] * (1.0 - po[k]);
          dc_carry[static_cast<size_t>(k)] = dc * pf[k];
        }
        const double* xrow = xt2.v.data() + static_cast<size_t>(t) * C;
        for (int r = 0; r < 4 * h; ++r) {
          const double dzr = dz[static_cast<size_t>(r)];
          if (dzr == 0.0) continue;
          if (gb) bb.g[static_cast<size_t>(r)] += dzr;
          if (gwx)
            for (int k = 0; k < C; ++k) wx.g[static_cast<size_t>(r) * C + k] += dzr * xrow[k];
          if (gwh && hprev)
            for (int k = 0; k < h; ++k) wh.g[static_cast<size_t>(r) * h + k] += dzr * hprev[k];
          if (gx)
            for (int k = 0; k < C; ++k)
              xt2.g[static_cast<size_t>(t) * C + k] += dzr * wx.v[static_cast<size_t>(r) * C + k];
        }
        std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
        for (int r = 0; r < 4 * h; ++r) {
          const double dzr = dz[static_cast<size_t>(r)];
          if (dzr == 0.0) continue;
          for (int k = 0; k < h; ++k)
            dh_carry[static_cast<size_t>(k)] += dzr * wh.v[static_cast<size_t>(r) * h + k];
        }
      }
    }
  };
  return v;
}

// --- reductions and losses --------------------------------------------------

inline Value sum_all(Graph& g, Value x) {
  const Tensor& xt = g.tensor(x);
  double s = 0.0;
  for (double v : xt.v) s += v;
  Graph::Node n{"sum", Tensor({1}, {s}), nullptr, g.needs_grad(x)};
  Value v = g.push(std::move(n));
  g.node(v).back = [x, v](Graph& gg) {
    if (!gg.needs_grad(x)) return;
    Tensor& xt2 = gg.tensor(x);
    xt2.alloc_grad();
    const double og = gg.tensor(v).g[0];
    for (double& gv : xt2.g) gv += og;
  };
  return v;
}

inline Value add_scalars(Graph& g, const std::vector<Value>& vs) {
  double s = 0.0;
  for (Value v : vs) {
    detail::check(g.tensor(v).size() == 1, "add_scalars: operands must be scalar");
    s += g.tensor(v).v[0];
  }
  bool needs = false;
  for (Value v : vs) needs = needs || g.needs_grad(v);
  Graph::Node n{"add_scalars", Tensor({1}, {s}), nullptr, needs};
  Value out = g.push(std::move(n));
  auto ins = vs;
  g.node(out).back = [ins, out](Graph& gg) {
    const double og = gg.tensor(out).g[0];
    for (Value v : ins) {
      if (!gg.needs_grad(v)) continue;
      Tensor& t = gg.tensor(v);
      t.alloc_grad();
      t.g[0] += og;
    }
  };
  return out;
}

inline Value const_scalar(Graph& g, double v) { return g.input(Tensor({1}, {v})); }

// -(1/|picks|) sum log(max(p[r][c], floor)) over (row, col) picks.
// Touches only the picked entries, so perturbing any other entry leaves both
// the value and the gradient untouched.
inline Value nll_pick_mean(Graph& g, Value probs, const std::vector<std::pair<int, int>>& picks,
                           double floor = 1e-12) {
  const Tensor& pt = g.tensor(probs);
  detail::check(pt.ndim() == 2, "nll_pick_mean: probs must be rank 2");
  if (picks.empty()) return const_scalar(g, 0.0);
  const int K = pt.dim(1);
  double loss = 0.0;
  for (auto [r, c] : picks) {
    detail::check(r >= 0 && r < pt.dim(0) && c >= 0 && c < K, "nll_pick_mean: pick out of range");
    loss -= std::log(std::max(pt.v[static_cast<size_t>(r) * K + c], floor));
  }
  loss /= static_cast<double>(picks.size());
  Graph::Node n{"nll_pick", Tensor({1}, {loss}), nullptr, g.needs_grad(probs)};
  Value v = g.push(std::move(n));
  auto ps = picks;
  g.node(v).back = [probs, v, ps, floor](Graph& gg) {
    if (!gg.needs_grad(probs)) return;
    Tensor& pt2 = gg.tensor(probs);
    pt2.alloc_grad();
    const int K = pt2.dim(1);
    const double og = gg.tensor(v).g[0] / static_cast<double>(ps.size());
    for (auto [r, c] : ps) {
      const double pv = pt2.v[static_cast<size_t>(r) * K + c];
      if (pv > floor) pt2.g[static_cast<size_t>(r) * K + c] -= og / pv;
    }
  };
  return v;
}

// (1/|rows|) sum_m ||pred[rows[m]] - targets[m]||^2 with targets given as a
// flattened M*K buffer.
inline Value mse_pick_mean(Graph& g, Value pred, const std::vector<int>& rows,
                           const std::vector<double>& targets) {
  const Tensor& pt = g.tensor(pred);
  detail::check(pt.ndim() == 2, "mse_pick_mean: pred must be rank 2");
  if (rows.empty()) return const_scalar(g, 0.0);
  const int K = pt.dim(1);
  detail::check(targets.size() == rows.size() * static_cast<size_t>(K),
                "mse_pick_mean: target buffer size mismatch");
  double loss = 0.0;
  for (size_t m = 0; m < rows.size(); ++m) {
    detail::check(rows[m] >= 0 && rows[m] < pt.dim(0), "mse_pick_mean: row out of range");
    for (int k = 0; k < K; ++k) {
      const double d = pt.v[static_cast<size_t>(rows[m]) * K + k] - targets[m * static_cast<size_t>(K) + k];
      loss += d * d;
    }
  }
  loss /= static_cast<double>(rows.size());
  Graph::Node n{"mse_pick", Tensor({1}, {loss}), nullptr, g.needs_grad(pred)};
  Value v = g.push(std::move(n));
  auto rs = rows;
  auto ts = targets;
  g.node(v).back = [pred, v, rs, ts](Graph& gg) {
    if (!gg.needs_grad(pred)) return;
    Tensor& pt2 = gg.tensor(pred);
    pt2.alloc_grad();
    const int K = pt2.dim(1);
    const double og = 2.0 * gg.tensor(v).g[0] / static_cast<double>(rs.size());
    for (size_t m = 0; m < rs.size(); ++m)
      for (int k = 0; k < K; ++k)
        pt2.g[static_cast<size_t>(rs[m]) * K + k] +=
            og * (pt2.v[static_cast<size_t>(rs[m]) * K + k] - ts[m * static_cast<size_t>(K) + k]);
  };
  return v;
}

// -0.5/|pos| sum log p[i] - 0.5/|neg| sum log(1-p[j]); an empty index set
// contributes 0. Indices outside pos/neg never influence value or gradient.
inline Value loc_nll(Graph& g, Value p, const std::vector<int>& pos, const std::vector<int>& neg,
                     double floor = 1e-12) {
  const Tensor& pt = g.tensor(p);
  detail::check(pt.ndim() == 1, "loc_nll: p must be rank 1");
  double loss = 0.0;
  for (int i : pos) loss -= 0.5 / static_cast<double>(pos.size()) * std::log(std::max(pt.v[static_cast<size_t>(i)], floor));
  for (int i : neg) loss -= 0.5 / static_cast<double>(neg.size()) * std::log(std::max(1.0 - pt.v[static_cast<size_t>(i)], floor));
  Graph::Node n{"loc_nll", Tensor({1}, {loss}), nullptr, g.needs_grad(p)};
  Value v = g.push(std::move(n));
  auto ps = pos;
  auto ns = neg;
  g.node(v).back = [p, v, ps, ns, floor](Graph& gg) {
    if (!gg.needs_grad(p)) return;
    Tensor& pt2 = gg.tensor(p);
    pt2.alloc_grad();
    const double og = gg.tensor(v).g[0];
    for (int i : ps) {
      const double pv = pt2.v[static_cast<size_t>(i)];
      if (pv > floor) pt2.g[static_cast<size_t>(i)] -= og * 0.5 / (static_cast<double>(ps.size()) * pv);
    }
    for (int i : ns) {
      const double q = 1.0 - pt2.v[static_cast<size_t>(i)];
      if (q > floor) pt2.g[static_cast<size_t>(i)] += og * 0.5 / (static_cast<double>(ns.size()) * q);
    }
  };
  return v;
}

// --- init helpers -----------------------------------------------------------

// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
// Uniform(-s, s) with s chosen so the weight variance is gain^2 / fan_in.
// gain 1 keeps pre-activation scale for linear/sigmoid outputs; layers feeding
// a relu want gain sqrt(2) or deep stacks attenuate the signal geometrically.
inline Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng, double gain = 1.0) {
  Tensor t(std::move(shape));
  const double s = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : t.v) v = rng.uniform(-s, s);
  return t;
}

}  // namespace linerec
