#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "linerec/charbox.hpp"
#include "linerec/lm.hpp"
#include "linerec/model.hpp"
#include "linerec/trajectory.hpp"

// Inference-side decoding: NMS over per-region candidates, left-to-right
// ordering, CTC-style frame construction, prefix beam search with shallow
// language-model fusion, and point-to-character assignment for trajectories.

namespace linerec {

struct DecodeParams {
  double loc_weight = 0.8;    // confidence mix: loc_weight*p_loc + (1-loc_weight)*max p_cls
  double iou_thresh = 0.5;    // horizontal-interval IoU for suppression
  double score_thresh = 0.5;  // candidates below this never enter NMS
  double lm_weight = 0.3;
  int beam_width = 16;
};

struct Transcription {
  std::vector<CharBox> seg;  // survivors, x-sorted, class + score filled
  std::vector<int> rec;      // their class ids, same order
};

inline Transcription nms_transcribe(const PredictionGrid& grid,
                                    const DecodeParams& p = DecodeParams{}) {
  struct Cand {
    CharBox box;
    int region;
  };
  std::vector<Cand> cands;
  for (int n = 0; n < grid.geom.w_enc; ++n) {
    double best = -1.0;
    int best_c = 0;
    for (int c = 0; c < grid.n_cls; ++c) {
      const double v = grid.cls(n, c);
      if (v > best) {
        best = v;
        best_c = c;
      }
    }
    const double score = p.loc_weight * grid.loc(n) + (1.0 - p.loc_weight) * best;
    if (score < p.score_thresh) continue;
    CharBox b = decode_box(grid, n);
    b.class_id = best_c;
    b.score = score;
    cands.push_back({b, n});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.box.score != b.box.score) return a.box.score > b.box.score;
    if (a.box.cx() != b.box.cx()) return a.box.cx() < b.box.cx();
    return a.region < b.region;
  });
  std::vector<Cand> kept;
  for (const auto& c : cands) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (interval_iou(k.box, c.box) >= p.iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(), [](const Cand& a, const Cand& b) {
    if (a.box.cx() != b.box.cx()) return a.box.cx() < b.box.cx();
    return a.region < b.region;
  });
  Transcription out;
  for (const auto& k : kept) {
    out.seg.push_back(k.box);
    out.rec.push_back(k.box.class_id);
  }
  return out;
}

// Frame n: index 0 carries the blank mass 1 - p_loc^n, the remaining mass
// p_loc^n is split by the class distribution.
inline std::vector<std::vector<double>> to_ctc_frames(const PredictionGrid& grid) {
  std::vector<std::vector<double>> frames;
  frames.reserve(static_cast<size_t>(grid.geom.w_enc));
  for (int n = 0; n < grid.geom.w_enc; ++n) {
    std::vector<double> f(static_cast<size_t>(grid.n_cls) + 1);
    f[0] = 1.0 - grid.loc(n);
    for (int c = 0; c < grid.n_cls; ++c) f[static_cast<size_t>(c) + 1] = grid.loc(n) * grid.cls(n, c);
    frames.push_back(std::move(f));
  }
  return frames;
}

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logadd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double lg(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

inline double lm_bonus(const NGramModel* lm, double w, const std::vector<int>& prefix, int c) {
  if (!lm || w == 0.0) return 0.0;
  std::vector<int> ctx;
  const size_t n = prefix.size();
  if (n >= 2) ctx = {prefix[n - 2], prefix[n - 1]};
  else if (n == 1) ctx = {lm->bos(), prefix[0]};
  else ctx = {lm->bos(), lm->bos()};
  return w * lm->logp(c, ctx);
}

}  // namespace detail

// CTC prefix beam search (log domain) with shallow fusion: every label
// extension adds lm_weight * log P(label | previous two labels). Prefix
// hypotheses keep separate blank-ending / label-ending mass; ties break
// lexicographically so decoding is reproducible.
inline std::vector<int> beam_search_lm(const std::vector<std::vector<double>>& frames,
                                       const NGramModel* lm = nullptr, int beam_width = 16,
                                       double lm_weight = 0.3) {
  if (beam_width < 1) throw std::invalid_argument("beam_search_lm: beam width must be >= 1");
  using detail::kNegInf;
  using detail::lg;
  using detail::logadd;
  struct Mass {
    double b = kNegInf, nb = kNegInf;
    double total() const { return logadd(b, nb); }
  };
  using Beam = std::map<std::vector<int>, Mass>;
  Beam beam;
  beam[{}] = Mass{0.0, kNegInf};
  for (const auto& f : frames) {
    if (f.empty()) throw std::invalid_argument("beam_search_lm: empty frame");
    const int n_lab = static_cast<int>(f.size()) - 1;
    Beam next;
    for (const auto& [pre, m] : beam) {
      const double tot = m.total();
      next[pre].b = logadd(next[pre].b, tot + lg(f[0]));
      for (int c = 0; c < n_lab; ++c) {
        const double pc = lg(f[static_cast<size_t>(c) + 1]);
        if (pc == kNegInf) continue;
        if (!pre.empty() && pre.back() == c) {
          // repeated symbol: only blank-separated mass starts a new label
          Mass& same = next[pre];
          same.nb = logadd(same.nb, m.nb + pc);
          std::vector<int> ext = pre;
          ext.push_back(c);
          Mass& t = next[ext];
          t.nb = logadd(t.nb, m.b + pc + detail::lm_bonus(lm, lm_weight, pre, c));
        } else {
          std::vector<int> ext = pre;
          ext.push_back(c);
          Mass& t = next[ext];
          t.nb = logadd(t.nb, tot + pc + detail::lm_bonus(lm, lm_weight, pre, c));
        }
      }
    }
    if (static_cast<int>(next.size()) > beam_width) {
      std::vector<std::pair<double, const std::vector<int>*>> order;
      order.reserve(next.size());
      for (const auto& [pre, m] : next) order.emplace_back(m.total(), &pre);
      std::sort(order.begin(), order.end(),
                [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return *a.second < *b.second;
                });
      Beam pruned;
      for (int k = 0; k < beam_width; ++k) pruned.emplace(*order[static_cast<size_t>(k)].second,
                                                          next.at(*order[static_cast<size_t>(k)].second));
      next = std::move(pruned);
    }
    beam = std::move(next);
  }
  const std::vector<int>* best = nullptr;
  double best_score = kNegInf;
  for (const auto& [pre, m] : beam) {
    const double t = m.total();
    if (t > best_score) {  // map order makes ties pick the lexicographically smallest
      best_score = t;
      best = &pre;
    }
  }
  return best ? *best : std::vector<int>{};
}

// Per-point character index: nearest box by Euclidean distance to the box
// boundary (0 inside), ties to the leftmost box in the x-sorted list. An
// empty box list marks every point as -1.
inline std::vector<int> assign_points(const Trajectory& t, const std::vector<CharBox>& boxes) {
  std::vector<int> out;
  for (const auto& s : t.strokes) {
    for (const auto& pt : s.pts) {
      if (boxes.empty()) {
        out.push_back(-1);
        continue;
      }
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < boxes.size(); ++k) {
        const CharBox& b = boxes[k];
        const double dx = std::max({b.x_min - pt[0], 0.0, pt[0] - b.x_max});
        const double dy = std::max({b.y_min - pt[1], 0.0, pt[1] - b.y_max});
        const double d = std::hypot(dx, dy);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      out.push_back(best);
    }
  }
  return out;
}

}  // namespace linerec
