#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "linerec/data.hpp"
#include "linerec/decode.hpp"
#include "linerec/eval.hpp"
#include "linerec/model.hpp"
#include "linerec/pathsig.hpp"
#include "linerec/synth.hpp"
#include "linerec/weaksup.hpp"

// Training orchestration. One stage function covers both phases: with
// real_ratio = 0 every batch slot is a freshly synthesized, fully box-
// supervised line (pretraining); with real_ratio > 0 slots are drawn from a
// fixed "real" pool whose boxes are never available, so supervision comes
// from the pseudo-box store fed by the model's own matched recognitions.

namespace linerec {

struct PreparedSample {
  std::string id;
  std::vector<int> gt;
  Tensor input;
  int width_in = 0;
  bool is_online = false;
  Raster raster;               // offline input, kept for visualization
  Trajectory traj;             // online input
  std::vector<CharBox> gt_boxes;
  bool has_boxes = false;
};

inline PreparedSample prepare_sample(const Model& m, const ManifestEntry& e) {
  const TextLineSample s = load_entry(e);
  PreparedSample out;
  out.id = e.id;
  out.gt = e.transcript;
  out.is_online = e.is_online;
  out.gt_boxes = e.boxes;
  out.has_boxes = e.has_boxes;
  if (e.is_online) {
    out.traj = s.traj;
    const SignatureMap map = render_signature_map(s.traj, m.config().height);
    out.input = m.make_input(map);
    out.width_in = map.w;
  } else {
    out.raster = s.raster;
    out.input = m.make_input(s.raster);
    out.width_in = s.raster.w;
  }
  return out;
}

inline std::vector<PreparedSample> prepare_dataset(const Model& m, const std::string& manifest) {
  std::vector<PreparedSample> out;
  for (const auto& e : load_manifest(manifest)) out.push_back(prepare_sample(m, e));
  return out;
}

// copy the numbers of one live forward pass into a plain grid
inline PredictionGrid grid_from_values(const Graph& g, const ForwardValues& fv, int n_cls) {
  PredictionGrid grid;
  grid.geom = fv.geom;
  grid.n_cls = n_cls;
  grid.p_loc = g.tensor(fv.p_loc).v;
  grid.p_bbox = g.tensor(fv.p_bbox).v;
  grid.p_cls = g.tensor(fv.p_cls).v;
  if (fv.has_ctx) {
    grid.p_ctx = g.tensor(fv.p_ctx).v;
    grid.has_ctx = true;
  }
  return grid;
}

struct StageOpts {
  int iters = 1000;
  int batch = 8;
  double lr = 0.01;
  bool lr_decay = true;  // x0.1 at 25%, 50%, 75% of iters
  int len_lo = 3, len_hi = 6;
  uint64_t seed = 1;
  SynthParams synth = SynthParams::clean();  // domain of the synthetic slots
  double real_ratio = 0.0;                   // probability a batch slot is a real sample
  bool use_conr = false;                     // train the recurrent branch + its loss
  bool text_length = false;                  // length-gated update instead of matching
  int log_every = 50;
  std::string checkpoint_path;  // when set, saved every checkpoint_every iters
  int checkpoint_every = 0;
};

inline double lr_at(const StageOpts& o, int it) {
  if (!o.lr_decay) return o.lr;
  double lr = o.lr;
  for (int q = 1; q <= 3; ++q)
    if (it >= o.iters * q / 4) lr *= 0.1;
  return lr;
}

struct StageResult {
  std::vector<double> iter_loss;  // batch-mean total loss per iteration
  double initial() const { return iter_loss.empty() ? 0.0 : iter_loss.front(); }
  double final_loss() const { return iter_loss.empty() ? 0.0 : iter_loss.back(); }
};

// Runs one training stage in place. `pool` may be empty when real_ratio is 0.
// The pseudo-box store accumulates across calls; pass a fresh one per run.
inline StageResult train_stage(Model& m, const StageOpts& o,
                               const std::vector<PreparedSample>& pool, PseudoBoxStore& store,
                               std::ostream* log = nullptr) {
  if (o.iters < 0 || o.batch < 1) throw std::invalid_argument("train_stage: bad iters/batch");
  if (o.real_ratio < 0.0 || o.real_ratio > 1.0)
    throw std::invalid_argument("train_stage: real_ratio must be in [0,1]");
  if (o.real_ratio > 0.0 && pool.empty())
    throw std::invalid_argument("train_stage: real_ratio > 0 but the real pool is empty");
  Graph& g = m.graph();
  const int n_cls = m.config().n_cls;
  Rng rng(o.seed);
  StageResult res;
  res.iter_loss.reserve(static_cast<size_t>(o.iters));
  auto emit = [&](int it, const LossBreakdown& mean, double lr) {
    if (!log) return;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "iter %6d lr %.6f total %.6f bbox %.6f cls %.6f loc %.6f conr %.6f\n", it, lr,
                  mean.total, mean.bbox, mean.cls, mean.loc, mean.conr);
    (*log) << buf;
  };
  for (int it = 0; it < o.iters; ++it) {
    const double lr = lr_at(o, it);
    g.zero_grad();
    LossBreakdown mean{};
    for (int b = 0; b < o.batch; ++b) {
      const bool real_slot = rng.uniform() < o.real_ratio;
      LossBreakdown lb;
      if (real_slot) {
        const PreparedSample& ps = pool[static_cast<size_t>(rng.uniform_int(
            0, static_cast<int>(pool.size()) - 1))];
        auto& entries = store.entries(ps.id, static_cast<int>(ps.gt.size()));
        const ForwardValues fv = m.forward_values(ps.input, o.use_conr, ps.width_in);
        const PredictionGrid grid = grid_from_values(g, fv, n_cls);
        const Transcription tr = nms_transcribe(grid);
        if (o.text_length) {
          text_length_update(entries, tr.rec, ps.gt, tr.seg);
        } else {
          const MatchResult mm = match(tr.rec, ps.gt);
          update_pseudo_boxes(entries, mm, tr.seg);
        }
        const RegionAssignment a = assign_regions(entries, fv.geom);
        lb = compute_losses(g, fv, a, entries, ps.gt, o.use_conr);
      } else {
        const std::vector<int> text = chain_text(rng, n_cls, o.len_lo, o.len_hi);
        const TextLineSample s = synth_offline_line(text, rng.next_u64(), o.synth);
        const Tensor input = m.make_input(s.raster);
        const ForwardValues fv = m.forward_values(input, o.use_conr, s.raster.w);
        const std::vector<PseudoEntry> entries = store_from_boxes(s.boxes, text);
        const RegionAssignment a = supervise_full(entries, fv.geom);
        lb = compute_losses(g, fv, a, entries, text, o.use_conr);
      }
      if (!std::isfinite(lb.total))
        throw NumericError("train_stage: non-finite loss at iteration " + std::to_string(it + 1));
      g.backward(lb.total_v, 1.0 / o.batch);
      g.reset_tape();
      mean.bbox += lb.bbox / o.batch;
      mean.cls += lb.cls / o.batch;
      mean.loc += lb.loc / o.batch;
      mean.conr += lb.conr / o.batch;
      mean.total += lb.total / o.batch;
    }
    g.sgd_step(lr);
    res.iter_loss.push_back(mean.total);
    if ((it + 1) % o.log_every == 0 || it + 1 == o.iters) emit(it + 1, mean, lr);
    if (!o.checkpoint_path.empty() && o.checkpoint_every > 0 &&
        (it + 1) % o.checkpoint_every == 0)
      m.save(o.checkpoint_path);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation over a prepared dataset: NMS transcription (optionally replaced
// by LM-fused beam search), recognition metrics, and segmentation quality
// where the manifest carries ground-truth boxes.

struct EvalRow {
  std::string id;
  std::string gt, pred;
  long edit_distance = 0;
  double seg_f1 = -1.0;  // -1 when no ground-truth boxes exist
};

struct EvalResult {
  RecognitionScores rec;
  double ned_score = 0.0;
  double seg_f1 = -1.0;     // micro-averaged; -1 when no sample had boxes
  double mean_iou = -1.0;   // over all matched pairs
  std::vector<EvalRow> rows;
};

inline EvalResult evaluate(Model& m, const std::vector<PreparedSample>& samples, bool use_lm,
                           const NGramModel* lm, const DecodeParams& dp = DecodeParams{}) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  if (use_lm && !lm) throw std::invalid_argument("evaluate: use_lm without a language model");
  EvalResult out;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  long seg_matched = 0, seg_pred = 0, seg_gt = 0;
  double iou_sum = 0.0;
  for (const auto& ps : samples) {
    const PredictionGrid grid = m.forward(ps.input, false, ps.width_in);
    const Transcription tr = nms_transcribe(grid, dp);
    std::vector<int> rec = tr.rec;
    if (use_lm) rec = beam_search_lm(to_ctc_frames(grid), lm, dp.beam_width, dp.lm_weight);
    EvalRow row;
    row.id = ps.id;
    row.gt = transcript_string(ps.gt);
    row.pred = transcript_string(rec);
    row.edit_distance = edit_counts(rec, ps.gt).distance();
    if (ps.has_boxes) {
      const SegScores ss = seg_quality(tr.seg, ps.gt_boxes, dp.iou_thresh);
      row.seg_f1 = ss.f1;
      seg_matched += ss.matched;
      seg_pred += static_cast<long>(tr.seg.size());
      seg_gt += static_cast<long>(ps.gt_boxes.size());
      iou_sum += ss.mean_iou * ss.matched;
    }
    out.rows.push_back(std::move(row));
    pairs.emplace_back(std::move(rec), ps.gt);
  }
  out.rec = ar_cr(pairs);
  out.ned_score = ned(pairs);
  if (seg_gt > 0) {
    const double prec = seg_pred > 0 ? static_cast<double>(seg_matched) / seg_pred : 0.0;
    const double recall = static_cast<double>(seg_matched) / seg_gt;
    out.seg_f1 = prec + recall > 0 ? 2 * prec * recall / (prec + recall) : 0.0;
    out.mean_iou = seg_matched > 0 ? iou_sum / seg_matched : 0.0;
  }
  return out;
}

}  // namespace linerec
