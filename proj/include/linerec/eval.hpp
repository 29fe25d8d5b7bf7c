#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "linerec/align.hpp"
#include "linerec/charbox.hpp"

// Recognition and segmentation metrics. Edit operations are counted with the
// same alignment (and tie order) the training-time matcher uses, so reported
// errors and training matches never disagree about an alignment.

namespace linerec {

inline EditCounts edit_counts(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (gt.empty()) throw std::invalid_argument("edit_counts: ground truth must not be empty");
  return align_sequences(gt, pred).counts;  // del = gt chars missed, ins = extra predictions
}

struct RecognitionScores {
  double ar = 0.0, cr = 0.0;
  long n_total = 0, del = 0, sub = 0, ins = 0;
};

// Aggregated accurate rate / correct rate over a sample set:
// AR = (N - D - S - I) / N, CR = (N - D - S) / N. AR may go negative under
// heavy insertion; it is reported as-is.
inline RecognitionScores ar_cr(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pred_gt) {
  RecognitionScores s;
  for (const auto& [pred, gt] : pred_gt) {
    const EditCounts c = edit_counts(pred, gt);
    s.n_total += static_cast<long>(gt.size());
    s.del += c.del;
    s.sub += c.sub;
    s.ins += c.ins;
  }
  if (s.n_total <= 0) throw std::invalid_argument("ar_cr: no ground-truth characters");
  s.ar = static_cast<double>(s.n_total - s.del - s.sub - s.ins) / s.n_total;
  s.cr = static_cast<double>(s.n_total - s.del - s.sub) / s.n_total;
  return s;
}

// Mean over samples of 1 - editdist / max(|pred|, |gt|).
inline double ned(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pred_gt) {
  if (pred_gt.empty()) throw std::invalid_argument("ned: no samples");
  double sum = 0.0;
  for (const auto& [pred, gt] : pred_gt) {
    if (gt.empty()) throw std::invalid_argument("ned: ground truth must not be empty");
    const long d = edit_counts(pred, gt).distance();
    sum += 1.0 - static_cast<double>(d) / static_cast<double>(std::max(pred.size(), gt.size()));
  }
  return sum / static_cast<double>(pred_gt.size());
}

struct SegScores {
  double mean_iou = 0.0;  // over matched pairs
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  int matched = 0;
};

// Greedy left-to-right matching of two x-sorted box lists at the given
// horizontal-IoU threshold.
inline SegScores seg_quality(const std::vector<CharBox>& pred, const std::vector<CharBox>& gt,
                             double iou_thresh = 0.5) {
  SegScores s;
  size_t i = 0, j = 0;
  double iou_sum = 0.0;
  while (i < pred.size() && j < gt.size()) {
    const double iou = interval_iou(pred[i], gt[j]);
    if (iou >= iou_thresh) {
      ++s.matched;
      iou_sum += iou;
      ++i;
      ++j;
    } else if (pred[i].cx() < gt[j].cx()) {
      ++i;
    } else {
      ++j;
    }
  }
  if (s.matched > 0) s.mean_iou = iou_sum / s.matched;
  if (!pred.empty()) s.precision = static_cast<double>(s.matched) / pred.size();
  if (!gt.empty()) s.recall = static_cast<double>(s.matched) / gt.size();
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace linerec
