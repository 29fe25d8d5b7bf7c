#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "linerec/align.hpp"
#include "linerec/charbox.hpp"
#include "linerec/checkpoint.hpp"
#include "linerec/graph.hpp"
#include "linerec/model.hpp"
#include "linerec/ops.hpp"

// Weak supervision from transcripts alone: recognition output is aligned to
// the transcript by edit distance, agreeing positions seed and refine a
// per-sample store of pseudo boxes, and the store decides which regions carry
// box / class / location losses. Regions provably character-free (strictly
// between two consecutive known boxes) are negatives; everything else outside
// the positives is ignored.

namespace linerec {

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (prediction index i, transcript index j)
  long edit_distance = 0;
};

inline MatchResult match(const std::vector<int>& rec, const std::vector<int>& gt) {
  if (gt.empty()) throw std::invalid_argument("match: transcript must not be empty");
  Alignment a = align_sequences(gt, rec);
  MatchResult m;
  m.edit_distance = a.counts.distance();
  m.pairs.reserve(a.matches.size());
  for (const auto& [j, i] : a.matches) m.pairs.emplace_back(i, j);
  return m;
}

struct PseudoEntry {
  bool set = false;
  CharBox box;
  double score = 0.0;
};

// One entry slot per transcript character, all starting empty.
struct PseudoBoxStore {
  std::map<std::string, std::vector<PseudoEntry>> samples;

  std::vector<PseudoEntry>& entries(const std::string& id, size_t transcript_len) {
    auto it = samples.find(id);
    if (it == samples.end())
      it = samples.emplace(id, std::vector<PseudoEntry>(transcript_len)).first;
    else if (it->second.size() != transcript_len)
      throw std::invalid_argument("PseudoBoxStore: sample " + id + " has " +
                                  std::to_string(it->second.size()) + " entries, transcript has " +
                                  std::to_string(transcript_len));
    return it->second;
  }

  void save(const std::string& path) const {
    ByteWriter w;
    w.magic("LRPS");
    w.u32(1);
    w.u64(samples.size());
    for (const auto& [id, entries] : samples) {
      w.str(id);
      w.u64(entries.size());
      for (const auto& e : entries) {
        w.u8(e.set ? 1 : 0);
        if (e.set) {
          w.f64(e.box.x_min);
          w.f64(e.box.y_min);
          w.f64(e.box.x_max);
          w.f64(e.box.y_max);
          w.i32(e.box.class_id);
          w.f64(e.score);
        }
      }
    }
    w.to_file(path);
  }

  static PseudoBoxStore load(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.expect_magic("LRPS");
    const uint32_t version = r.u32();
    if (version != 1)
      throw std::runtime_error("PseudoBoxStore: unsupported version " + std::to_string(version));
    PseudoBoxStore s;
    const uint64_t n = r.u64();
    for (uint64_t k = 0; k < n; ++k) {
      const std::string id = r.str();
      std::vector<PseudoEntry> entries(r.u64());
      for (auto& e : entries) {
        e.set = r.u8() != 0;
        if (e.set) {
          e.box.x_min = r.f64();
          e.box.y_min = r.f64();
          e.box.x_max = r.f64();
          e.box.y_max = r.f64();
          e.box.class_id = r.i32();
          e.score = r.f64();
          e.box.score = e.score;
        }
      }
      s.samples.emplace(id, std::move(entries));
    }
    return s;
  }
};

// Blending weight for refining a stored box with a fresh prediction. Sharply
// favors whichever box carries the higher score.
inline double pseudo_lambda(double stored_score, double new_score) {
  const double eb = std::exp(10.0 * stored_score);
  const double er = std::exp(10.0 * new_score);
  return eb / (eb + er);
}

// Refines the store entries at matched transcript positions with the matched
// segmentation boxes. Empty entries adopt the prediction outright.
inline void update_pseudo_boxes(std::vector<PseudoEntry>& entries, const MatchResult& m,
                                const std::vector<CharBox>& seg) {
  for (const auto& [i, j] : m.pairs) {
    if (i < 0 || static_cast<size_t>(i) >= seg.size())
      throw std::invalid_argument("update_pseudo_boxes: matched prediction index " +
                                  std::to_string(i) + " outside segmentation result");
    if (j < 0 || static_cast<size_t>(j) >= entries.size())
      throw std::invalid_argument("update_pseudo_boxes: matched transcript index " +
                                  std::to_string(j) + " outside store entry list");
    const CharBox& r_seg = seg[static_cast<size_t>(i)];
    const double r_sco = r_seg.score;
    if (!(r_sco >= 0.0 && r_sco <= 1.0))
      throw std::invalid_argument("update_pseudo_boxes: prediction score " +
                                  std::to_string(r_sco) + " outside [0,1]");
    PseudoEntry& e = entries[static_cast<size_t>(j)];
    if (!e.set) {
      e.set = true;
      e.box = r_seg;
      e.score = r_sco;
    } else {
      if (!(e.score >= 0.0 && e.score <= 1.0))
        throw std::invalid_argument("update_pseudo_boxes: stored score " +
                                    std::to_string(e.score) + " outside [0,1]");
      const double lam = pseudo_lambda(e.score, r_sco);
      e.box.x_min = lam * e.box.x_min + (1.0 - lam) * r_seg.x_min;
      e.box.y_min = lam * e.box.y_min + (1.0 - lam) * r_seg.y_min;
      e.box.x_max = lam * e.box.x_max + (1.0 - lam) * r_seg.x_max;
      e.box.y_max = lam * e.box.y_max + (1.0 - lam) * r_seg.y_max;
      e.score = lam * e.score + (1.0 - lam) * r_sco;
    }
    e.box.class_id = -1;  // class comes from the transcript position, not the box
    e.box.score = e.score;
  }
}

// Length-agreement baseline: when the recognition result has exactly the
// transcript's length, the whole store is replaced by the segmentation
// result; otherwise nothing changes.
inline void text_length_update(std::vector<PseudoEntry>& entries, const std::vector<int>& rec,
                               const std::vector<int>& gt, const std::vector<CharBox>& seg) {
  if (rec.size() != gt.size()) return;
  if (seg.size() != rec.size())
    throw std::invalid_argument("text_length_update: segmentation count " +
                                std::to_string(seg.size()) + " does not match recognition " +
                                std::to_string(rec.size()));
  if (entries.size() != gt.size())
    throw std::invalid_argument("text_length_update: store entry count mismatch");
  for (size_t j = 0; j < entries.size(); ++j) {
    const double sco = seg[j].score;
    if (!(sco >= 0.0 && sco <= 1.0))
      throw std::invalid_argument("text_length_update: prediction score outside [0,1]");
    entries[j].set = true;
    entries[j].box = seg[j];
    entries[j].box.class_id = -1;
    entries[j].score = sco;
    entries[j].box.score = sco;
  }
}

struct RegionAssignment {
  std::vector<std::pair<int, int>> m_ptr;  // (transcript index j, region n)
  std::vector<int> t_loc;                  // positive regions, ascending
  std::vector<int> n_loc;                  // negative regions, ascending
  std::vector<int> ignored;                // everything else, ascending
  int dropped = 0;  // matched entries discarded because their region was taken
};

// Projects stored boxes onto prediction regions. Two centers in one region
// keep only the leftmost transcript position; the collision is counted in
// `dropped`. Negatives are regions strictly between those of consecutive
// non-empty entries; the rest are ignored.
inline RegionAssignment assign_regions(const std::vector<PseudoEntry>& entries,
                                       const GridGeom& g) {
  if (g.w_enc < 1) throw std::invalid_argument("assign_regions: empty prediction grid");
  RegionAssignment a;
  std::vector<int> region_of(entries.size(), -1);
  std::vector<bool> taken(static_cast<size_t>(g.w_enc), false);
  for (size_t j = 0; j < entries.size(); ++j) {
    if (!entries[j].set) continue;
    int n = static_cast<int>(std::floor(entries[j].box.cx() / g.region_width));
    n = std::clamp(n, 0, g.w_enc - 1);
    region_of[j] = n;
    if (taken[static_cast<size_t>(n)]) {
      ++a.dropped;
      continue;
    }
    taken[static_cast<size_t>(n)] = true;
    a.m_ptr.emplace_back(static_cast<int>(j), n);
  }
  std::vector<char> state(static_cast<size_t>(g.w_enc), 0);  // 0 ignored, 1 pos, 2 neg
  for (const auto& [j, n] : a.m_ptr) state[static_cast<size_t>(n)] = 1;
  int prev = -1;
  for (size_t j = 0; j < entries.size(); ++j) {
    if (region_of[j] < 0) {
      prev = -1;  // an empty entry breaks the "no character in between" guarantee
      continue;
    }
    if (prev >= 0)
      for (int n = std::min(prev, region_of[j]) + 1; n < std::max(prev, region_of[j]); ++n)
        if (state[static_cast<size_t>(n)] == 0) state[static_cast<size_t>(n)] = 2;
    prev = region_of[j];
  }
  for (int n = 0; n < g.w_enc; ++n) {
    if (state[static_cast<size_t>(n)] == 1) a.t_loc.push_back(n);
    else if (state[static_cast<size_t>(n)] == 2) a.n_loc.push_back(n);
    else a.ignored.push_back(n);
  }
  return a;
}

// Fully supervised assignment from ground-truth boxes: every region is either
// positive or negative, nothing is ignored.
inline RegionAssignment supervise_full(const std::vector<PseudoEntry>& entries,
                                       const GridGeom& g) {
  RegionAssignment a = assign_regions(entries, g);
  for (int n : a.ignored) a.n_loc.push_back(n);
  a.ignored.clear();
  std::sort(a.n_loc.begin(), a.n_loc.end());
  return a;
}

// Ground-truth boxes as a fully populated store with score 1.
inline std::vector<PseudoEntry> store_from_boxes(const std::vector<CharBox>& boxes,
                                                 const std::vector<int>& transcript) {
  if (boxes.size() != transcript.size())
    throw std::invalid_argument("store_from_boxes: " + std::to_string(boxes.size()) +
                                " boxes for " + std::to_string(transcript.size()) +
                                " characters");
  std::vector<PseudoEntry> entries(boxes.size());
  for (size_t j = 0; j < boxes.size(); ++j) {
    entries[j].set = true;
    entries[j].box = boxes[j];
    entries[j].box.class_id = -1;
    entries[j].score = 1.0;
    entries[j].box.score = 1.0;
  }
  return entries;
}

struct LossBreakdown {
  double bbox = 0.0, cls = 0.0, loc = 0.0, conr = 0.0, total = 0.0;
  bool has_conr = false;
  Value total_v;  // live on the tape, ready for backward()
};

// Builds the loss sub-graph for one sample on the live tape. Picks follow
// M_ptr in transcript order; everything outside the assignment contributes
// exactly nothing.
inline LossBreakdown compute_losses(Graph& g, const ForwardValues& fv,
                                    const RegionAssignment& a,
                                    const std::vector<PseudoEntry>& entries,
                                    const std::vector<int>& gt, bool use_ctx) {
  std::vector<int> bbox_rows;
  std::vector<double> bbox_targets;
  std::vector<std::pair<int, int>> cls_picks;
  for (const auto& [j, n] : a.m_ptr) {
    if (j < 0 || static_cast<size_t>(j) >= gt.size())
      throw std::invalid_argument("compute_losses: assignment index outside transcript");
    if (n < 0 || n >= fv.geom.w_enc)
      throw std::invalid_argument("compute_losses: assignment region outside grid");
    bbox_rows.push_back(n);
    const auto raw = encode_box(fv.geom, n, entries[static_cast<size_t>(j)].box);
    bbox_targets.insert(bbox_targets.end(), raw.begin(), raw.end());
    cls_picks.emplace_back(n, gt[static_cast<size_t>(j)]);
  }
  LossBreakdown out;
  Value l_bbox = mse_pick_mean(g, fv.p_bbox, bbox_rows, bbox_targets);
  Value l_cls = nll_pick_mean(g, fv.p_cls, cls_picks);
  Value l_loc = loc_nll(g, fv.p_loc, a.t_loc, a.n_loc);
  std::vector<Value> terms{l_bbox, l_cls, l_loc};
  if (use_ctx) {
    if (!fv.has_ctx)
      throw std::invalid_argument("compute_losses: context loss requested without context pass");
    Value l_conr = nll_pick_mean(g, fv.p_ctx, cls_picks);
    out.conr = g.tensor(l_conr).v[0];
    out.has_conr = true;
    terms.push_back(l_conr);
  }
  out.total_v = add_scalars(g, terms);
  out.bbox = g.tensor(l_bbox).v[0];
  out.cls = g.tensor(l_cls).v[0];
  out.loc = g.tensor(l_loc).v[0];
  out.total = g.tensor(out.total_v).v[0];
  return out;
}

}  // namespace linerec
