#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "linerec/checkpoint.hpp"
#include "linerec/rng.hpp"

// Character-level tri-gram model with add-k smoothing inside a seen context
// and backoff to bigram/unigram for unseen contexts. Every conditional is an
// exact distribution over {class ids} ∪ {EOS}. BOS pads contexts only and is
// never predicted.

namespace linerec {

class NGramModel {
 public:
  NGramModel() = default;

  static NGramModel train(const std::vector<std::vector<int>>& corpus, int n_cls,
                          double add_k = 0.01) {
    if (n_cls < 1) throw std::invalid_argument("NGramModel: empty vocabulary");
    if (corpus.empty()) throw std::invalid_argument("NGramModel: empty corpus");
    NGramModel m;
    m.n_cls_ = n_cls;
    m.k_ = add_k;
    for (const auto& seq : corpus) {
      int c1 = m.bos(), c2 = m.bos();
      for (size_t i = 0; i <= seq.size(); ++i) {
        const int label = i < seq.size() ? seq[i] : m.eos();
        if (label < 0 || label >= n_cls + 1)
          throw std::invalid_argument("NGramModel: label outside vocabulary");
        m.tri_[key2(c1, c2)][label]++;
        m.bi_[c2][label]++;
        m.uni_[label]++;
        m.uni_total_++;
        c1 = c2;
        c2 = label;
      }
    }
    return m;
  }

  int n_cls() const { return n_cls_; }
  int eos() const { return n_cls_; }        // predicted sentence end
  int bos() const { return n_cls_ + 1; }    // context padding only
  int vocab() const { return n_cls_ + 1; }  // predictable symbols incl. EOS

  // log P(label | up to two preceding symbols). Shorter contexts are
  // BOS-padded on the left. An out-of-vocabulary label gets the unigram
  // floor probability.
  double logp(int label, const std::vector<int>& context) const {
    if (n_cls_ == 0) throw std::logic_error("NGramModel: not trained");
    if (label < 0 || label > n_cls_) return std::log(k_ / (uni_total_ + k_ * vocab()));
    int c1 = bos(), c2 = bos();
    if (context.size() >= 2) {
      c1 = context[context.size() - 2];
      c2 = context[context.size() - 1];
    } else if (context.size() == 1) {
      c2 = context[0];
    }
    if (auto it = tri_.find(key2(c1, c2)); it != tri_.end())
      return smoothed(it->second, label);
    if (auto it = bi_.find(c2); it != bi_.end()) return smoothed(it->second, label);
    return smoothed(uni_, label);
  }

  // Draws the next symbol from the raw (unsmoothed) counts of the deepest
  // context with observations, so sampling never invents transitions the
  // corpus does not contain. With exclude_eos the draw renormalizes over
  // non-EOS continuations, falling back to shallower contexts when EOS was
  // the only continuation.
  int sample_next(const std::vector<int>& context, Rng& rng, bool exclude_eos) const {
    int c1 = bos(), c2 = bos();
    if (context.size() >= 2) {
      c1 = context[context.size() - 2];
      c2 = context[context.size() - 1];
    } else if (context.size() == 1) {
      c2 = context[0];
    }
    if (auto it = tri_.find(key2(c1, c2)); it != tri_.end())
      if (int s = draw(it->second, rng, exclude_eos); s >= 0) return s;
    if (auto it = bi_.find(c2); it != bi_.end())
      if (int s = draw(it->second, rng, exclude_eos); s >= 0) return s;
    if (int s = draw(uni_, rng, exclude_eos); s >= 0) return s;
    throw std::logic_error("NGramModel: no sampleable symbol");
  }

  void save(const std::string& path) const {
    ByteWriter w;
    w.magic("LRLM");
    w.u32(1);
    w.u32(static_cast<uint32_t>(n_cls_));
    w.f64(k_);
    w.u64(static_cast<uint64_t>(uni_total_));
    auto write_counts = [&w](const std::map<int, long>& c) {
      w.u32(static_cast<uint32_t>(c.size()));
      for (const auto& [label, n] : c) {
        w.i32(label);
        w.u64(static_cast<uint64_t>(n));
      }
    };
    w.u32(static_cast<uint32_t>(tri_.size()));
    for (const auto& [ctx, counts] : tri_) {
      w.u64(static_cast<uint64_t>(ctx));
      write_counts(counts);
    }
    w.u32(static_cast<uint32_t>(bi_.size()));
    for (const auto& [ctx, counts] : bi_) {
      w.i32(ctx);
      write_counts(counts);
    }
    write_counts(uni_);
    w.to_file(path);
  }

  static NGramModel load(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.expect_magic("LRLM");
    if (r.u32() != 1) throw std::runtime_error("unsupported LM version in " + path);
    NGramModel m;
    m.n_cls_ = static_cast<int>(r.u32());
    m.k_ = r.f64();
    m.uni_total_ = static_cast<long>(r.u64());
    auto read_counts = [&r]() {
      std::map<int, long> c;
      const uint32_t n = r.u32();
      for (uint32_t i = 0; i < n; ++i) {
        const int label = r.i32();
        c[label] = static_cast<long>(r.u64());
      }
      return c;
    };
    const uint32_t nt = r.u32();
    for (uint32_t i = 0; i < nt; ++i) {
      const auto ctx = static_cast<int64_t>(r.u64());
      m.tri_[ctx] = read_counts();
    }
    const uint32_t nb = r.u32();
    for (uint32_t i = 0; i < nb; ++i) {
      const int ctx = r.i32();
      m.bi_[ctx] = read_counts();
    }
    m.uni_ = read_counts();
    return m;
  }

 private:
  static int64_t key2(int a, int b) { return static_cast<int64_t>(a) * 1000003 + b; }

  double smoothed(const std::map<int, long>& counts, int label) const {
    long total = 0;
    for (const auto& [l, n] : counts) total += n;
    long c = 0;
    if (auto it = counts.find(label); it != counts.end()) c = it->second;
    return std::log((c + k_) / (total + k_ * vocab()));
  }

  int draw(const std::map<int, long>& counts, Rng& rng, bool exclude_eos) const {
    long total = 0;
    for (const auto& [label, n] : counts)
      if (!(exclude_eos && label == eos())) total += n;
    if (total == 0) return -1;
    double u = rng.uniform() * static_cast<double>(total);
    int last = -1;
    for (const auto& [label, n] : counts) {
      if (exclude_eos && label == eos()) continue;
      last = label;
      u -= static_cast<double>(n);
      if (u < 0) return label;
    }
    return last;  // u landed on the final slot's edge
  }

  int n_cls_ = 0;
  double k_ = 0.01;
  std::map<int64_t, std::map<int, long>> tri_;
  std::map<int, std::map<int, long>> bi_;
  std::map<int, long> uni_;
  long uni_total_ = 0;
};

// Corpus file: one sequence per line, characters 'a' + class id.
inline std::vector<std::vector<int>> load_corpus(const std::string& path, int n_cls) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<std::vector<int>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<int> seq;
    for (char c : line) {
      const int id = c - 'a';
      if (id < 0 || id >= n_cls)
        throw std::runtime_error("corpus symbol out of range: " + std::string(1, c));
      seq.push_back(id);
    }
    corpus.push_back(std::move(seq));
  }
  if (corpus.empty()) throw std::runtime_error("empty corpus: " + path);
  return corpus;
}

}  // namespace linerec
