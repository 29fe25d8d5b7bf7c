#pragma once

#include <algorithm>
#include <utility>
#include <vector>

// Edit-distance alignment shared by the training-time matcher and the
// metrics. One DP, one backtrace order, so both always agree on which optimal
// alignment is meant: when costs tie, prefer match, then substitute, then
// delete, then insert.

namespace linerec {

struct EditCounts {
  long del = 0;  // reference symbols with no hypothesis counterpart
  long sub = 0;
  long ins = 0;  // hypothesis symbols with no reference counterpart
  long distance() const { return del + sub + ins; }
};

struct Alignment {
  EditCounts counts;
  // (ref index, hyp index) pairs aligned as equal; strictly increasing in both
  std::vector<std::pair<int, int>> matches;
};

inline Alignment align_sequences(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j) {
      const int diag = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int up = dp[i - 1][j] + 1;    // delete ref[i-1]
      const int left = dp[i][j - 1] + 1;  // insert hyp[j-1]
      dp[i][j] = std::min(diag, std::min(up, left));
    }

  Alignment out;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && dp[i][j] == dp[i - 1][j - 1]) {
      out.matches.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
      --i;
      --j;
    } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
      ++out.counts.sub;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++out.counts.del;
      --i;
    } else {
      ++out.counts.ins;
      --j;
    }
  }
  std::reverse(out.matches.begin(), out.matches.end());
  return out;
}

inline long edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  return align_sequences(a, b).counts.distance();
}

}  // namespace linerec
