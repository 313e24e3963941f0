#pragma once

#include <utility>
#include <vector>

#include "mpc/monitor.hpp"

namespace mpc {

struct DiagnosisResult {
  long change_point = 0;  // tau-hat, 1-based step index
  std::vector<std::pair<int, int>> shifted_pairs;  // (j,l), l <= j
  double fdr = 0.0;
  long signal_step = 0;
};

// Benjamini-Hochberg step-up over the p(p+1)/2 lower-triangular p-values:
// largest k with p_(k) <= k*q/m rejects every pair with p <= p_(k).
// Pairs are returned in lexicographic (j,l) order.
std::vector<std::pair<int, int>> bh_select(const Eigen::MatrixXd& d_pvalues,
                                           double fdr);

// Penalized-likelihood change-point estimate from the Phase II scores of
// steps 1..m. Candidates leaving fewer than 2 post-change observations are
// skipped (except when that empties the range, i.e. m = 2). Ties resolve to
// the smallest u.
long estimate_change_point(const ScoreSet& score_history, const PrecisionFit& fit,
                           double gamma);

}  // namespace mpc
