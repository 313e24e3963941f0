#include "mpc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mpc {

std::vector<std::pair<int, int>> bh_select(const Eigen::MatrixXd& d_pvalues,
                                           double fdr) {
  if (!(fdr > 0.0 && fdr < 1.0))
    throw std::invalid_argument("bh_select: fdr must lie in (0,1)");
  const int p = static_cast<int>(d_pvalues.rows());
  const int m_tests = tri_count(p);

  std::vector<double> sorted;
  sorted.reserve(m_tests);
  for (int j = 0; j < p; ++j)
    for (int l = 0; l <= j; ++l) sorted.push_back(d_pvalues(j, l));
  std::sort(sorted.begin(), sorted.end());

  double cutoff = -1.0;
  for (int k = m_tests; k >= 1; --k)
    if (sorted[k - 1] <= k * fdr / m_tests) {
      cutoff = sorted[k - 1];
      break;
    }

  std::vector<std::pair<int, int>> out;
  if (cutoff < 0.0) return out;
  for (int j = 0; j < p; ++j)
    for (int l = 0; l <= j; ++l)
      if (d_pvalues(j, l) <= cutoff) out.emplace_back(j, l);
  return out;
}

long estimate_change_point(const ScoreSet& score_history, const PrecisionFit& fit,
                           double gamma) {
  const int m = score_history.n_obs();
  if (m < 2) throw std::invalid_argument("estimate_change_point: need m >= 2");
  const int p = fit.theta0.p, K = fit.theta0.K;
  if (score_history.n_channels() != p || score_history.n_components() != K)
    throw std::invalid_argument("estimate_change_point: score dimensions mismatch");

  const auto [star_pd, clipped] = clip_to_pd(fit.theta0_desparse, 1e-8);
  (void)clipped;
  const double logdet_star = log_det_pd(star_pd.data);

  // Prefix sums of per-component outer products; segment second moments are
  // then O(1) per candidate.
  std::vector<std::vector<Eigen::MatrixXd>> prefix(
      m + 1, std::vector<Eigen::MatrixXd>(K, Eigen::MatrixXd::Zero(p, p)));
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd xi = score_history.scores[i].col(k);
      prefix[i + 1][k] = prefix[i][k] + xi * xi.transpose();
    }

  std::vector<int> candidates;
  for (int u = 1; u <= m - 1; ++u)
    if (m - u >= 2) candidates.push_back(u);
  if (candidates.empty()) return m - 1;  // m == 2

  double best = -std::numeric_limits<double>::infinity();
  long best_u = candidates.front();
  std::vector<Eigen::MatrixXd> comps(K);
  for (int u : candidates) {
    for (int k = 0; k < K; ++k) comps[k] = prefix[u][k] / static_cast<double>(u);
    const Eigen::MatrixXd s_before = xi_order_from_components(comps, p, K);
    for (int k = 0; k < K; ++k)
      comps[k] = (prefix[m][k] - prefix[u][k]) / static_cast<double>(m - u);
    const Eigen::MatrixXd s_after = xi_order_from_components(comps, p, K);

    const BlockMatrix theta_u =
        ridge_precision(s_after, fit.theta0.data, gamma, p, K);
    const double value =
        u * (logdet_star - s_before.cwiseProduct(star_pd.data).sum()) +
        (m - u) * (log_det_pd(theta_u.data) -
                   s_after.cwiseProduct(theta_u.data).sum());
    if (value > best) {
      best = value;
      best_u = u;
    }
  }
  return best_u;
}

}  // namespace mpc
