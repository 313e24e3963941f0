#include "mpc/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "mpc/parallel.hpp"
#include "mpc/rng.hpp"

namespace mpc {

void MonitorConfig::validate() const {
  if (!(ewma_weight > 0.0 && ewma_weight <= 1.0))
    throw std::invalid_argument("ewma_weight must lie in (0,1]");
  if (!(fve_target > 0.0 && fve_target < 1.0))
    throw std::invalid_argument("fve_target must lie in (0,1)");
  if (!(arl0 > 1.0)) throw std::invalid_argument("arl0 must exceed 1");
  if (n_seq_ic < 1 || l_seq_ic < 1)
    throw std::invalid_argument("calibration sequence settings must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  if (n_s < 1) throw std::invalid_argument("n_s must be positive");
  if (b_subsamples < 1) throw std::invalid_argument("b_subsamples must be positive");
  if (!(subsample_in_fraction > 0.0 && subsample_in_fraction < 1.0))
    throw std::invalid_argument("subsample_in_fraction must lie in (0,1)");
}

std::vector<int> default_sparsity_grid(int p, int n_s) {
  const int smax = static_cast<int>(std::ceil(p * (p + 1) / 4.0));
  std::vector<int> grid;
  if (n_s <= 1 || smax <= 1) {
    grid.push_back(1);
  } else {
    for (int t = 0; t < n_s; ++t) {
      const double v = 1.0 + t * (smax - 1.0) / (n_s - 1.0);
      grid.push_back(static_cast<int>(std::lround(v)));
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

MonitorState init_monitor_state(const PrecisionFit& fit) {
  const int p = fit.sigma0.p, K = fit.sigma0.K;
  MonitorState st;
  st.S_k.resize(K);
  for (int k = 0; k < K; ++k) {
    st.S_k[k].resize(p, p);
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l) st.S_k[k](j, l) = fit.sigma0.data(j * K + k, l * K + k);
  }
  return st;
}

void mewmc_update(MonitorState& state, const Eigen::MatrixXd& scores, double rho) {
  const int K = static_cast<int>(state.S_k.size());
  if (scores.cols() != K || (K > 0 && scores.rows() != state.S_k[0].rows()))
    throw std::invalid_argument("mewmc_update: score dimensions mismatch");
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd xi = scores.col(k);
    state.S_k[k] = (1.0 - rho) * state.S_k[k] + rho * (xi * xi.transpose());
  }
  ++state.step_count;
}

double empirical_pvalue(const std::vector<double>& sorted_refs, double observed) {
  if (sorted_refs.empty()) throw std::invalid_argument("empty reference sample");
  const auto it = std::lower_bound(sorted_refs.begin(), sorted_refs.end(), observed);
  const auto count = sorted_refs.end() - it;  // refs >= observed
  return (1.0 + static_cast<double>(count)) / (1.0 + static_cast<double>(sorted_refs.size()));
}

std::vector<std::pair<int, int>> select_index_set(const Eigen::MatrixXd& d_pvalues,
                                                  const Eigen::MatrixXd& d, int s) {
  const int p = static_cast<int>(d_pvalues.rows());
  const int total = tri_count(p);
  if (s < 1 || s > total) throw std::invalid_argument("select_index_set: s out of range");

  struct Entry {
    double pval;
    double dval;
    int j, l;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  for (int j = 0; j < p; ++j)
    for (int l = 0; l <= j; ++l) entries.push_back({d_pvalues(j, l), d(j, l), j, l});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.pval != b.pval) return a.pval < b.pval;
    if (a.dval != b.dval) return a.dval > b.dval;  // larger deviation first
    if (a.j != b.j) return a.j < b.j;
    return a.l < b.l;
  });
  std::vector<std::pair<int, int>> out;
  out.reserve(s);
  for (int i = 0; i < s; ++i) out.emplace_back(entries[i].j, entries[i].l);
  return out;
}

namespace {

Eigen::MatrixXd xi_second_moment(const ScoreSet& scores, const std::vector<int>& idx,
                                 int p, int K) {
  std::vector<Eigen::MatrixXd> comps(K, Eigen::MatrixXd::Zero(p, p));
  for (int i : idx)
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd xi = scores.scores[i].col(k);
      comps[k].selfadjointView<Eigen::Lower>().rankUpdate(xi, 1.0);
    }
  const double n = static_cast<double>(idx.size());
  for (int k = 0; k < K; ++k)
    comps[k] = Eigen::MatrixXd(comps[k].selfadjointView<Eigen::Lower>()) / n;
  return xi_order_from_components(comps, p, K);
}

}  // namespace

double select_gamma(const ScoreSet& tuning_scores, const std::vector<double>& grid,
                    double threshold, std::uint64_t seed, int b_subsamples,
                    double in_fraction, const Eigen::MatrixXd* target, int p, int K,
                    bool* hit_grid_max) {
  if (grid.empty()) throw std::invalid_argument("select_gamma: empty grid");
  if (grid.size() < 3) throw std::invalid_argument("select_gamma: grid needs >= 3 points");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("select_gamma: grid must be ascending");
  const int n = tuning_scores.n_obs();
  const int n_in = std::max(2, static_cast<int>(std::ceil(in_fraction * n)));
  if (n_in >= n) throw std::invalid_argument("select_gamma: no out-of-sample data");
  if (hit_grid_max != nullptr) *hit_grid_max = false;

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(p * K, p * K);
  const Eigen::MatrixXd& t = target != nullptr ? *target : zero;

  // All subsample splits are drawn first, one permutation per subsample.
  Rng rng(seed);
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> splits;  // (S_in, S_out)
  splits.reserve(b_subsamples);
  for (int b = 0; b < b_subsamples; ++b) {
    const std::vector<int> perm = rng.permutation(n);
    std::vector<int> in_idx(perm.begin(), perm.begin() + n_in);
    std::vector<int> out_idx(perm.begin() + n_in, perm.end());
    splits.emplace_back(xi_second_moment(tuning_scores, in_idx, p, K),
                        xi_second_moment(tuning_scores, out_idx, p, K));
  }

  std::vector<double> nll(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (const auto& [s_in, s_out] : splits) {
      const BlockMatrix theta = ridge_precision(s_in, t, grid[g], p, K);
      acc += s_out.cwiseProduct(theta.data).sum() - log_det_pd(theta.data);
    }
    nll[g] = acc / b_subsamples;
  }

  for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
    const double rate = (nll[g] - nll[g + 1]) / (grid[g + 1] - grid[g]);
    if (rate < threshold) return grid[g];
  }
  if (hit_grid_max != nullptr) *hit_grid_max = true;
  std::cerr << "warning: gamma improvement rate never fell below threshold; "
               "using grid maximum\n";
  return grid.back();
}

double lrt_statistic(const BlockMatrix& theta1s, const BlockMatrix& theta0_star_pd,
                     const Eigen::MatrixXd& sn_perm) {
  return log_likelihood(theta1s, sn_perm) - log_likelihood(theta0_star_pd, sn_perm);
}

double fisher_combine(const std::vector<double>& s_pvalues) {
  double acc = 0.0;
  for (double pv : s_pvalues) {
    if (!(pv > 0.0 && pv <= 1.0))
      throw std::invalid_argument("fisher_combine: p-value outside (0,1]");
    acc += std::log(pv);
  }
  return -2.0 * acc;
}

double censored_arl(const std::vector<RunLength>& runs) {
  long total = 0;
  int uncensored = 0;
  for (const auto& r : runs) {
    total += r.length;
    if (!r.censored) ++uncensored;
  }
  if (uncensored == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(total) / uncensored;
}

void CalibratedChart::finalize() {
  auto [pd, clipped] = clip_to_pd(fit.theta0_desparse, 1e-8);
  theta0_star_pd = std::move(pd);
  star_clipped = clipped;
  if (clipped)
    std::cerr << "warning: de-sparsified precision estimate was indefinite; "
                 "eigenvalues clipped at 1e-8\n";
  logdet_star = log_det_pd(theta0_star_pd.data);
}

namespace {

// Shared per-step computation up to the D matrix.
struct StepCore {
  Eigen::MatrixXd sn_perm;
  BlockMatrix theta1_tilde;
  Eigen::MatrixXd d;
};

StepCore step_core(const std::vector<Eigen::MatrixXd>& s_k, const PrecisionFit& fit,
                   const AdmmConfig& admm) {
  const int p = fit.theta0.p, K = fit.theta0.K;
  StepCore core;
  core.sn_perm = xi_order_from_components(s_k, p, K);
  core.theta1_tilde = ridge_precision(core.sn_perm, fit.theta0.data, fit.ridge_penalty,
                                      p, K, admm.use_fast_path);
  core.d = block_frobenius(core.theta1_tilde, fit.theta0);
  return core;
}

Eigen::MatrixXd d_pvalue_matrix(const Eigen::MatrixXd& d,
                                const std::vector<std::vector<double>>& d_refs) {
  const int p = static_cast<int>(d.rows());
  Eigen::MatrixXd pv(p, p);
  for (int j = 0; j < p; ++j)
    for (int l = 0; l <= j; ++l) {
      pv(j, l) = empirical_pvalue(d_refs[tri_index(j, l)], d(j, l));
      pv(l, j) = pv(j, l);
    }
  return pv;
}

}  // namespace

StepResult phase2_step_scores(MonitorState& state, const Eigen::MatrixXd& xi,
                              const CalibratedChart& chart, StepScratch* scratch) {
  const auto& fit = chart.fit;
  const auto& cfg = chart.config;
  const int K = static_cast<int>(state.S_k.size());
  if (xi.cols() != K || xi.rows() != fit.theta0.p)
    throw std::invalid_argument("phase2_step: score dimensions mismatch");

  // Work on a copy of the MEWMC matrices; commit only on success.
  std::vector<Eigen::MatrixXd> s_new = state.S_k;
  {
    const double rho = cfg.ewma_weight;
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd x = xi.col(k);
      s_new[k] = (1.0 - rho) * s_new[k] + rho * (x * x.transpose());
    }
  }

  StepCore core = step_core(s_new, fit, cfg.admm);
  StepResult res;
  res.D = core.d;
  res.d_pvalues = d_pvalue_matrix(core.d, chart.refs.d_refs);
  res.scores = xi;
  res.step_index = state.step_count + 1;

  const BlockMatrix sn_bm(core.sn_perm, fit.theta0.p, fit.theta0.K);
  const double loglik_star =
      chart.logdet_star - core.sn_perm.cwiseProduct(chart.theta0_star_pd.data).sum();

  const int n_s = static_cast<int>(cfg.sparsity_grid.size());
  if (scratch != nullptr && scratch->warm.size() != static_cast<std::size_t>(n_s))
    scratch->warm.assign(n_s, AdmmWarmStart{});
  res.index_sets.resize(n_s);
  res.lambda_s.resize(n_s);
  res.s_pvalues.resize(n_s);
  for (int si = 0; si < n_s; ++si) {
    res.index_sets[si] = select_index_set(res.d_pvalues, res.D, cfg.sparsity_grid[si]);
    AdmmWarmStart* warm = scratch != nullptr ? &scratch->warm[si] : nullptr;
    const BlockMatrix theta1s =
        constrained_mle(sn_bm, fit.theta0, res.index_sets[si], cfg.admm, warm);
    res.lambda_s[si] = log_likelihood(theta1s, core.sn_perm) - loglik_star;
    res.s_pvalues[si] =
        empirical_pvalue(chart.refs.lambda_refs[si], res.lambda_s[si]);
  }
  res.lambda = fisher_combine(res.s_pvalues);
  res.signal = res.lambda > chart.refs.control_limit;

  state.S_k = std::move(s_new);
  ++state.step_count;
  if (state.max_history > 0) {
    state.history.push_back(res);
    while (state.history.size() > state.max_history) state.history.pop_front();
  }
  return res;
}

StepResult phase2_step(MonitorState& state, const Eigen::MatrixXd& obs_curves,
                       const CalibratedChart& chart, StepScratch* scratch) {
  return phase2_step_scores(state, project_scores_one(chart.model, obs_curves),
                            chart, scratch);
}

namespace {

ProfileSample subset_sample(const ProfileSample& all, const std::vector<int>& idx) {
  ProfileSample out;
  out.grid = all.grid;
  out.curves.reserve(idx.size());
  for (int i : idx) out.curves.push_back(all.curves[i]);
  return out;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> g(count);
  for (int i = 0; i < count; ++i)
    g[i] = lo * std::pow(hi / lo, count > 1 ? i / (count - 1.0) : 0.0);
  return g;
}

// 5-fold CV for the T = 0 ridge initializer penalty, maximizing held-out
// Gaussian log-likelihood.
double select_initializer_gamma(const ScoreSet& train_scores, int p, int K,
                                std::uint64_t seed) {
  const int n = train_scores.n_obs();
  const int folds = std::min(5, n / 2);
  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(n);

  std::vector<int> all_idx(n);
  for (int i = 0; i < n; ++i) all_idx[i] = i;
  const Eigen::MatrixXd sigma_all = xi_second_moment(train_scores, all_idx, p, K);
  const double base = sigma_all.diagonal().mean();
  const std::vector<double> grid = log_grid(1e-4 * base, base, 20);

  double best_gamma = grid.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (double gamma : grid) {
    double acc = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> in_idx, out_idx;
      for (int i = 0; i < n; ++i)
        (i % folds == f ? out_idx : in_idx).push_back(perm[i]);
      const Eigen::MatrixXd s_in = xi_second_moment(train_scores, in_idx, p, K);
      const Eigen::MatrixXd s_out = xi_second_moment(train_scores, out_idx, p, K);
      const BlockMatrix theta =
          ridge_precision(s_in, Eigen::MatrixXd::Zero(p * K, p * K), gamma, p, K);
      acc += log_det_pd(theta.data) - s_out.cwiseProduct(theta.data).sum();
    }
    const double score = acc / folds;
    if (score > best_score) {
      best_score = score;
      best_gamma = gamma;
    }
  }
  return best_gamma;
}

// 5-fold CV for the adaptive-lasso penalty over a 20-point log grid,
// maximizing held-out Gaussian log-likelihood. Weights are held fixed
// (computed once from the full-training ridge initializer).
double select_lambda_cv(const ScoreSet& train_scores, const Eigen::MatrixXd& weights,
                        const BlockMatrix& sigma0, int p, int K,
                        const AdmmConfig& admm, std::uint64_t seed) {
  if (p < 2) return 0.0;
  double lambda_max = 0.0;
  for (int j = 0; j < p; ++j)
    for (int l = 0; l < j; ++l)
      lambda_max = std::max(lambda_max,
                            weights(j, l) * sigma0.block(j, l).norm());
  if (!(lambda_max > 0.0)) return 0.0;

  const int n = train_scores.n_obs();
  const int folds = std::min(5, n / 2);
  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(n);

  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> fold_moments;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> in_idx, out_idx;
    for (int i = 0; i < n; ++i)
      (i % folds == f ? out_idx : in_idx).push_back(perm[i]);
    fold_moments.emplace_back(xi_second_moment(train_scores, in_idx, p, K),
                              xi_second_moment(train_scores, out_idx, p, K));
  }

  std::vector<double> grid = log_grid(1e-3 * lambda_max, lambda_max, 20);
  std::sort(grid.rbegin(), grid.rend());  // descending: warm-start path

  double best_lambda = grid.front();
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<AdmmWarmStart> warm(folds);
  for (double lambda : grid) {
    double acc = 0.0;
    bool ok = true;
    for (int f = 0; f < folds && ok; ++f) {
      try {
        const BlockMatrix theta =
            adaptive_fglasso(BlockMatrix(fold_moments[f].first, p, K), weights,
                             lambda, admm, &warm[f]);
        acc += log_det_pd(theta.data) -
               fold_moments[f].second.cwiseProduct(theta.data).sum();
      } catch (const std::exception&) {
        ok = false;  // singular or non-converged fit: drop this lambda
      }
    }
    if (!ok) continue;
    const double score = acc / folds;
    if (score > best_score) {
      best_score = score;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace

CalibratedChart phase1_calibrate(const ProfileSample& ic_sample, MonitorConfig cfg) {
  cfg.validate();
  ic_sample.validate();
  const int n_total = ic_sample.n_obs();
  const int p = ic_sample.n_channels();
  if (n_total < 8) throw std::invalid_argument("IC sample too small to split");

  Rng root(cfg.rng_seed);

  // (a) random training/tuning split.
  Rng split_rng = root.derive(1);
  const std::vector<int> perm = split_rng.permutation(n_total);
  int n_train = static_cast<int>(std::lround(cfg.train_fraction * n_total));
  n_train = std::clamp(n_train, 4, n_total - 4);
  const std::vector<int> train_idx(perm.begin(), perm.begin() + n_train);
  const std::vector<int> tune_idx(perm.begin() + n_train, perm.end());

  const ProfileSample train = subset_sample(ic_sample, train_idx);
  const ProfileSample tune = subset_sample(ic_sample, tune_idx);

  // (b) training half: MFPCA, score covariance, ridge initializer, lasso fit.
  CalibratedChart chart;
  chart.model = fit_mfpca(train, cfg.fve_target);
  const int K = chart.model.K;
  const int dim = p * K;

  if (cfg.sparsity_grid.empty()) cfg.sparsity_grid = default_sparsity_grid(p, cfg.n_s);
  for (int s : cfg.sparsity_grid)
    if (s < 1 || s > tri_count(p))
      throw std::invalid_argument("sparsity grid value out of range");
  if (cfg.admm.tol_primal <= 0.0) cfg.admm.tol_primal = 1e-8 * dim;
  if (cfg.admm.tol_dual <= 0.0) cfg.admm.tol_dual = 1e-8 * dim;

  const ScoreSet train_scores = project_scores(chart.model, train);
  const std::vector<Eigen::MatrixXd> omegas = score_covariance(train_scores);
  PrecisionFit fit;
  fit.sigma0 = BlockMatrix(xi_order_from_components(omegas, p, K), p, K);

  fit.ridge_penalty_init =
      select_initializer_gamma(train_scores, p, K, root.derive(2).seed());
  fit.theta0_ridge = ridge_precision(fit.sigma0.data,
                                     Eigen::MatrixXd::Zero(dim, dim),
                                     fit.ridge_penalty_init, p, K);
  const Eigen::MatrixXd weights = block_norms(fit.theta0_ridge);

  fit.lasso_penalty = select_lambda_cv(train_scores, weights, fit.sigma0, p, K,
                                       cfg.admm, root.derive(3).seed());
  fit.theta0 = adaptive_fglasso(fit.sigma0, weights, fit.lasso_penalty, cfg.admm);
  fit.theta0_desparse = desparsify(fit.theta0, fit.sigma0);

  // (c) tuning half: gamma, reference distributions.
  const ScoreSet tune_scores = project_scores(chart.model, tune);
  std::vector<double> gamma_grid = cfg.ridge_gamma_grid;
  if (gamma_grid.empty()) {
    std::vector<int> all_idx(tune_scores.n_obs());
    for (int i = 0; i < tune_scores.n_obs(); ++i) all_idx[i] = i;
    const double base =
        xi_second_moment(tune_scores, all_idx, p, K).diagonal().mean();
    gamma_grid = log_grid(1e-3 * base, base, 12);
  }
  fit.ridge_penalty = select_gamma(tune_scores, gamma_grid,
                                   cfg.gamma_rate_threshold, root.derive(4).seed(),
                                   cfg.b_subsamples, cfg.subsample_in_fraction,
                                   &fit.theta0.data, p, K);
  chart.fit = std::move(fit);
  chart.config = cfg;
  chart.finalize();

  // Calibration sequences: tuning observations sampled with replacement.
  const int n_seq = cfg.n_seq_ic, l_seq = cfg.l_seq_ic;
  const int n_tune = tune_scores.n_obs();
  std::vector<std::vector<int>> seq_idx(n_seq);
  for (int i = 0; i < n_seq; ++i) {
    Rng r = root.derive(1000 + static_cast<std::uint64_t>(i));
    seq_idx[i].resize(l_seq);
    for (int n = 0; n < l_seq; ++n)
      seq_idx[i][n] = static_cast<int>(r.uniform_below(n_tune));
  }

  const int n_pairs = tri_count(p);
  const int n_s = static_cast<int>(cfg.sparsity_grid.size());
  const auto& theta0 = chart.fit.theta0;

  // Pass A: D deviations of every calibration step.
  std::vector<std::vector<double>> d_samples(
      n_seq, std::vector<double>(static_cast<std::size_t>(l_seq) * n_pairs));
  parallel_for(n_seq, cfg.n_threads, [&](int i) {
    MonitorState st = init_monitor_state(chart.fit);
    for (int n = 0; n < l_seq; ++n) {
      mewmc_update(st, tune_scores.scores[seq_idx[i][n]], cfg.ewma_weight);
      const StepCore core = step_core(st.S_k, chart.fit, cfg.admm);
      for (int j = 0; j < p; ++j)
        for (int l = 0; l <= j; ++l)
          d_samples[i][static_cast<std::size_t>(n) * n_pairs + tri_index(j, l)] =
              core.d(j, l);
    }
  });

  ReferenceDistributions refs;
  refs.n_ic = n_seq * l_seq;
  refs.d_refs.assign(n_pairs, {});
  for (int q = 0; q < n_pairs; ++q) {
    auto& pool = refs.d_refs[q];
    pool.reserve(refs.n_ic);
    for (int i = 0; i < n_seq; ++i)
      for (int n = 0; n < l_seq; ++n)
        pool.push_back(d_samples[i][static_cast<std::size_t>(n) * n_pairs + q]);
    std::sort(pool.begin(), pool.end());
  }

  // Pass B: constrained LRT statistics against the pooled D references.
  std::vector<std::vector<double>> lambda_samples(
      n_seq, std::vector<double>(static_cast<std::size_t>(l_seq) * n_s));
  parallel_for(n_seq, cfg.n_threads, [&](int i) {
    MonitorState st = init_monitor_state(chart.fit);
    std::vector<AdmmWarmStart> warm(n_s);
    for (int n = 0; n < l_seq; ++n) {
      mewmc_update(st, tune_scores.scores[seq_idx[i][n]], cfg.ewma_weight);
      const StepCore core = step_core(st.S_k, chart.fit, cfg.admm);
      const Eigen::MatrixXd pv = d_pvalue_matrix(core.d, refs.d_refs);
      const BlockMatrix sn_bm(core.sn_perm, p, K);
      const double loglik_star =
          chart.logdet_star -
          core.sn_perm.cwiseProduct(chart.theta0_star_pd.data).sum();
      for (int si = 0; si < n_s; ++si) {
        const auto iset = select_index_set(pv, core.d, cfg.sparsity_grid[si]);
        const BlockMatrix theta1s =
            constrained_mle(sn_bm, theta0, iset, cfg.admm, &warm[si]);
        lambda_samples[i][static_cast<std::size_t>(n) * n_s + si] =
            log_likelihood(theta1s, core.sn_perm) - loglik_star;
      }
    }
  });

  refs.lambda_refs.assign(n_s, {});
  for (int si = 0; si < n_s; ++si) {
    auto& pool = refs.lambda_refs[si];
    pool.reserve(refs.n_ic);
    for (int i = 0; i < n_seq; ++i)
      for (int n = 0; n < l_seq; ++n)
        pool.push_back(lambda_samples[i][static_cast<std::size_t>(n) * n_s + si]);
    std::sort(pool.begin(), pool.end());
  }

  // Pass C: per-step combined statistics.
  std::vector<std::vector<double>> lam(n_seq, std::vector<double>(l_seq));
  for (int i = 0; i < n_seq; ++i)
    for (int n = 0; n < l_seq; ++n) {
      std::vector<double> pvals(n_s);
      for (int si = 0; si < n_s; ++si)
        pvals[si] = empirical_pvalue(
            refs.lambda_refs[si],
            lambda_samples[i][static_cast<std::size_t>(n) * n_s + si]);
      lam[i][n] = fisher_combine(pvals);
    }

  // Control limit: smallest observed Lambda whose censored ARL >= arl0.
  // Per-sequence first-exceedance is a step function of h; precompute the
  // strictly increasing records of each running maximum.
  std::vector<std::vector<std::pair<double, int>>> records(n_seq);
  std::vector<double> candidates;
  candidates.reserve(static_cast<std::size_t>(n_seq) * l_seq);
  for (int i = 0; i < n_seq; ++i) {
    double run_max = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < l_seq; ++n) {
      if (lam[i][n] > run_max) {
        run_max = lam[i][n];
        records[i].emplace_back(run_max, n + 1);
      }
      candidates.push_back(lam[i][n]);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  bool found = false;
  for (double h : candidates) {
    long total = 0;
    int uncensored = 0;
    for (int i = 0; i < n_seq; ++i) {
      // first record strictly above h
      const auto it = std::upper_bound(
          records[i].begin(), records[i].end(), h,
          [](double v, const std::pair<double, int>& r) { return v < r.first; });
      if (it != records[i].end()) {
        total += it->second;
        ++uncensored;
      } else {
        total += l_seq;
      }
    }
    if (uncensored == 0) continue;  // estimator undefined: reject candidate
    if (static_cast<double>(total) / uncensored >= cfg.arl0) {
      refs.control_limit = h;
      found = true;
      break;
    }
  }
  if (!found)
    throw std::runtime_error("ARL target unreachable; increase l_seq_ic");

  chart.refs = std::move(refs);
  return chart;
}

}  // namespace mpc
