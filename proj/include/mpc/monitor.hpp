#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <utility>
#include <vector>

#include "mpc/fda.hpp"
#include "mpc/graphmodel.hpp"

namespace mpc {

struct MonitorConfig {
  double ewma_weight = 0.1;         // MEWMC rho in (0,1]
  std::vector<int> sparsity_grid;   // S; empty -> default_sparsity_grid(p, n_s)
  int n_s = 10;
  double fve_target = 0.95;
  double arl0 = 100.0;
  int n_seq_ic = 200;
  int l_seq_ic = 200;
  std::vector<double> ridge_gamma_grid;  // empty -> scale-aware default
  double gamma_rate_threshold = 1e-3;
  std::uint64_t rng_seed = 1;

  double train_fraction = 0.25;     // training/tuning split of the IC sample
  int b_subsamples = 20;            // gamma selection refits
  double subsample_in_fraction = 0.7;
  AdmmConfig admm;                  // tolerances resolved at calibration time
  int n_threads = 0;                // 0 -> hardware concurrency

  void validate() const;
};

// n_s integers evenly spaced from 1 to ceil(p(p+1)/4), rounded, deduplicated.
std::vector<int> default_sparsity_grid(int p, int n_s);

// Flat index of the lower-triangular pair (j,l), l <= j.
inline int tri_index(int j, int l) { return j * (j + 1) / 2 + l; }
inline int tri_count(int p) { return p * (p + 1) / 2; }

// Empirical IC reference samples (sorted ascending) and the control limit.
struct ReferenceDistributions {
  std::vector<std::vector<double>> d_refs;       // per tri_index(j,l)
  std::vector<std::vector<double>> lambda_refs;  // per sparsity-grid position
  double control_limit = 0.0;
  int n_ic = 0;
};

struct StepResult {
  Eigen::MatrixXd D;            // p x p block deviations
  Eigen::MatrixXd d_pvalues;    // p x p symmetric
  std::vector<std::vector<std::pair<int, int>>> index_sets;  // per s
  std::vector<double> lambda_s;
  std::vector<double> s_pvalues;
  double lambda = 0.0;
  bool signal = false;
  long step_index = 0;
  Eigen::MatrixXd scores;       // p x K scores of this observation
};

struct MonitorState {
  std::vector<Eigen::MatrixXd> S_k;  // K matrices p x p, S_0k = Omega0k
  long step_count = 0;
  std::size_t max_history = 0;
  std::deque<StepResult> history;
};

MonitorState init_monitor_state(const PrecisionFit& fit);

// Per-s ADMM warm starts carried across steps of one monitoring session.
struct StepScratch {
  std::vector<AdmmWarmStart> warm;
};

// Everything Phase II needs, produced by phase1_calibrate.
struct CalibratedChart {
  MfpcaModel model;
  PrecisionFit fit;
  ReferenceDistributions refs;
  MonitorConfig config;

  BlockMatrix theta0_star_pd;  // clipped de-sparsified estimate
  double logdet_star = 0.0;
  bool star_clipped = false;

  // Build the derived members from fit (clips theta0_desparse if needed).
  void finalize();
};

// --- operations ---

// S_nk = (1-rho) S_{n-1,k} + rho xi_k xi_k^T for every component.
void mewmc_update(MonitorState& state, const Eigen::MatrixXd& scores, double rho);

// p = (1 + #{refs >= observed}) / (1 + n); refs must be sorted ascending.
double empirical_pvalue(const std::vector<double>& sorted_refs, double observed);

// The s most significant pairs: smallest p-values, ties broken by larger D,
// then lexicographic (j,l). Diagonal pairs are eligible.
std::vector<std::pair<int, int>> select_index_set(const Eigen::MatrixXd& d_pvalues,
                                                  const Eigen::MatrixXd& d, int s);

// Elbow rule on the mean out-of-sample negative log-likelihood of ridge fits
// over b_subsamples random splits of the tuning scores: smallest grid value
// whose forward improvement rate per unit gamma falls below threshold; grid
// maximum (with *hit_grid_max set) when no point qualifies. The B splits are
// drawn up front from Rng(seed), one permutation per subsample, in-sample =
// first ceil(in_fraction * N) positions.
double select_gamma(const ScoreSet& tuning_scores, const std::vector<double>& grid,
                    double threshold, std::uint64_t seed, int b_subsamples,
                    double in_fraction, const Eigen::MatrixXd* target, int p, int K,
                    bool* hit_grid_max = nullptr);

double lrt_statistic(const BlockMatrix& theta1s, const BlockMatrix& theta0_star_pd,
                     const Eigen::MatrixXd& sn_perm);

double fisher_combine(const std::vector<double>& s_pvalues);

// Censored-run ARL: maximum-likelihood estimate for a geometric run length
// under Type I censoring = total monitored steps / uncensored runs.
struct RunLength {
  long length = 0;
  bool censored = false;
};
double censored_arl(const std::vector<RunLength>& runs);

// Phase I: split, fit the graphical model on the training part, select gamma
// and build reference distributions / control limit on the tuning part.
// `ic_sample` is expected to be smoothed already.
CalibratedChart phase1_calibrate(const ProfileSample& ic_sample, MonitorConfig cfg);

// One Phase II step from the p x K score matrix of a new observation.
// On error the state is left unchanged.
StepResult phase2_step_scores(MonitorState& state, const Eigen::MatrixXd& xi,
                              const CalibratedChart& chart,
                              StepScratch* scratch = nullptr);

// Same, starting from one raw (already smoothed) p x n profile.
StepResult phase2_step(MonitorState& state, const Eigen::MatrixXd& obs_curves,
                       const CalibratedChart& chart, StepScratch* scratch = nullptr);

}  // namespace mpc
