#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mpc {

// N observations of p-channel profiles on a shared grid of n points in [0,1].
// curves[i] is p x n: row j holds channel j sampled on the grid.
struct ProfileSample {
  std::vector<Eigen::MatrixXd> curves;
  Eigen::VectorXd grid;

  int n_obs() const { return static_cast<int>(curves.size()); }
  int n_channels() const { return curves.empty() ? 0 : static_cast<int>(curves[0].rows()); }
  int n_points() const { return static_cast<int>(grid.size()); }

  // Grid strictly increasing in [0,1], finite values, consistent shapes.
  void validate() const;
};

struct SmoothingConfig {
  int basis_count = 20;
  std::vector<double> penalty_grid;  // strictly positive, GCV-searched

  static SmoothingConfig defaults();
  void validate() const;
};

// Multichannel FPCA of the pooled covariance: shared eigenfunctions across
// channels, per-channel mean curves.
struct MfpcaModel {
  Eigen::MatrixXd mean;            // p x n
  Eigen::MatrixXd eigenfunctions;  // K x n, rows orthonormal in the discrete
                                   // (plain-sum) inner product
  Eigen::VectorXd eigenvalues;     // K, nonincreasing, positive
  int K = 0;
  double fve = 0.0;
  Eigen::MatrixXd pooled_cov;      // n x n
  Eigen::VectorXd grid;
};

// Scores xi_{i,k,j}: scores[i] is p x K (channel j, component k).
struct ScoreSet {
  std::vector<Eigen::MatrixXd> scores;

  int n_obs() const { return static_cast<int>(scores.size()); }
  int n_channels() const { return scores.empty() ? 0 : static_cast<int>(scores[0].rows()); }
  int n_components() const { return scores.empty() ? 0 : static_cast<int>(scores[0].cols()); }
};

// Penalized B-spline fit of every curve, evaluated back on the same grid.
// The roughness penalty is chosen per curve by GCV over cfg.penalty_grid.
ProfileSample smooth_profiles(const ProfileSample& raw, const SmoothingConfig& cfg);

// Same, but the fits are evaluated on an equally spaced grid of the same
// length (used when the sampling grid is uneven).
ProfileSample smooth_profiles_to_equal_grid(const ProfileSample& raw,
                                            const SmoothingConfig& cfg);

bool grid_equally_spaced(const Eigen::VectorXd& grid, double rel_tol = 1e-9);

// Pooled-covariance PCA. K is the smallest count reaching fve_target.
MfpcaModel fit_mfpca(const ProfileSample& sample, double fve_target);

// xi_{i,k,j} = sum_h (X_ij(t_h) - mean_j(t_h)) v_k(t_h); plain discrete sum.
ScoreSet project_scores(const MfpcaModel& model, const ProfileSample& sample);
Eigen::MatrixXd project_scores_one(const MfpcaModel& model, const Eigen::MatrixXd& curves);

// Omega_k = (1/N) sum_i xi_{i,k} xi_{i,k}^T, one p x p block per component.
// Scores are zero-mean by construction; the uncentered second moment is used.
std::vector<Eigen::MatrixXd> score_covariance(const ScoreSet& scores);

}  // namespace mpc
