#include "mpc/fda.hpp"

#include <cmath>
#include <stdexcept>

#include "mpc/bspline.hpp"

namespace mpc {

void ProfileSample::validate() const {
  if (curves.empty()) throw std::invalid_argument("sample has no observations");
  const int p = n_channels();
  const int n = n_points();
  if (p < 1) throw std::invalid_argument("sample has no channels");
  if (n < 2) throw std::invalid_argument("grid needs at least 2 points");
  if (grid[0] < 0.0 || grid[n - 1] > 1.0)
    throw std::invalid_argument("grid must lie in [0,1]");
  for (int h = 1; h < n; ++h)
    if (!(grid[h] > grid[h - 1]))
      throw std::invalid_argument("grid must be strictly increasing");
  for (const auto& c : curves) {
    if (c.rows() != p || c.cols() != n)
      throw std::invalid_argument("inconsistent curve shape");
    if (!c.allFinite()) throw std::invalid_argument("non-finite profile value");
  }
}

SmoothingConfig SmoothingConfig::defaults() {
  SmoothingConfig cfg;
  cfg.basis_count = 20;
  // Log-spaced roughness penalties; GCV picks per curve.
  for (int i = 0; i <= 12; ++i)
    cfg.penalty_grid.push_back(std::pow(10.0, -8.0 + i));
  return cfg;
}

void SmoothingConfig::validate() const {
  if (basis_count < 4) throw std::invalid_argument("basis_count must be >= 4");
  if (penalty_grid.empty())
    throw std::invalid_argument("penalty_grid must be nonempty");
  for (double k : penalty_grid)
    if (!(k > 0.0)) throw std::invalid_argument("penalty values must be > 0");
}

namespace {

ProfileSample smooth_impl(const ProfileSample& raw, const SmoothingConfig& cfg,
                          const Eigen::VectorXd& out_grid) {
  raw.validate();
  cfg.validate();
  SmoothingPlan plan(raw.grid, cfg.basis_count, cfg.penalty_grid);

  ProfileSample out;
  out.grid = out_grid;
  out.curves.reserve(raw.curves.size());
  const bool same_grid = out_grid.size() == raw.grid.size() && out_grid == raw.grid;
  for (const auto& c : raw.curves) {
    Eigen::MatrixXd fit(c.rows(), out_grid.size());
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const auto f = plan.fit_curve(c.row(j).transpose());
      fit.row(j) = same_grid ? plan.evaluate(f, raw.grid).transpose()
                             : plan.evaluate(f, out_grid).transpose();
    }
    out.curves.push_back(std::move(fit));
  }
  return out;
}

}  // namespace

ProfileSample smooth_profiles(const ProfileSample& raw, const SmoothingConfig& cfg) {
  return smooth_impl(raw, cfg, raw.grid);
}

ProfileSample smooth_profiles_to_equal_grid(const ProfileSample& raw,
                                            const SmoothingConfig& cfg) {
  const int n = raw.n_points();
  Eigen::VectorXd eq(n);
  const double a = raw.grid[0], b = raw.grid[n - 1];
  for (int h = 0; h < n; ++h) eq[h] = a + (b - a) * h / (n - 1);
  return smooth_impl(raw, cfg, eq);
}

bool grid_equally_spaced(const Eigen::VectorXd& grid, double rel_tol) {
  const int n = static_cast<int>(grid.size());
  if (n < 3) return true;
  const double step = (grid[n - 1] - grid[0]) / (n - 1);
  for (int h = 1; h < n; ++h)
    if (std::abs(grid[h] - grid[h - 1] - step) > rel_tol * std::max(1.0, std::abs(step)))
      return false;
  return true;
}

MfpcaModel fit_mfpca(const ProfileSample& sample, double fve_target) {
  sample.validate();
  if (sample.n_obs() < 2) throw std::invalid_argument("need N >= 2 to fit");
  if (!(fve_target > 0.0 && fve_target < 1.0))
    throw std::invalid_argument("fve_target must lie in (0,1)");

  const int N = sample.n_obs(), p = sample.n_channels(), n = sample.n_points();

  MfpcaModel model;
  model.grid = sample.grid;
  model.mean = Eigen::MatrixXd::Zero(p, n);
  for (const auto& c : sample.curves) model.mean += c;
  model.mean /= static_cast<double>(N);

  // C_hl = (1/N) sum_i sum_j (X_ij(t_h)-mu_j(t_h))(X_ij(t_l)-mu_j(t_l))
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (const auto& c : sample.curves) {
    const Eigen::MatrixXd y = c - model.mean;  // p x n
    cov.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose(), 1.0);
  }
  cov = Eigen::MatrixXd(cov.selfadjointView<Eigen::Lower>()) / static_cast<double>(N);

  if (cov.cwiseAbs().maxCoeff() < 1e-300) throw std::runtime_error("degenerate sample");
  model.pooled_cov = cov;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("pooled covariance eigendecomposition failed");
  // Eigen returns ascending order; flip to nonincreasing.
  const Eigen::VectorXd evals = eig.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = eig.eigenvectors().rowwise().reverse();

  double total = 0.0;
  for (int k = 0; k < n; ++k) total += std::max(evals[k], 0.0);
  if (!(total > 0.0)) throw std::runtime_error("degenerate sample");

  const double floor = 1e-12 * std::max(evals[0], 0.0);
  int K = 0;
  double partial = 0.0;
  for (int k = 0; k < n; ++k) {
    if (!(evals[k] > floor)) break;
    partial += evals[k];
    K = k + 1;
    if (partial / total >= fve_target) break;
  }
  if (K == 0) throw std::runtime_error("degenerate sample");

  model.K = K;
  model.fve = partial / total;
  model.eigenvalues = evals.head(K);
  model.eigenfunctions.resize(K, n);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd v = evecs.col(k);
    // Deterministic sign: largest-magnitude entry positive.
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    model.eigenfunctions.row(k) = v.transpose();
  }
  return model;
}

Eigen::MatrixXd project_scores_one(const MfpcaModel& model, const Eigen::MatrixXd& curves) {
  if (curves.rows() != model.mean.rows() || curves.cols() != model.mean.cols())
    throw std::invalid_argument("profile shape does not match model");
  return (curves - model.mean) * model.eigenfunctions.transpose();  // p x K
}

ScoreSet project_scores(const MfpcaModel& model, const ProfileSample& sample) {
  sample.validate();
  if (sample.grid.size() != model.grid.size())
    throw std::invalid_argument("grid mismatch");
  for (Eigen::Index h = 0; h < sample.grid.size(); ++h)
    if (std::abs(sample.grid[h] - model.grid[h]) > 1e-12)
      throw std::invalid_argument("grid mismatch");

  ScoreSet out;
  out.scores.reserve(sample.curves.size());
  for (const auto& c : sample.curves) out.scores.push_back(project_scores_one(model, c));
  return out;
}

std::vector<Eigen::MatrixXd> score_covariance(const ScoreSet& scores) {
  if (scores.scores.empty()) throw std::invalid_argument("empty score set");
  const int p = scores.n_channels(), K = scores.n_components();
  const double N = static_cast<double>(scores.n_obs());
  std::vector<Eigen::MatrixXd> omega(K, Eigen::MatrixXd::Zero(p, p));
  for (const auto& s : scores.scores)
    for (int k = 0; k < K; ++k)
      omega[k].selfadjointView<Eigen::Lower>().rankUpdate(s.col(k), 1.0);
  for (int k = 0; k < K; ++k)
    omega[k] = Eigen::MatrixXd(omega[k].selfadjointView<Eigen::Lower>()) / N;
  return omega;
}

}  // namespace mpc
