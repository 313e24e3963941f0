#include "mpc/graphmodel.hpp"

#include <cmath>

namespace mpc {

std::vector<int> PermutationSpec::index_map() const {
  std::vector<int> map(dim());
  for (int i = 0; i < dim(); ++i) map[i] = xi_to_eta(i);
  return map;
}

Eigen::MatrixXd PermutationSpec::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim(), dim());
  for (int i = 0; i < dim(); ++i) m(i, xi_to_eta(i)) = 1.0;
  return m;
}

Eigen::MatrixXd permute(const PermutationSpec& spec, const Eigen::MatrixXd& m,
                        PermuteDirection direction) {
  const int d = spec.dim();
  if (m.rows() != d || m.cols() != d)
    throw std::invalid_argument("permute: dimension mismatch");
  Eigen::MatrixXd out(d, d);
  if (direction == PermuteDirection::to_xi) {
    // (P M P^T)(a,b) = M(eta(a), eta(b))
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        out(a, b) = m(spec.xi_to_eta(a), spec.xi_to_eta(b));
  } else {
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        out(a, b) = m(spec.eta_to_xi(a), spec.eta_to_xi(b));
  }
  return out;
}

BlockMatrix::BlockMatrix(Eigen::MatrixXd d, int p_, int K_)
    : data(std::move(d)), p(p_), K(K_) {
  if (p <= 0 || K <= 0) throw std::invalid_argument("BlockMatrix: bad grid");
  if (data.rows() != p * K || data.cols() != p * K)
    throw std::invalid_argument("BlockMatrix: data is not pK x pK");
}

bool BlockMatrix::symmetric(double tol) const {
  return (data - data.transpose()).cwiseAbs().maxCoeff() <= tol;
}

Eigen::MatrixXd block_norms(const BlockMatrix& m) {
  Eigen::MatrixXd out(m.p, m.p);
  for (int j = 0; j < m.p; ++j)
    for (int l = 0; l < m.p; ++l) out(j, l) = m.block(j, l).norm();
  return out;
}

bool is_eta_block_diagonal(const Eigen::MatrixXd& m, int p, int K, double tol) {
  if (m.rows() != p * K || m.cols() != p * K) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double bound = tol * scale;
  for (int j = 0; j < p; ++j)
    for (int l = 0; l < p; ++l)
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b)
          if (a != b && std::abs(m(j * K + a, l * K + b)) > bound) return false;
  return true;
}

namespace {

// Eigenvalue map for the -log|Theta| + tr(E Theta) + (rho/2)||Theta - ...||^2
// stationarity: theta(d) solves rho t^2 + d t - 1 = 0, positive root.
inline double step1_eigmap(double d, double rho) {
  if (d > 0.0) return 2.0 / (d + std::sqrt(d * d + 4.0 * rho));
  return (-d + std::sqrt(d * d + 4.0 * rho)) / (2.0 * rho);
}

// Ridge eigenvalue map: theta(e) solves gamma t^2 + e t - 1 = 0.
inline double ridge_eigmap(double e, double gamma) {
  if (e >= 0.0) return 1.0 / (0.5 * e + std::sqrt(gamma + 0.25 * e * e));
  return (-e + std::sqrt(e * e + 4.0 * gamma)) / (2.0 * gamma);
}

template <class Map>
Eigen::MatrixXd spectral_apply_full(const Eigen::MatrixXd& e, const Map& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(e);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  Eigen::VectorXd d = eig.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = f(d[i]);
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

// Per-component spectral map: E must be eta-block-diagonal; only the
// within-component entries of the result are written, the rest stay zero.
template <class Map>
Eigen::MatrixXd spectral_apply_eta(const Eigen::MatrixXd& e, int p, int K,
                                   const Map& f) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(e.rows(), e.cols());
  Eigen::MatrixXd comp(p, p);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l) comp(j, l) = e(j * K + k, l * K + k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(comp);
    if (eig.info() != Eigen::Success)
      throw std::runtime_error("eigendecomposition failed");
    Eigen::VectorXd d = eig.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = f(d[i]);
    const Eigen::MatrixXd r =
        eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l) out(j * K + k, l * K + k) = r(j, l);
  }
  return out;
}

template <class Map>
Eigen::MatrixXd spectral_apply(const Eigen::MatrixXd& e, int p, int K,
                               bool use_fast_path, const Map& f) {
  if (use_fast_path && K > 1 && is_eta_block_diagonal(e, p, K))
    return spectral_apply_eta(e, p, K, f);
  return spectral_apply_full(e, f);
}

struct AdmmResult {
  Eigen::MatrixXd z;
  Eigen::MatrixXd u;
  double primal = 0.0;
  double dual = 0.0;
  int iterations = 0;
};

// Scaled-ADMM core on the unit-scale problem. `prox` maps A = Theta + U to
// the step-2 iterate Z in place.
template <class Prox>
AdmmResult admm_core(const Eigen::MatrixXd& s, int p, int K, const AdmmConfig& cfg,
                     const Prox& prox, Eigen::MatrixXd z, Eigen::MatrixXd u) {
  const int dim = p * K;
  const double rho = cfg.penalty;
  const double tol_primal = cfg.tol_primal > 0.0 ? cfg.tol_primal : 1e-6 * dim;
  const double tol_dual = cfg.tol_dual > 0.0 ? cfg.tol_dual : 1e-6 * dim;

  Eigen::MatrixXd e(dim, dim), theta(dim, dim), a(dim, dim), z_prev(dim, dim);
  double primal = 0.0, dual = 0.0;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    e = s - rho * (z - u);
    theta = spectral_apply(e, p, K, cfg.use_fast_path,
                           [rho](double d) { return step1_eigmap(d, rho); });
    a = theta + u;
    z_prev = z;
    z = a;
    prox(a, z);
    primal = (theta - z).norm();
    dual = rho * (z - z_prev).norm();
    u += theta - z;
    if (primal <= tol_primal && dual <= tol_dual)
      return {std::move(z), std::move(u), primal, dual, it};
  }
  throw AdmmError("ADMM did not converge within max_iter", primal, dual,
                  cfg.max_iter);
}

double scale_factor(const Eigen::MatrixXd& s) {
  const double tr = s.trace();
  return tr > 0.0 ? s.rows() / tr : 1.0;
}

void symmetrize(Eigen::MatrixXd& m) {
  m = ((m + m.transpose()) * 0.5).eval();
}

}  // namespace

Eigen::MatrixXd admm_step1_full(const Eigen::MatrixXd& e, double rho_admm) {
  return spectral_apply_full(e, [rho_admm](double d) { return step1_eigmap(d, rho_admm); });
}

Eigen::MatrixXd admm_step1_eta_fast(const Eigen::MatrixXd& e, double rho_admm,
                                    int p, int K) {
  return spectral_apply_eta(e, p, K,
                            [rho_admm](double d) { return step1_eigmap(d, rho_admm); });
}

Eigen::MatrixXd block_soft_threshold(const Eigen::MatrixXd& a_block, double thr) {
  const double norm = a_block.norm();
  if (norm <= thr) return Eigen::MatrixXd::Zero(a_block.rows(), a_block.cols());
  return a_block * ((norm - thr) / norm);
}

BlockMatrix ridge_precision(const Eigen::MatrixXd& s, const Eigen::MatrixXd& target,
                            double gamma, int p, int K, bool use_fast_path) {
  if (!(gamma > 0.0)) throw std::invalid_argument("ridge gamma must be > 0");
  if (s.rows() != p * K || target.rows() != p * K || s.cols() != s.rows() ||
      target.cols() != target.rows())
    throw std::invalid_argument("ridge_precision: dimension mismatch");
  Eigen::MatrixXd e = s - gamma * target;
  symmetrize(e);
  Eigen::MatrixXd theta = spectral_apply(
      e, p, K, use_fast_path, [gamma](double d) { return ridge_eigmap(d, gamma); });
  symmetrize(theta);
  return BlockMatrix(std::move(theta), p, K);
}

BlockMatrix adaptive_fglasso(const BlockMatrix& sigma0, const Eigen::MatrixXd& weights,
                             double lambda, const AdmmConfig& cfg,
                             AdmmWarmStart* warm) {
  const int p = sigma0.p, K = sigma0.K, dim = sigma0.dim();
  if (weights.rows() != p || weights.cols() != p)
    throw std::invalid_argument("adaptive_fglasso: weights must be p x p");
  if (weights.minCoeff() <= 0.0)
    throw std::invalid_argument("adaptive_fglasso: weights must be positive");
  if (lambda < 0.0) throw std::invalid_argument("adaptive_fglasso: lambda < 0");

  const double alpha = scale_factor(sigma0.data);
  const Eigen::MatrixXd s = alpha * sigma0.data;
  const double lam = lambda * alpha;
  const double rho = cfg.penalty;

  Eigen::MatrixXd z0, u0;
  if (warm != nullptr && warm->valid(dim)) {
    z0 = warm->z * (warm->alpha / alpha);
    u0 = warm->u * (alpha / warm->alpha);
  } else {
    Eigen::VectorXd d0(dim);
    for (int i = 0; i < dim; ++i) d0[i] = 1.0 / std::max(s(i, i), 1e-8);
    z0 = d0.asDiagonal();
    u0 = Eigen::MatrixXd::Zero(dim, dim);
  }

  auto prox = [&](const Eigen::MatrixXd& a, Eigen::MatrixXd& z) {
    // Penalty runs over j <= l, diagonal blocks included.
    for (int j = 0; j < p; ++j)
      for (int l = 0; l <= j; ++l) {
        const double thr = lam / (rho * weights(j, l));
        const Eigen::MatrixXd zb = block_soft_threshold(a.block(j * K, l * K, K, K), thr);
        z.block(j * K, l * K, K, K) = zb;
        if (l != j) z.block(l * K, j * K, K, K) = zb.transpose();
      }
  };

  AdmmResult res = admm_core(s, p, K, cfg, prox, std::move(z0), std::move(u0));
  if (warm != nullptr) {
    warm->z = res.z;
    warm->u = res.u;
    warm->alpha = alpha;
  }
  // Scale back; exact zeros survive the multiplication, and (l,j) was stored
  // as the exact transpose of (j,l), so symmetrization preserves sparsity.
  Eigen::MatrixXd out = alpha * res.z;
  symmetrize(out);
  return BlockMatrix(std::move(out), p, K);
}

BlockMatrix desparsify(const BlockMatrix& theta, const BlockMatrix& sigma) {
  if (theta.dim() != sigma.dim() || theta.p != sigma.p)
    throw std::invalid_argument("desparsify: dimension mismatch");
  Eigen::MatrixXd m =
      2.0 * theta.data - theta.data * sigma.data * theta.data;
  symmetrize(m);
  return BlockMatrix(std::move(m), theta.p, theta.K);
}

BlockMatrix constrained_mle(const BlockMatrix& sn_perm, const BlockMatrix& theta0,
                            const std::vector<std::pair<int, int>>& free_set,
                            const AdmmConfig& cfg, AdmmWarmStart* warm) {
  const int p = sn_perm.p, K = sn_perm.K, dim = sn_perm.dim();
  if (theta0.p != p || theta0.K != K)
    throw std::invalid_argument("constrained_mle: dimension mismatch");

  std::vector<char> is_free(static_cast<size_t>(p) * p, 0);
  for (auto [j, l] : free_set) {
    if (j < 0 || j >= p || l < 0 || l >= p)
      throw std::invalid_argument("constrained_mle: free pair out of range");
    is_free[static_cast<size_t>(j) * p + l] = 1;
    is_free[static_cast<size_t>(l) * p + j] = 1;
  }

  const double alpha = scale_factor(sn_perm.data);
  const Eigen::MatrixXd s = alpha * sn_perm.data;
  const Eigen::MatrixXd theta0_scaled = theta0.data / alpha;

  Eigen::MatrixXd z0, u0;
  if (warm != nullptr && warm->valid(dim)) {
    z0 = warm->z * (warm->alpha / alpha);
    u0 = warm->u * (alpha / warm->alpha);
  } else {
    z0 = theta0_scaled;  // feasible start
    u0 = Eigen::MatrixXd::Zero(dim, dim);
  }

  auto prox = [&](const Eigen::MatrixXd&, Eigen::MatrixXd& z) {
    // z arrives holding A; overwrite the pinned blocks.
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l)
        if (!is_free[static_cast<size_t>(j) * p + l])
          z.block(j * K, l * K, K, K) = theta0_scaled.block(j * K, l * K, K, K);
  };

  AdmmResult res = admm_core(s, p, K, cfg, prox, std::move(z0), std::move(u0));
  if (warm != nullptr) {
    warm->z = res.z;
    warm->u = res.u;
    warm->alpha = alpha;
  }

  Eigen::MatrixXd out = alpha * res.z;
  symmetrize(out);
  // Pinned blocks are bitwise equal to theta0's, absorbing scaling rounding.
  for (int j = 0; j < p; ++j)
    for (int l = 0; l < p; ++l)
      if (!is_free[static_cast<size_t>(j) * p + l])
        out.block(j * K, l * K, K, K) = theta0.block(j, l);
  return BlockMatrix(std::move(out), p, K);
}

Eigen::MatrixXd block_frobenius(const BlockMatrix& theta_a, const BlockMatrix& theta_b) {
  if (theta_a.p != theta_b.p || theta_a.K != theta_b.K)
    throw std::invalid_argument("block_frobenius: dimension mismatch");
  Eigen::MatrixXd d(theta_a.p, theta_a.p);
  for (int j = 0; j < theta_a.p; ++j)
    for (int l = 0; l <= j; ++l) {
      d(j, l) = (theta_a.block(j, l) - theta_b.block(j, l)).norm();
      d(l, j) = d(j, l);
    }
  return d;
}

double log_det_pd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("non-PD evaluation");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double log_likelihood(const BlockMatrix& theta, const Eigen::MatrixXd& sn_perm) {
  if (sn_perm.rows() != theta.dim() || sn_perm.cols() != theta.dim())
    throw std::invalid_argument("log_likelihood: dimension mismatch");
  return log_det_pd(theta.data) - sn_perm.cwiseProduct(theta.data).sum();
}

std::pair<BlockMatrix, bool> clip_to_pd(const BlockMatrix& m, double eps) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.data);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() >= eps) return {m, false};
  Eigen::VectorXd d = eig.eigenvalues().cwiseMax(eps);
  Eigen::MatrixXd out =
      eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
  symmetrize(out);
  return {BlockMatrix(std::move(out), m.p, m.K), true};
}

Eigen::MatrixXd xi_order_from_components(const std::vector<Eigen::MatrixXd>& comps,
                                         int p, int K) {
  if (static_cast<int>(comps.size()) != K)
    throw std::invalid_argument("expected K component matrices");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p * K, p * K);
  for (int k = 0; k < K; ++k) {
    if (comps[k].rows() != p || comps[k].cols() != p)
      throw std::invalid_argument("component matrix must be p x p");
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l) out(j * K + k, l * K + k) = comps[k](j, l);
  }
  return out;
}

}  // namespace mpc
