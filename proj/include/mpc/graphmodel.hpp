#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mpc {

// Bookkeeping for the pK x pK permutation between component-major order
// (eta: scores grouped by component) and channel-major order (xi: scores
// grouped by channel). Positions are 0-based: eta position of score (k,j)
// is k*p + j, xi position is j*K + k.
struct PermutationSpec {
  int p = 0;
  int K = 0;

  int dim() const { return p * K; }
  int xi_to_eta(int xi) const { return (xi % K) * p + xi / K; }
  int eta_to_xi(int eta) const { return (eta % p) * K + eta / p; }
  std::vector<int> index_map() const;   // eta index for each xi position
  Eigen::MatrixXd dense() const;        // explicit P with xi = P * eta
};

enum class PermuteDirection { to_xi, to_eta };

// Conjugation by P (to_xi: P M P^T) or by P^T (to_eta: P^T M P).
Eigen::MatrixXd permute(const PermutationSpec& spec, const Eigen::MatrixXd& m,
                        PermuteDirection direction);

// Symmetric pK x pK matrix in xi order, viewed as a p x p grid of K x K
// blocks; block (j,l) couples channels j and l.
struct BlockMatrix {
  Eigen::MatrixXd data;
  int p = 0;
  int K = 0;

  BlockMatrix() = default;
  BlockMatrix(Eigen::MatrixXd d, int p_, int K_);

  int dim() const { return p * K; }
  Eigen::Block<Eigen::MatrixXd> block(int j, int l) {
    return data.block(j * K, l * K, K, K);
  }
  Eigen::Block<const Eigen::MatrixXd> block(int j, int l) const {
    return data.block(j * K, l * K, K, K);
  }
  bool symmetric(double tol = 1e-12) const;
};

// p x p matrix of block Frobenius norms.
Eigen::MatrixXd block_norms(const BlockMatrix& m);

struct AdmmConfig {
  double penalty = 2.0;  // ADMM rho (distinct from the MEWMC weight)
  int max_iter = 500;
  double tol_primal = 0.0;  // <= 0 means 1e-6 * pK
  double tol_dual = 0.0;
  bool use_fast_path = true;
};

class AdmmError : public std::runtime_error {
 public:
  AdmmError(const std::string& what, double primal, double dual, int iterations)
      : std::runtime_error(what), primal_residual(primal), dual_residual(dual),
        iterations(iterations) {}
  double primal_residual;
  double dual_residual;
  int iterations;
};

// Warm-start state for repeated ADMM solves on slowly changing inputs.
// Held in the solver's internal (unit-scale) coordinates.
struct AdmmWarmStart {
  Eigen::MatrixXd z;
  Eigen::MatrixXd u;
  double alpha = 0.0;
  bool valid(int dim) const {
    return alpha > 0.0 && z.rows() == dim && z.cols() == dim && u.rows() == dim;
  }
};

// In-control graphical-model fit. theta0 is the sparse adaptive-lasso
// estimate, theta0_ridge the nonsparse initializer behind its weights,
// theta0_desparse the bias-corrected 2*theta0 - theta0*sigma0*theta0
// (symmetric but possibly indefinite), sigma0 = P Omega0 P^T.
struct PrecisionFit {
  BlockMatrix theta0;
  BlockMatrix theta0_ridge;
  BlockMatrix theta0_desparse;
  BlockMatrix sigma0;
  double lasso_penalty = 0.0;
  double ridge_penalty = 0.0;       // gamma used for Phase II / diagnostics
  double ridge_penalty_init = 0.0;  // gamma of the T = 0 initializer
};

// --- spectral building blocks (also exercised directly by tests) ---

// True when every K x K block of the xi-order matrix is diagonal within tol,
// i.e. the eta-order conjugation P^T m P is block diagonal across components.
bool is_eta_block_diagonal(const Eigen::MatrixXd& m, int p, int K,
                           double tol = 1e-10);

// ADMM step 1: minimizer of -log|Theta| + tr(E_base Theta) stationarity via
// the eigenvalue map (-d + sqrt(d^2 + 4 rho)) / (2 rho) applied to E.
Eigen::MatrixXd admm_step1_full(const Eigen::MatrixXd& e, double rho_admm);
// Same map computed from K per-component p x p eigendecompositions;
// requires an eta-block-diagonal input.
Eigen::MatrixXd admm_step1_eta_fast(const Eigen::MatrixXd& e, double rho_admm,
                                    int p, int K);

// Group soft-threshold of one block: A * (||A||_F - thr)_+ / ||A||_F.
Eigen::MatrixXd block_soft_threshold(const Eigen::MatrixXd& a_block, double thr);

// --- operations ---

// Unique maximizer of log|Theta| - tr(S Theta) - (gamma/2) tr[(Theta-T)^T (Theta-T)],
// computed in closed form from the stationarity condition. Always symmetric PD.
BlockMatrix ridge_precision(const Eigen::MatrixXd& s, const Eigen::MatrixXd& target,
                            double gamma, int p, int K,
                            bool use_fast_path = true);

// Adaptive functional graphical lasso: block group-lasso penalized Gaussian
// likelihood solved by ADMM; returns the exactly block-sparse Z iterate.
// weights(j,l) are the Frobenius norms of the ridge initializer's blocks.
BlockMatrix adaptive_fglasso(const BlockMatrix& sigma0, const Eigen::MatrixXd& weights,
                             double lambda, const AdmmConfig& cfg,
                             AdmmWarmStart* warm = nullptr);

// De-sparsified estimator 2*theta - theta*sigma*theta, symmetrized.
BlockMatrix desparsify(const BlockMatrix& theta, const BlockMatrix& sigma);

// Constrained MLE: maximize log|Theta| - tr(sn_perm Theta) with blocks
// outside free_set pinned to theta0's blocks (exactly, on return).
// free_set holds lower-triangular pairs (j,l), l <= j, treated symmetrically.
BlockMatrix constrained_mle(const BlockMatrix& sn_perm, const BlockMatrix& theta0,
                            const std::vector<std::pair<int, int>>& free_set,
                            const AdmmConfig& cfg, AdmmWarmStart* warm = nullptr);

// D(j,l) = ||A_jl - B_jl||_F, including diagonal blocks.
Eigen::MatrixXd block_frobenius(const BlockMatrix& theta_a, const BlockMatrix& theta_b);

// log|Theta| - tr(sn_perm Theta); throws on a non-PD theta.
double log_likelihood(const BlockMatrix& theta, const Eigen::MatrixXd& sn_perm);
double log_det_pd(const Eigen::MatrixXd& m);  // Cholesky log-determinant

// Eigenvalues below eps are raised to eps; second member reports whether
// any clipping happened.
std::pair<BlockMatrix, bool> clip_to_pd(const BlockMatrix& m, double eps = 1e-8);

// Assemble the xi-order block-diagonal-per-component matrix from K p x p
// component matrices: entry (j*K+k, l*K+k) = comps[k](j,l).
Eigen::MatrixXd xi_order_from_components(const std::vector<Eigen::MatrixXd>& comps,
                                         int p, int K);

}  // namespace mpc
