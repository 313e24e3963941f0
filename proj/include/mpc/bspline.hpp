#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mpc {

// Cubic B-spline basis on [a, b] with clamped, equally spaced knots.
class BSplineBasis {
 public:
  BSplineBasis(int basis_count, double a, double b);

  int size() const { return nbasis_; }
  double lower() const { return a_; }
  double upper() const { return b_; }

  // Values (deriv = 0) or derivatives (deriv = 1, 2) of all basis functions
  // at x, clamped to [a, b].
  Eigen::VectorXd eval_row(double x, int deriv = 0) const;

  // Design matrix at the given points; row h holds eval_row(x[h], deriv).
  Eigen::MatrixXd design(const Eigen::VectorXd& x, int deriv = 0) const;

  // Exact Gram matrix of second derivatives: P_ab = integral of B_a'' B_b''.
  // Second derivatives are piecewise linear, so 2-point Gauss per knot
  // interval integrates the products exactly.
  Eigen::MatrixXd curvature_penalty() const;

 private:
  int nbasis_;
  double a_, b_;
  Eigen::VectorXd knots_;
};

// Penalized least-squares smoother for many curves that share one grid.
// Normal-equation factorizations and hat-matrix traces are computed once
// per penalty value and reused across curves.
class SmoothingPlan {
 public:
  SmoothingPlan(const Eigen::VectorXd& grid, int basis_count,
                const std::vector<double>& penalty_grid);

  struct Fit {
    Eigen::VectorXd coeffs;
    double penalty = 0.0;
    double gcv = 0.0;
  };

  // GCV-selected penalized spline fit of one curve sampled on the grid.
  // Throws std::runtime_error("smoothing failed") if the normal equations
  // are singular at every penalty value.
  Fit fit_curve(const Eigen::VectorXd& y) const;

  // Fitted values of a fit on an arbitrary set of points in [a, b].
  Eigen::VectorXd evaluate(const Fit& fit, const Eigen::VectorXd& x) const;

  const BSplineBasis& basis() const { return basis_; }

 private:
  BSplineBasis basis_;
  Eigen::VectorXd grid_;
  Eigen::MatrixXd design_;
  std::vector<double> penalties_;
  // Per usable penalty value: factorization of B'B + kappa*P and tr(H).
  struct PenaltySolve {
    double kappa;
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    double trace_hat;
  };
  std::vector<PenaltySolve> solves_;
};

}  // namespace mpc
