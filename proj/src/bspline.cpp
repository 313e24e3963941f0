#include "mpc/bspline.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mpc {

BSplineBasis::BSplineBasis(int basis_count, double a, double b)
    : nbasis_(basis_count), a_(a), b_(b) {
  if (basis_count < 4) throw std::invalid_argument("basis_count must be >= 4");
  if (!(a < b)) throw std::invalid_argument("empty basis interval");
  // Order-4 clamped knots: 4 copies of each endpoint, nbasis-4 interior.
  const int n_knots = nbasis_ + 4;
  knots_.resize(n_knots);
  const int n_interior = nbasis_ - 4;
  for (int i = 0; i < 4; ++i) {
    knots_[i] = a;
    knots_[n_knots - 1 - i] = b;
  }
  for (int i = 0; i < n_interior; ++i)
    knots_[4 + i] = a + (b - a) * (i + 1) / (n_interior + 1);
}

namespace {

// Order-m basis values at x for all splines, given the full knot vector.
// values[i] = B_{i,m}(x), i = 0 .. n_knots - m - 1.
void raise_order(const Eigen::VectorXd& knots, std::vector<double>& values,
                 int m, double x) {
  const int count = static_cast<int>(knots.size()) - m;
  for (int i = 0; i < count; ++i) {
    double v = 0.0;
    const double dl = knots[i + m - 1] - knots[i];
    const double dr = knots[i + m] - knots[i + 1];
    if (dl > 0.0) v += (x - knots[i]) / dl * values[i];
    if (dr > 0.0) v += (knots[i + m] - x) / dr * values[i + 1];
    values[i] = v;
  }
  values.resize(count);
}

}  // namespace

Eigen::VectorXd BSplineBasis::eval_row(double x, int deriv) const {
  if (x < a_) x = a_;
  if (x > b_) x = b_;
  const int n_knots = static_cast<int>(knots_.size());

  // Order-1 indicators; x == b_ is assigned to the last nonempty span.
  std::vector<double> vals(n_knots - 1, 0.0);
  int span = -1;
  for (int i = 0; i < n_knots - 1; ++i)
    if (knots_[i] <= x && x < knots_[i + 1]) {
      span = i;
      break;
    }
  if (span < 0) {
    for (int i = n_knots - 2; i >= 0; --i)
      if (knots_[i] < knots_[i + 1]) {
        span = i;
        break;
      }
  }
  vals[span] = 1.0;

  const int max_order = 4 - deriv;
  for (int m = 2; m <= max_order; ++m) raise_order(knots_, vals, m, x);

  // Differentiate the order-(4-q) values up to order 4:
  // d/dx B_{i,m} = (m-1) (B_{i,m-1}/(t_{i+m-1}-t_i) - B_{i+1,m-1}/(t_{i+m}-t_{i+1})).
  for (int m = max_order + 1; m <= 4; ++m) {
    const int count = n_knots - m;
    std::vector<double> next(count, 0.0);
    for (int i = 0; i < count; ++i) {
      double v = 0.0;
      const double dl = knots_[i + m - 1] - knots_[i];
      const double dr = knots_[i + m] - knots_[i + 1];
      if (dl > 0.0) v += vals[i] / dl;
      if (dr > 0.0) v -= vals[i + 1] / dr;
      next[i] = (m - 1) * v;
    }
    vals = std::move(next);
  }

  Eigen::VectorXd row(nbasis_);
  for (int i = 0; i < nbasis_; ++i) row[i] = vals[i];
  return row;
}

Eigen::MatrixXd BSplineBasis::design(const Eigen::VectorXd& x, int deriv) const {
  Eigen::MatrixXd out(x.size(), nbasis_);
  for (Eigen::Index h = 0; h < x.size(); ++h)
    out.row(h) = eval_row(x[h], deriv).transpose();
  return out;
}

Eigen::MatrixXd BSplineBasis::curvature_penalty() const {
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(nbasis_, nbasis_);
  const double gauss = 1.0 / std::sqrt(3.0);
  for (int i = 0; i < static_cast<int>(knots_.size()) - 1; ++i) {
    const double u = knots_[i], v = knots_[i + 1];
    if (!(v > u)) continue;
    const double mid = 0.5 * (u + v), half = 0.5 * (v - u);
    for (int g = 0; g < 2; ++g) {
      const double xg = mid + (g == 0 ? -1.0 : 1.0) * gauss * half;
      const Eigen::VectorXd d2 = eval_row(xg, 2);
      pen.selfadjointView<Eigen::Lower>().rankUpdate(d2, half);
    }
  }
  return pen.selfadjointView<Eigen::Lower>();
}

SmoothingPlan::SmoothingPlan(const Eigen::VectorXd& grid, int basis_count,
                             const std::vector<double>& penalty_grid)
    : basis_(basis_count, grid[0], grid[grid.size() - 1]), grid_(grid) {
  if (penalty_grid.empty())
    throw std::invalid_argument("penalty grid must be nonempty");
  for (double k : penalty_grid)
    if (!(k > 0.0)) throw std::invalid_argument("penalty values must be > 0");
  penalties_ = penalty_grid;

  design_ = basis_.design(grid_);
  const Eigen::MatrixXd btb = design_.transpose() * design_;
  const Eigen::MatrixXd pen = basis_.curvature_penalty();

  for (double kappa : penalties_) {
    Eigen::MatrixXd m = btb + kappa * pen;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(dmax > 0.0) || d.minCoeff() < 1e-12 * dmax) continue;  // singular: skip
    const double trace_hat = ldlt.solve(btb).trace();
    solves_.push_back({kappa, std::move(ldlt), trace_hat});
  }
  if (solves_.empty()) throw std::runtime_error("smoothing failed");
}

SmoothingPlan::Fit SmoothingPlan::fit_curve(const Eigen::VectorXd& y) const {
  if (y.size() != grid_.size())
    throw std::invalid_argument("curve length does not match grid");
  const double n = static_cast<double>(grid_.size());
  const Eigen::VectorXd bty = design_.transpose() * y;

  Fit best;
  double best_gcv = std::numeric_limits<double>::infinity();
  for (const auto& s : solves_) {
    const Eigen::VectorXd c = s.ldlt.solve(bty);
    const double rss = (y - design_ * c).squaredNorm();
    const double denom = n - s.trace_hat;
    if (!(denom > 0.0)) continue;
    const double gcv = n * rss / (denom * denom);
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best.coeffs = c;
      best.penalty = s.kappa;
      best.gcv = gcv;
    }
  }
  if (!std::isfinite(best_gcv)) throw std::runtime_error("smoothing failed");
  return best;
}

Eigen::VectorXd SmoothingPlan::evaluate(const Fit& fit,
                                        const Eigen::VectorXd& x) const {
  return basis_.design(x) * fit.coeffs;
}

}  // namespace mpc
