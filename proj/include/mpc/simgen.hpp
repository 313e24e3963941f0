#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mpc/fda.hpp"
#include "mpc/graphmodel.hpp"
#include "mpc/monitor.hpp"
#include "mpc/rng.hpp"

namespace mpc {

struct SimModelSpec {
  enum class Model { I, II, III };
  Model model = Model::I;
  int p = 10;
  int M = 5;            // Fourier basis size; also the block size of Theta0
  double noise_sd = 0.5;
  int n_grid = 100;
  std::uint64_t rng_seed = 1;
};

SimModelSpec::Model parse_model_id(const std::string& id);
std::string model_id_string(SimModelSpec::Model m);

struct ScenarioSpec {
  enum class Scenario { I, II, III, IV };
  Scenario scenario = Scenario::I;
  int n_el = 1;
  int severity = 0;  // SL in {0,..,4}
  std::uint64_t rng_seed = 2;

  // Filled by apply_scenario for exact replay.
  std::vector<std::pair<int, int>> selected_blocks;
  double delta = 0.0;
  double delta_max = 0.0;
};

ScenarioSpec::Scenario parse_scenario_id(const std::string& id);
std::string scenario_id_string(ScenarioSpec::Scenario s);

struct ArlReport {
  std::vector<RunLength> run_lengths;
  double arl = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool ci_upper_unbounded = false;  // every run censored
  int n_seq = 0;
  int l_seq = 0;
  std::uint64_t stream_seed = 0;
  SimModelSpec model_spec;
  ScenarioSpec scenario;
};

// Banded base matrix A: unit diagonal, 0.6 on the first band, 0.3 on the
// second.
Eigen::MatrixXd model_base_matrix(int m);

// In-control precision matrices of the three simulation models (block size M).
BlockMatrix build_theta0(const SimModelSpec& spec);

// Out-of-control precision from the scenario shift; records the randomized
// block choices and the resolved shift parameter in `spec`.
BlockMatrix apply_scenario(const BlockMatrix& theta0, ScenarioSpec& spec);

// Fourier design matrix on the grid: 1, sqrt(2) sin(2 pi l t),
// sqrt(2) cos(2 pi l t), ...
Eigen::MatrixXd fourier_design(const Eigen::VectorXd& grid, int m);

// Incremental generator of noisy profile observations with coefficient
// precision theta.
class ProfileStreamer {
 public:
  ProfileStreamer(const BlockMatrix& theta, const SimModelSpec& spec, Rng rng);
  Eigen::MatrixXd next();  // p x n_grid raw observation
  const Eigen::VectorXd& grid() const { return grid_; }

 private:
  int p_, m_, n_;
  double noise_sd_;
  Eigen::VectorXd grid_;
  Eigen::MatrixXd basis_;       // n x M
  Eigen::MatrixXd chol_upper_;  // U with theta = U^T U; coeffs = U^{-1} z
  Rng rng_;
};

ProfileSample generate_profiles(const BlockMatrix& theta, int n_obs,
                                const SimModelSpec& spec);

// Stream freshly generated observations through the chart until signal or
// l_seq, n_seq times; censored-MLE ARL and a 95% interval.
ArlReport evaluate_arl(const CalibratedChart& chart, const SmoothingConfig& smoothing,
                       const BlockMatrix& theta1, const SimModelSpec& spec,
                       const ScenarioSpec& scenario, int n_seq, int l_seq,
                       std::uint64_t stream_seed, int n_threads = 0);

}  // namespace mpc
