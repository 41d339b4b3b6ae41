#pragma once

#include "dsa/common.hpp"
#include "dsa/constants.hpp"
#include "dsa/problems.hpp"
#include "dsa/topology.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dsa {

/// gamma_t = a0 / sqrt(t + a1) for t = 0..T+1, optionally clipped at the step ceiling.
struct StepSchedule {
  double a0 = 0;
  double a1 = 1;        // +infinity selects the constant schedule gamma_t = a0
  long horizon = 0;     // T
  std::vector<double> gammas;  // gammas[t] = gamma_t, t = 0..T+1
  double a_hat = 0;     // sup_t (gamma_t - gamma_{t+1}) / gamma_t^2
  double a_ratio = 1;   // sup_t gamma_t / gamma_{t+1}
  std::optional<double> cap;
  bool cap_binds = false;  // the ceiling lowered at least one step size
  std::vector<std::string> warnings;

  bool constant() const { return std::isinf(a1); }
  double gamma(long t) const { return gammas[static_cast<std::size_t>(t)]; }
  double max_gamma() const;
};

/// Without `constants` no ceiling is armed. With them, rho_bar, a_hat and a_ratio are
/// filled in and every step is clipped at min{1, rho_bar/(2 sigma_o), c0/(2 Ctilde_mk)}.
StepSchedule make_step_schedule(double a0, double a1, long T,
                                const std::optional<ConstantsBundle>& constants = std::nullopt,
                                std::optional<double> rho_bar = std::nullopt);

/// Copies the schedule-derived constants into a bundle.
ConstantsBundle with_schedule(ConstantsBundle c, const StepSchedule& steps);

/// Stacked parameters theta = (theta_1; ...; theta_n) viewed as a d x n matrix (column i = theta_i).
struct NetworkState {
  Matrix theta;
  long t = 0;

  int agents() const { return static_cast<int>(theta.cols()); }
  int dim() const { return static_cast<int>(theta.rows()); }
  Vector consensual() const { return theta.rowwise().mean(); }
  /// (U^T kron I) theta, as a d x (n-1) matrix.
  Matrix error(const ProjectionBasis& basis) const { return theta * basis.U; }
};

/// ((1/n) 1^T kron I) theta and (U^T kron I) theta for a stacked n*d vector.
template <typename Derived>
std::pair<Vector, Vector> decompose(const Eigen::MatrixBase<Derived>& stacked, int dim, const ProjectionBasis& basis) {
  const int n = basis.nodes();
  if (stacked.size() != static_cast<long>(n) * dim) throw DimensionError("stacked vector has wrong length");
  const Vector flat = stacked;
  const Eigen::Map<const Matrix> theta(flat.data(), dim, n);
  const Vector consensual = theta.rowwise().mean();
  const Matrix err = theta * basis.U;
  return {consensual, Eigen::Map<const Vector>(err.data(), err.size())};
}

/// (1 kron I) consensual + (U kron I) error.
template <typename D1, typename D2>
Vector recompose(const Eigen::MatrixBase<D1>& consensual, const Eigen::MatrixBase<D2>& error, const ProjectionBasis& basis) {
  const int n = basis.nodes();
  const long dim = consensual.size();
  if (error.size() != (n - 1) * dim) throw DimensionError("error vector has wrong length");
  const Vector flat = error;
  const Eigen::Map<const Matrix> err(flat.data(), dim, n - 1);
  const Matrix theta = consensual * Eigen::RowVectorXd::Ones(n) + err * basis.U.transpose();
  return Eigen::Map<const Vector>(theta.data(), theta.size());
}

enum class Checkpoints { All, Geometric };

struct RecordOptions {
  Checkpoints checkpoints = Checkpoints::All;
  double geometric_ratio = 1.1;
  /// Iterations recorded regardless of the checkpoint policy.
  std::vector<long> always_record;
  /// e0/e1 and the exact-identity residuals; costs extra oracle evaluations.
  bool diagnostics = false;
  /// Initial chain state; drawn from the stationary law when absent.
  std::optional<int> initial_state;
  /// Initial parameters (d x n). Defaults to zero; columns must coincide unless relaxed.
  std::optional<Matrix> theta0;
  bool allow_unequal_init = false;
  double divergence_limit = 1e12;
};

/// One row of a trajectory, for the iterate theta^(t) and the step gamma_{t+1}.
struct TrajectoryRow {
  long t = 0;
  double gamma = 0;
  double h_bar_sq = 0;   // |h_bar(theta_bar_c)|^2
  double grad_sq = 0;    // |grad V(theta_bar_c)|^2
  double cons_err = 0;   // |theta_tilde_o|
  double potential = 0;  // V(theta_bar_c)
  double max_dev = 0;    // max_i |theta_i - theta_bar_c|
  std::vector<double> dev;  // |theta_i - theta_bar_c| per agent
  // diagnostics
  double e0 = std::numeric_limits<double>::quiet_NaN();
  double e1 = std::numeric_limits<double>::quiet_NaN();
  double res_c = std::numeric_limits<double>::quiet_NaN();  // consensual recursion (incl. e0/e1 form)
  double res_o = std::numeric_limits<double>::quiet_NaN();  // error recursion
  double res_d = std::numeric_limits<double>::quiet_NaN();  // decomposition reconstruction
};

/// Averages of row quantities under Pr(tau = t) = gamma_{t+1} / sum_s gamma_{s+1}.
struct TauAverages {
  double h_bar_sq = 0;
  double grad_sq = 0;
  double cons_err = 0;
  std::vector<double> dev;  // per agent
  double max_agent_dev() const;
};

struct TrajectoryRecord {
  int agents = 0;
  int dim = 0;
  long horizon = 0;
  std::uint64_t seed = 0;
  long tau = 0;                 // terminating time drawn for this run
  bool diagnostics = false;
  std::vector<TrajectoryRow> rows;
  TauAverages weighted;         // exact expectation over tau given the path
  TrajectoryRow at_tau;         // the row at the drawn tau
  Matrix final_theta;           // theta^(T)
  double max_res_c = 0, max_res_o = 0, max_res_d = 0;  // over every step (diagnostics)
};

TrajectoryRecord run_dsa(const ProblemOracle& oracle, const MixingSchedule& mixing, const StepSchedule& steps,
                         long T, std::uint64_t seed, const RecordOptions& options = {});

/// tau in {0..T} with Pr(tau = t) proportional to gamma_{t+1}.
long sample_terminating_time(const StepSchedule& steps, long T, std::uint64_t seed);

/// Seed derivations used by a run, so callers can reproduce every stream.
std::uint64_t tau_seed(std::uint64_t run_seed);
std::uint64_t stream_seed(std::uint64_t run_seed, int agent);
std::uint64_t run_seed(std::uint64_t master, int run);

struct EnsembleSpec {
  const ProblemOracle* oracle = nullptr;
  const MixingSchedule* mixing = nullptr;
  const StepSchedule* steps = nullptr;
  long T = 0;
  RecordOptions record;
  std::vector<long> checkpoints;  // fixed t at which column means are reported
};

struct MeanSe {
  double mean = 0;
  double se = 0;
};

MeanSe mean_se(const std::vector<double>& values);

struct CheckpointStats {
  long t = 0;
  MeanSe h_bar_sq, grad_sq, cons_err, max_dev;
};

struct EnsembleResult {
  long T = 0;
  int runs = 0;
  std::uint64_t master_seed = 0;
  std::vector<TrajectoryRecord> records;  // successful runs, in run order
  std::vector<std::string> status;        // "ok" or the divergence message, per run
  std::vector<long> taus;
  // Expectations over tau(T) and the Markov noise.
  MeanSe h_bar_sq, grad_sq, cons_err;
  std::vector<MeanSe> agent_dev;  // E|theta_i - theta_bar_c| per agent
  MeanSe max_agent_dev;           // the agent attaining max_i E|theta_i - theta_bar_c|
  // Same quantities read off the single drawn tau of each run.
  MeanSe sampled_h_bar_sq, sampled_grad_sq, sampled_cons_err;
  std::vector<CheckpointStats> checkpoints;

  bool all_ok() const;
};

/// Independent runs with seeds derived from `master_seed`; `jobs` worker threads.
/// Aggregation is independent of completion order.
EnsembleResult run_ensemble(const EnsembleSpec& spec, int n_runs, std::uint64_t master_seed, int jobs = 1);

}  // namespace dsa
