#pragma once

#include "dsa/analysis.hpp"
#include "dsa/engine.hpp"
#include "dsa/io.hpp"
#include "dsa/problems.hpp"
#include "dsa/topology.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dsa {

inline constexpr int kSchemaVersion = 1;

/// Process exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitAssumption = 1, kExitInput = 2, kExitDivergence = 3 };

struct ProblemConfig {
  std::string kind;  // "td0" or "sgd-ergodic"
  // td0
  Matrix transition, features, rewards;
  double discount = 0.9;
  // sgd-ergodic
  std::vector<Dataset> data;
  std::vector<Matrix> chains;
};

struct TopologyConfig {
  std::string source;  // "generator", "edges" or "matrix"
  std::string generator = "ring";
  int nodes = 0;       // 0: number of agents
  double p = 0.3;
  std::optional<std::uint64_t> seed;
  std::vector<Graph::Edge> edges;  // 0-based
  Matrix matrix;
  std::string weights = "metropolis";
  bool time_varying = false;
  int block = 1;
  EdgePolicy policy = EdgePolicy::RoundRobin;
  std::vector<std::vector<Graph::Edge>> steps;  // explicit per-step edge sets
};

struct ScheduleConfig {
  double a0 = 1.0;
  double a1 = 1.0;
  long T = 1000;
  bool clip = true;
  std::vector<long> T_grid{1000, 10000, 100000};
};

struct OutputConfig {
  std::string directory = "out";
  Checkpoints checkpoints = Checkpoints::All;
  double geometric_ratio = 1.1;
  bool diagnostics = false;
};

struct EstimationConfig {
  double radius = 10.0;
  int points = 1000;
  std::optional<std::uint64_t> seed;
  int mixing_horizon = 200;
};

struct ExperimentConfig {
  ProblemConfig problem;
  TopologyConfig topology;
  ScheduleConfig schedule;
  int runs = 20;
  std::uint64_t seed = 0;
  OutputConfig outputs;
  EstimationConfig estimation;
  std::optional<Vector> theta0;
  Json raw;              // the parsed document (with CLI overrides applied)
  std::string base_dir;  // relative paths resolve here
};

/// Throws ConfigError naming the offending field; unknown fields are rejected.
ExperimentConfig parse_config(const Json& doc, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

std::unique_ptr<ProblemOracle> build_problem(const ExperimentConfig& cfg);
MixingSchedule build_mixing(const ExperimentConfig& cfg, int agents);

struct Prepared {
  std::unique_ptr<ProblemOracle> oracle;
  MixingSchedule mixing;
  ConstantsBundle constants;  // includes rho_bar, n_agents and the schedule constants
  StepSchedule steps;
  Vector theta0;
  double V0 = 0;
  double grad0 = 0;
};

/// Problem constants: analytic where known, grid estimates otherwise, plus rho_bar and n.
ConstantsBundle experiment_constants(const ExperimentConfig& cfg, const ProblemOracle& oracle,
                                     const MixingSchedule& mixing);
Prepared prepare(const ExperimentConfig& cfg, long T);

/// Ensemble of cfg.runs trajectories of horizon T with the recording policy of the config.
EnsembleResult run_experiment(const ExperimentConfig& cfg, const Prepared& prep, long T, int jobs);

/// Writes the fixed output layout: config.json, constants.json, runs/run_<k>.csv, aggregate.json.
void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg, const Prepared& prep,
                       const EnsembleResult& ens);

struct AssumptionCheck {
  std::string id;
  bool ok = true;
  bool informational = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  bool ok() const;
  std::string text() const;
};

ValidationReport validate_experiment(const ExperimentConfig& cfg);

/// Folds per-run reports: a check passes only if it passes in every run where it binds.
VerificationReport merge_reports(const std::vector<VerificationReport>& reports);

struct CliOptions {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool diagnostics = false;
};

struct BoundParams {
  double a0 = 1.0;
  double a1 = 1.0;
  long T = 1000;
  bool clip = false;
  std::optional<double> V0, grad0;
};

int cmd_validate(const std::string& config_path, const CliOptions& opts, std::ostream& out, std::ostream& err);
int cmd_run(const std::string& config_path, const CliOptions& opts, std::ostream& out, std::ostream& err);
int cmd_verify(const std::string& run_dir, std::ostream& out, std::ostream& err);
int cmd_bound(const std::string& constants_path, const BoundParams& params, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::string& config_path, const CliOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace dsa
