#include "dsa/experiment.hpp"

#include "dsa/markov.hpp"
#include "dsa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace dsa {

// ---------------------------------------------------------------------------------------
// Config parsing

namespace {

void only_fields(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + "." + key + ": unknown field");
  }
}

double num(const Json& obj, const std::string& where, const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + "." + key + ": not finite");
  return x;
}

long integer(const Json& obj, const std::string& where, const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<long>();
}

std::uint64_t seed_value(const Json& obj, const std::string& where, const char* key) {
  const Json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(where + "." + key + ": expected a nonnegative 64-bit integer");
}

std::string str(const Json& obj, const std::string& where, const char* key) {
  const Json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

std::string resolve(const std::string& base, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(base) / p).string();
}

Matrix matrix_from(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a nonempty array of rows");
  const long rows = static_cast<long>(v.size());
  long cols = -1;
  Matrix m;
  for (long i = 0; i < rows; ++i) {
    const Json& row = v[i];
    if (!row.is_array()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected an array");
    if (cols < 0) {
      cols = static_cast<long>(row.size());
      m.resize(rows, cols);
    }
    if (static_cast<long>(row.size()) != cols) throw ConfigError(where + ": ragged rows");
    for (long j = 0; j < cols; ++j) {
      if (!row[j].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "][" + std::to_string(j) + "]: expected a number");
      m(i, j) = row[j].get<double>();
    }
  }
  return m;
}

Vector vector_from(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  Vector out(static_cast<long>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
    out(static_cast<long>(i)) = v[i].get<double>();
  }
  return out;
}

// Inline table under `key` or a CSV file under `key_path`.
std::optional<Matrix> table(const Json& obj, const std::string& where, const std::string& key, const std::string& base) {
  const std::string path_key = key + "_path";
  if (obj.contains(key) && obj.contains(path_key)) throw ConfigError(where + ": give either " + key + " or " + path_key);
  if (obj.contains(key)) return matrix_from(obj.at(key), where + "." + key);
  if (obj.contains(path_key)) {
    const std::string file = resolve(base, str(obj, where, path_key.c_str()));
    if (!fs::exists(file)) throw ConfigError(where + "." + path_key + ": no such file " + file);
    return load_matrix_csv(file);
  }
  return std::nullopt;
}

Matrix required_table(const Json& obj, const std::string& where, const std::string& key, const std::string& base) {
  auto m = table(obj, where, key, base);
  if (!m) throw ConfigError(where + ": missing " + key);
  return *m;
}

std::vector<Graph::Edge> edges_from(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of [i, j] pairs");
  std::vector<Graph::Edge> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Json& e = v[k];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
      throw ConfigError(where + "[" + std::to_string(k) + "]: expected [i, j] with 1-based integers");
    const int i = e[0].get<int>(), j = e[1].get<int>();
    if (i < 1 || j < 1) throw ConfigError(where + "[" + std::to_string(k) + "]: node indices start at 1");
    out.emplace_back(i - 1, j - 1);
  }
  return out;
}

ProblemConfig parse_problem(const Json& p, const std::string& base) {
  const std::string w = "problem";
  if (!p.is_object() || !p.contains("kind")) throw ConfigError("problem.kind: missing");
  ProblemConfig out;
  out.kind = str(p, w, "kind");
  if (out.kind == "td0") {
    only_fields(p, w, {"kind", "transition", "transition_path", "features", "features_path", "rewards", "rewards_path",
                       "discount", "agents"});
    out.transition = required_table(p, w, "transition", base);
    out.features = required_table(p, w, "features", base);
    out.rewards = required_table(p, w, "rewards", base);
    if (p.contains("discount")) out.discount = num(p, w, "discount");
    if (p.contains("agents") && integer(p, w, "agents") != out.rewards.rows())
      throw ConfigError("problem.agents: does not match the number of reward rows");
  } else if (out.kind == "sgd-ergodic") {
    only_fields(p, w, {"kind", "agents", "dim"});
    const Json& agents = p.at("agents");
    if (!agents.is_array() || agents.empty()) throw ConfigError("problem.agents: expected a nonempty array");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const std::string wi = "problem.agents[" + std::to_string(i) + "]";
      only_fields(agents[i], wi, {"features", "features_path", "targets", "targets_path", "transition", "transition_path"});
      Dataset ds;
      ds.features = required_table(agents[i], wi, "features", base);
      const Matrix t = required_table(agents[i], wi, "targets", base);
      if (t.rows() == 1)
        ds.targets = t.row(0).transpose();
      else if (t.cols() == 1)
        ds.targets = t.col(0);
      else
        throw ConfigError(wi + ".targets: expected a vector");
      out.data.push_back(ds);
      out.chains.push_back(required_table(agents[i], wi, "transition", base));
    }
    if (p.contains("dim") && integer(p, w, "dim") != out.data.front().features.cols())
      throw ConfigError("problem.dim: does not match the feature width");
  } else {
    throw ConfigError("problem.kind: expected 'td0' or 'sgd-ergodic'");
  }
  return out;
}

// targets given inline as a flat list are accepted too
Json normalize_targets(Json doc) {
  if (doc.contains("problem") && doc["problem"].is_object() && doc["problem"].contains("agents") &&
      doc["problem"]["agents"].is_array())
    for (auto& a : doc["problem"]["agents"])
      if (a.is_object() && a.contains("targets") && a["targets"].is_array() && !a["targets"].empty() &&
          a["targets"][0].is_number())
        a["targets"] = Json::array({a["targets"]});
  return doc;
}

TopologyConfig parse_topology(const Json& t, const std::string& base) {
  const std::string w = "topology";
  only_fields(t, w, {"generator", "nodes", "p", "seed", "edges", "edge_list", "matrix", "matrix_path", "weights", "mode",
                     "block", "policy", "steps"});
  TopologyConfig out;
  int sources = 0;
  if (t.contains("generator")) {
    out.source = "generator";
    out.generator = str(t, w, "generator");
    if (out.generator != "ring" && out.generator != "path" && out.generator != "complete" && out.generator != "random")
      throw ConfigError("topology.generator: expected ring, path, complete or random");
    ++sources;
  }
  if (t.contains("edges")) {
    out.source = "edges";
    out.edges = edges_from(t.at("edges"), "topology.edges");
    ++sources;
  }
  if (t.contains("edge_list")) {
    out.source = "edges";
    const std::string file = resolve(base, str(t, w, "edge_list"));
    if (!fs::exists(file)) throw ConfigError("topology.edge_list: no such file " + file);
    const Graph g = load_edge_list(file);
    out.edges.assign(g.edges().begin(), g.edges().end());
    out.nodes = g.nodes();
    ++sources;
  }
  if (auto m = table(t, w, "matrix", base)) {
    out.source = "matrix";
    out.matrix = *m;
    ++sources;
  }
  if (t.contains("steps")) {
    out.source = "steps";
    const Json& s = t.at("steps");
    if (!s.is_array() || s.empty()) throw ConfigError("topology.steps: expected a nonempty array of edge lists");
    for (std::size_t k = 0; k < s.size(); ++k) out.steps.push_back(edges_from(s[k], "topology.steps[" + std::to_string(k) + "]"));
    ++sources;
  }
  if (sources != 1) throw ConfigError("topology: give exactly one of generator, edges, edge_list, matrix, steps");
  if (t.contains("nodes")) out.nodes = static_cast<int>(integer(t, w, "nodes"));
  if (t.contains("p")) out.p = num(t, w, "p");
  if (t.contains("seed")) out.seed = seed_value(t, w, "seed");
  if (t.contains("weights")) {
    out.weights = str(t, w, "weights");
    if (out.weights != "metropolis" && out.weights != "uniform")
      throw ConfigError("topology.weights: expected metropolis or uniform");
  }
  if (t.contains("mode")) {
    const std::string mode = str(t, w, "mode");
    if (mode != "static" && mode != "time-varying") throw ConfigError("topology.mode: expected static or time-varying");
    out.time_varying = mode == "time-varying";
  }
  if (out.source == "steps") out.time_varying = true;
  if (t.contains("block")) out.block = static_cast<int>(integer(t, w, "block"));
  if (out.block < 1) throw ConfigError("topology.block: must be >= 1");
  if (t.contains("policy")) {
    const std::string p = str(t, w, "policy");
    if (p == "round-robin")
      out.policy = EdgePolicy::RoundRobin;
    else if (p == "random")
      out.policy = EdgePolicy::Random;
    else
      throw ConfigError("topology.policy: expected round-robin or random");
  }
  if (out.time_varying && out.source == "matrix") throw ConfigError("topology: a fixed matrix cannot be time-varying");
  return out;
}

}  // namespace

ExperimentConfig parse_config(const Json& input, const std::string& base_dir) {
  const Json doc = normalize_targets(input);
  only_fields(doc, "config", {"schema_version", "problem", "topology", "schedule", "ensemble", "outputs", "estimation",
                              "initial"});
  if (!doc.contains("schema_version")) throw ConfigError("config.schema_version: missing");
  if (integer(doc, "config", "schema_version") != kSchemaVersion)
    throw ConfigError("config.schema_version: unsupported version");
  ExperimentConfig cfg;
  cfg.raw = input;
  cfg.base_dir = base_dir;
  if (!doc.contains("problem")) throw ConfigError("config.problem: missing");
  if (!doc.contains("topology")) throw ConfigError("config.topology: missing");
  cfg.problem = parse_problem(doc.at("problem"), base_dir);
  cfg.topology = parse_topology(doc.at("topology"), base_dir);

  if (doc.contains("schedule")) {
    const Json& s = doc.at("schedule");
    const std::string w = "schedule";
    only_fields(s, w, {"a0", "a1", "T", "cap", "T_grid"});
    if (s.contains("a0")) cfg.schedule.a0 = num(s, w, "a0");
    if (s.contains("a1")) {
      if (s.at("a1").is_string() && s.at("a1").get<std::string>() == "inf")
        cfg.schedule.a1 = std::numeric_limits<double>::infinity();
      else
        cfg.schedule.a1 = num(s, w, "a1");
    }
    if (s.contains("T")) cfg.schedule.T = integer(s, w, "T");
    if (s.contains("cap")) {
      const std::string c = str(s, w, "cap");
      if (c != "clip" && c != "off") throw ConfigError("schedule.cap: expected clip or off");
      cfg.schedule.clip = c == "clip";
    }
    if (s.contains("T_grid")) {
      cfg.schedule.T_grid.clear();
      for (const auto& v : s.at("T_grid")) {
        if (!v.is_number_integer() || v.get<long>() < 1) throw ConfigError("schedule.T_grid: expected positive integers");
        cfg.schedule.T_grid.push_back(v.get<long>());
      }
    }
  }
  if (!(cfg.schedule.a0 > 0)) throw ConfigError("schedule.a0: must be positive");
  if (!(cfg.schedule.a1 >= 1)) throw ConfigError("schedule.a1: must be >= 1");
  if (cfg.schedule.T < 1) throw ConfigError("schedule.T: must be >= 1");

  if (doc.contains("ensemble")) {
    const Json& e = doc.at("ensemble");
    only_fields(e, "ensemble", {"runs", "seed"});
    if (e.contains("runs")) cfg.runs = static_cast<int>(integer(e, "ensemble", "runs"));
    if (e.contains("seed")) cfg.seed = seed_value(e, "ensemble", "seed");
  }
  if (cfg.runs < 1) throw ConfigError("ensemble.runs: must be >= 1");

  if (doc.contains("outputs")) {
    const Json& o = doc.at("outputs");
    only_fields(o, "outputs", {"directory", "checkpoints", "geometric_ratio", "diagnostics"});
    if (o.contains("directory")) cfg.outputs.directory = str(o, "outputs", "directory");
    if (o.contains("checkpoints")) {
      const std::string c = str(o, "outputs", "checkpoints");
      if (c != "all" && c != "geometric") throw ConfigError("outputs.checkpoints: expected all or geometric");
      cfg.outputs.checkpoints = c == "all" ? Checkpoints::All : Checkpoints::Geometric;
    }
    if (o.contains("geometric_ratio")) cfg.outputs.geometric_ratio = num(o, "outputs", "geometric_ratio");
    if (!(cfg.outputs.geometric_ratio > 1)) throw ConfigError("outputs.geometric_ratio: must exceed 1");
    if (o.contains("diagnostics")) {
      if (!o.at("diagnostics").is_boolean()) throw ConfigError("outputs.diagnostics: expected a boolean");
      cfg.outputs.diagnostics = o.at("diagnostics").get<bool>();
    }
  }
  if (doc.contains("estimation")) {
    const Json& e = doc.at("estimation");
    only_fields(e, "estimation", {"radius", "points", "seed", "mixing_horizon"});
    if (e.contains("radius")) cfg.estimation.radius = num(e, "estimation", "radius");
    if (e.contains("points")) cfg.estimation.points = static_cast<int>(integer(e, "estimation", "points"));
    if (e.contains("seed")) cfg.estimation.seed = seed_value(e, "estimation", "seed");
    if (e.contains("mixing_horizon")) cfg.estimation.mixing_horizon = static_cast<int>(integer(e, "estimation", "mixing_horizon"));
    if (!(cfg.estimation.radius > 0)) throw ConfigError("estimation.radius: must be positive");
    if (cfg.estimation.points < 2) throw ConfigError("estimation.points: must be >= 2");
    if (cfg.estimation.mixing_horizon < 2) throw ConfigError("estimation.mixing_horizon: must be >= 2");
  }
  if (doc.contains("initial")) {
    const Json& i = doc.at("initial");
    only_fields(i, "initial", {"theta0"});
    if (i.contains("theta0")) cfg.theta0 = vector_from(i.at("theta0"), "initial.theta0");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const Json doc = read_json_file(path);
  return parse_config(doc, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------------------
// Building blocks

std::unique_ptr<ProblemOracle> build_problem(const ExperimentConfig& cfg) {
  const ProblemConfig& p = cfg.problem;
  if (p.kind == "td0") {
    MdpSpec mdp{p.transition, p.features, p.rewards, p.discount};
    return std::make_unique<Td0Problem>(mdp, static_cast<int>(p.rewards.rows()));
  }
  std::vector<MarkovModel> chains;
  for (const Matrix& m : p.chains) chains.emplace_back(m);
  return std::make_unique<ErgodicSgdProblem>(p.data, std::move(chains));
}

namespace {

std::uint64_t topology_seed(const ExperimentConfig& cfg) {
  return cfg.topology.seed ? *cfg.topology.seed : derive_seed(cfg.seed, 0x7090);
}

Graph build_graph(const ExperimentConfig& cfg, int agents) {
  const TopologyConfig& t = cfg.topology;
  const int n = t.nodes > 0 ? t.nodes : agents;
  if (n != agents) throw DimensionError("topology has " + std::to_string(n) + " nodes for " + std::to_string(agents) + " agents");
  if (t.source == "generator") {
    if (t.generator == "ring") return Graph::ring(n);
    if (t.generator == "path") return Graph::path(n);
    if (t.generator == "complete") return Graph::complete(n);
    return Graph::random_connected(n, t.p, topology_seed(cfg));
  }
  for (const auto& [i, j] : t.edges)
    if (i >= n || j >= n) throw ConfigError("topology.edges: node index exceeds " + std::to_string(n));
  return Graph(n, t.edges);
}

}  // namespace

MixingSchedule build_mixing(const ExperimentConfig& cfg, int agents) {
  const TopologyConfig& t = cfg.topology;
  if (t.source == "matrix") {
    if (t.matrix.rows() != agents || t.matrix.cols() != agents)
      throw DimensionError("topology.matrix must be " + std::to_string(agents) + " x " + std::to_string(agents));
    return make_static_schedule(certify_mixing_matrix(t.matrix));
  }
  if (t.source == "steps") {
    for (const auto& step : t.steps)
      for (const auto& [i, j] : step)
        if (i >= agents || j >= agents) throw ConfigError("topology.steps: node index exceeds " + std::to_string(agents));
    return make_tv_schedule(agents, t.steps, t.block);
  }
  const Graph g = build_graph(cfg, agents);
  if (t.time_varying) return make_tv_schedule(g, t.block, t.policy, derive_seed(topology_seed(cfg), 1));
  return make_static_schedule(t.weights == "uniform" ? build_uniform_weights(g) : build_metropolis_weights(g));
}

namespace {

SampleSpec sample_spec(const ExperimentConfig& cfg) {
  SampleSpec s;
  s.radius = cfg.estimation.radius;
  s.points = cfg.estimation.points;
  s.seed = cfg.estimation.seed ? *cfg.estimation.seed : derive_seed(cfg.seed, 0xE57);
  return s;
}

Vector initial_theta(const ExperimentConfig& cfg, int d) {
  if (!cfg.theta0) return Vector::Zero(d);
  if (cfg.theta0->size() != d) throw ConfigError("initial.theta0: expected " + std::to_string(d) + " entries");
  return *cfg.theta0;
}

}  // namespace

ConstantsBundle experiment_constants(const ExperimentConfig& cfg, const ProblemOracle& oracle,
                                     const MixingSchedule& mixing) {
  ConstantsBundle c = estimate_constants(oracle, sample_spec(cfg));
  c.rho_bar = Constant{mixing.rho_bar, Provenance::Network};
  return c;
}

Prepared prepare(const ExperimentConfig& cfg, long T) {
  Prepared p;
  p.oracle = build_problem(cfg);
  p.mixing = build_mixing(cfg, p.oracle->agents());
  if (!(p.mixing.rho_bar > 0)) throw ConnectivityError("mixing contraction rho_bar is not positive");
  ConstantsBundle c = experiment_constants(cfg, *p.oracle, p.mixing);
  p.steps = cfg.schedule.clip ? make_step_schedule(cfg.schedule.a0, cfg.schedule.a1, T, c, p.mixing.rho_bar)
                              : make_step_schedule(cfg.schedule.a0, cfg.schedule.a1, T);
  p.constants = with_schedule(c, p.steps);
  p.theta0 = initial_theta(cfg, p.oracle->dim());
  p.V0 = p.oracle->potential(p.theta0);
  p.grad0 = p.oracle->gradient(p.theta0).norm();
  return p;
}

EnsembleResult run_experiment(const ExperimentConfig& cfg, const Prepared& prep, long T, int jobs) {
  EnsembleSpec spec;
  spec.oracle = prep.oracle.get();
  spec.mixing = &prep.mixing;
  spec.steps = &prep.steps;
  spec.T = T;
  spec.record.checkpoints = cfg.outputs.checkpoints;
  spec.record.geometric_ratio = cfg.outputs.geometric_ratio;
  spec.record.diagnostics = cfg.outputs.diagnostics;
  spec.record.theta0 = Matrix(prep.theta0 * Eigen::RowVectorXd::Ones(prep.oracle->agents()));
  for (long t = 1; t <= T; t *= 10) spec.checkpoints.push_back(t);
  spec.checkpoints.push_back(0);
  spec.checkpoints.push_back(T);
  return run_ensemble(spec, cfg.runs, cfg.seed, jobs);
}

void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg, const Prepared& prep,
                       const EnsembleResult& ens) {
  fs::create_directories(fs::path(dir) / "runs");
  const std::string cfg_text = cfg.raw.dump(2) + "\n";
  write_text_file((fs::path(dir) / "config.json").string(), cfg_text);

  Json consts;
  consts["schema_version"] = kSchemaVersion;
  consts["constants"] = to_json(prep.constants);
  consts["V0"] = prep.V0;
  consts["grad0"] = prep.grad0;
  consts["schedule"] = {{"a0", cfg.schedule.a0},
                        {"a1", std::isinf(cfg.schedule.a1) ? Json("inf") : Json(cfg.schedule.a1)},
                        {"T", ens.T},
                        {"cap", cfg.schedule.clip ? "clip" : "off"}};
  consts["step_schedule"] = to_json(prep.steps);
  consts["mixing"] = {{"time_varying", prep.mixing.time_varying()},
                      {"period", prep.mixing.period()},
                      {"block", prep.mixing.block},
                      {"rho_bar", prep.mixing.rho_bar}};
  write_text_file((fs::path(dir) / "constants.json").string(), consts.dump(2) + "\n");

  std::size_t next = 0;
  for (int k = 0; k < ens.runs; ++k) {
    if (ens.status[k] != "ok") continue;
    std::ostringstream csv;
    write_trajectory_csv(csv, ens.records[next++]);
    write_text_file((fs::path(dir) / "runs" / ("run_" + std::to_string(k) + ".csv")).string(), csv.str());
  }

  Json agg;
  agg["schema_version"] = kSchemaVersion;
  std::ostringstream hash;
  Json fingerprint = cfg.raw;  // where the outputs land is not part of the experiment
  if (fingerprint.contains("outputs")) fingerprint["outputs"].erase("directory");
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(fingerprint.dump());
  agg["config_hash"] = hash.str();
  const Json body = to_json(ens);
  for (const auto& [k, v] : body.items()) agg[k] = v;
  write_text_file((fs::path(dir) / "aggregate.json").string(), agg.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------
// Assumption validation

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.ok || c.informational; });
}

std::string ValidationReport::text() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    const char* tag = c.informational ? (c.ok ? "INFO" : "WARN") : (c.ok ? "OK" : "VIOLATED");
    out << "[" << tag << "] " << c.id;
    if (!c.detail.empty()) out << ": " << c.detail;
    out << "\n";
  }
  out << (ok() ? "all assumptions certified\n" : "assumption violations found\n");
  return out.str();
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

ValidationReport validate_experiment(const ExperimentConfig& cfg) {
  ValidationReport rep;
  auto add = [&](std::string id, bool ok, std::string detail, bool info = false) {
    rep.checks.push_back({std::move(id), ok, info, std::move(detail)});
  };

  // H2 first: the problem cannot be built on a non-ergodic chain.
  std::vector<Matrix> kernels =
      cfg.problem.kind == "td0" ? std::vector<Matrix>{cfg.problem.transition} : cfg.problem.chains;
  bool chains_ok = true;
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const std::string id = kernels.size() == 1 ? "H2" : "H2 (agent " + std::to_string(k + 1) + ")";
    const Matrix& p = kernels[k];
    if (p.rows() != p.cols() || !is_row_stochastic(p)) {
      add(id, false, "kernel is not a square row-stochastic matrix");
      chains_ok = false;
    } else if (!is_irreducible(p)) {
      add(id, false, "kernel is reducible");
      chains_ok = false;
    } else if (chain_period(p) != 1) {
      add(id, false, "kernel is periodic with period " + std::to_string(chain_period(p)));
      chains_ok = false;
    } else {
      const MarkovModel model(p);
      const MixingProfile prof = tv_mixing_profile(model, cfg.estimation.mixing_horizon);
      add(id, prof.fit.lambda < 1,
          "irreducible, aperiodic; TV envelope K = " + fmt(prof.fit.K) + ", lambda = " + fmt(prof.fit.lambda));
    }
  }
  if (!chains_ok) return rep;

  std::unique_ptr<ProblemOracle> oracle;
  try {
    oracle = build_problem(cfg);
  } catch (const RankError& e) {
    add("H3", false, e.what());
    return rep;
  }
  const int n = oracle->agents();

  MixingSchedule mixing;
  const std::string graph_id = cfg.topology.time_varying ? "H8" : "H1";
  try {
    mixing = build_mixing(cfg, n);
  } catch (const ConnectivityError& e) {
    add(graph_id, false, e.what());
    return rep;
  } catch (const ValidationError& e) {
    add(graph_id + "-1/2", false, e.what());
    return rep;
  }
  bool ds = true;
  for (const Matrix& a : mixing.matrices) ds = ds && is_doubly_stochastic(a);
  add(graph_id + "-1/2", ds, ds ? "weights respect the edge set and are doubly stochastic" : "not doubly stochastic");
  if (cfg.topology.time_varying) {
    add("H8-3", mixing.rho_bar > 0,
        "joint contraction over B = " + std::to_string(mixing.block) + ": rho_bar = " + fmt(mixing.rho_bar));
    add("H1", true, "replaced by H8 (time-varying)", true);
  } else {
    add("H1-3", mixing.rho_bar > 0, "rho_bar = " + fmt(mixing.rho_bar));
  }

  const SampleSpec spec = sample_spec(cfg);
  const BiasEstimate bias = estimate_bias_constants(*oracle, spec);
  const ConstantsBundle c = [&] {
    ConstantsBundle b = estimate_constants(*oracle, spec);
    b.rho_bar = Constant{mixing.rho_bar, Provenance::Network};
    return b;
  }();
  add("H3", bias.violations.empty() && c.c0->value > 0 && std::isfinite(c.d0->value),
      "c0 = " + fmt(c.c0->value) + " (" + to_string(c.c0->provenance) + "), d0 = " + fmt(c.d0->value) + " (" +
          to_string(c.d0->provenance) + "); grid c0 = " + fmt(bias.c0) + ", grid d0 = " + fmt(bias.d0) + ", " +
          std::to_string(bias.violations.size()) + " sign violations on " + std::to_string(bias.evaluated) + " points");

  double worst = 0;
  for (int i = 0; i < n && (!oracle->shared_chain() || i == 0); ++i) {
    const MarkovModel& mc = oracle->chain(i);
    const PoissonSolver solver(mc);
    for (const Vector& th : {Vector(Vector::Zero(oracle->dim())), oracle->minimizer()}) {
      Matrix tab(mc.states(), oracle->dim());
      for (int x = 0; x < mc.states(); ++x) tab.row(x) = oracle->local_update(i, th, x).transpose();
      worst = std::max(worst, solver.solve(tab).residual);
    }
  }
  add("H4", worst <= 1e-10, "Poisson defect residual " + fmt(worst) + "; K_P = " + fmt(c.K_P->value) +
                                ", L_h_bar = " + fmt(c.L_h_bar->value));
  add("H5", std::isfinite(c.L_h->value) && std::isfinite(c.L_V->value),
      "L_h = " + fmt(c.L_h->value) + " (" + to_string(c.L_h->provenance) + "), L_V = " + fmt(c.L_V->value) + " (" +
          to_string(c.L_V->provenance) + ")");
  add("H6", std::isfinite(c.sigma_o->value),
      "sigma_o = " + fmt(c.sigma_o->value) + " (" + to_string(c.sigma_o->provenance) + ")");
  add("H7", std::isfinite(c.sigma_h->value),
      "sigma_h = " + fmt(c.sigma_h->value) + " (" + to_string(c.sigma_h->provenance) + ")");
  for (const auto& note : c.notes) add("note", true, note, true);
  if (!cfg.topology.time_varying) add("H8", true, "not applicable (static mixing)", true);

  try {
    const StepSchedule raw = make_step_schedule(cfg.schedule.a0, cfg.schedule.a1, cfg.schedule.T);
    ConstantsBundle full = with_schedule(c, raw);
    const double cap = step_cap(full);
    const bool within = raw.max_gamma() <= cap;
    add("step-size ceiling", within || cfg.schedule.clip,
        "cap = " + fmt(cap) + ", max gamma = " + fmt(raw.max_gamma()) +
            (within ? "" : (cfg.schedule.clip ? " (clipped at run time)" : " (certificates will be NON-BINDING)")),
        true);
  } catch (const Error& e) {
    add("step-size ceiling", false, e.what(), true);
  }
  return rep;
}

// ---------------------------------------------------------------------------------------
// Commands

VerificationReport merge_reports(const std::vector<VerificationReport>& reports) {
  VerificationReport out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : reports)
    for (const auto& c : r.checks) {
      auto it = index.find(c.name);
      if (it == index.end()) {
        index[c.name] = out.checks.size();
        out.checks.push_back(c);
        continue;
      }
      CheckOutcome& m = out.checks[it->second];
      if (c.binding && !m.binding) {
        m = c;
        continue;
      }
      if (!c.binding && m.binding) continue;
      m.margin = std::min(m.margin, c.margin);
      if (!c.pass && m.pass) m.detail = c.detail;
      m.pass = m.pass && c.pass;
    }
  return out;
}

namespace {

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ErgodicityError& e) {
    err << "assumption H2 violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const ConnectivityError& e) {
    err << "assumption H1/H8 violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const RankError& e) {
    err << "assumption violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const Error& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Json::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  }
}

ExperimentConfig load_with_overrides(const std::string& path, const CliOptions& opts) {
  Json doc = read_json_file(path);
  if (opts.seed) doc["ensemble"]["seed"] = *opts.seed;
  if (opts.out) doc["outputs"]["directory"] = *opts.out;
  if (opts.diagnostics) doc["outputs"]["diagnostics"] = true;
  const std::string base = fs::path(path).parent_path().string();
  return parse_config(doc, base.empty() ? "." : base);
}

std::string output_dir(const ExperimentConfig& cfg, const CliOptions& opts) {
  if (opts.out) return *opts.out;
  return resolve(cfg.base_dir, cfg.outputs.directory);
}

void print_ensemble(std::ostream& out, const EnsembleResult& e) {
  out << "T = " << e.T << ", runs = " << e.runs << " (" << e.records.size() << " completed)\n";
  out << "E|h_bar|^2 at tau     = " << e.h_bar_sq.mean << " +- " << e.h_bar_sq.se << "\n";
  out << "E|grad V|^2 at tau    = " << e.grad_sq.mean << " +- " << e.grad_sq.se << "\n";
  out << "E|theta_tilde_o|      = " << e.cons_err.mean << " +- " << e.cons_err.se << "\n";
  out << "max_i E|theta_i - bar| = " << e.max_agent_dev.mean << " +- " << e.max_agent_dev.se << "\n";
  for (int k = 0; k < e.runs; ++k)
    if (e.status[k] != "ok") out << "run " << k << ": " << e.status[k] << "\n";
}

}  // namespace

int cmd_validate(const std::string& config_path, const CliOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_with_overrides(config_path, opts);
    const ValidationReport rep = validate_experiment(cfg);
    out << rep.text();
    return rep.ok() ? kExitOk : kExitAssumption;
  });
}

int cmd_run(const std::string& config_path, const CliOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_with_overrides(config_path, opts);
    const Prepared prep = prepare(cfg, cfg.schedule.T);
    for (const auto& w : prep.steps.warnings) err << "warning: " << w << "\n";
    const EnsembleResult ens = run_experiment(cfg, prep, cfg.schedule.T, opts.jobs);
    const std::string dir = output_dir(cfg, opts);
    write_run_outputs(dir, cfg, prep, ens);
    print_ensemble(out, ens);
    out << "outputs written to " << dir << "\n";
    return ens.all_ok() ? kExitOk : kExitDivergence;
  });
}

int cmd_verify(const std::string& run_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path dir(run_dir);
    std::vector<std::string> missing;
    for (const char* f : {"constants.json", "aggregate.json", "runs"})
      if (!fs::exists(dir / f)) missing.emplace_back(f);
    if (!missing.empty()) {
      std::string msg = "run directory lacks:";
      for (const auto& m : missing) msg += " " + m;
      throw ReportError(msg);
    }
    const Json cj = read_json_file((dir / "constants.json").string());
    const Json agg = read_json_file((dir / "aggregate.json").string());
    const ConstantsBundle c = constants_from_json(cj.at("constants"));
    const Json& sj = cj.at("schedule");
    const double a0 = sj.at("a0").get<double>();
    const double a1 = sj.at("a1").is_string() ? std::numeric_limits<double>::infinity() : sj.at("a1").get<double>();
    const long T = sj.at("T").get<long>();
    const bool clip = sj.at("cap").get<std::string>() == "clip";
    const StepSchedule steps = clip ? make_step_schedule(a0, a1, T, c, c.rho_bar->value) : make_step_schedule(a0, a1, T);
    const BoundCertificate cert = compute_certificate(c, steps, T, cj.at("V0").get<double>(), cj.at("grad0").get<double>());

    EnsembleResult ens;
    const Json& te = agg.at("tau_expectation");
    ens.h_bar_sq = {te.at("h_bar_sq").at("mean").get<double>(), te.at("h_bar_sq").at("se").get<double>()};
    ens.max_agent_dev = {te.at("max_agent_dev").at("mean").get<double>(), te.at("max_agent_dev").at("se").get<double>()};

    VerifyOptions vopt;
    vopt.static_mixing = !cj.at("mixing").at("time_varying").get<bool>();
    std::vector<VerificationReport> reports;
    for (const auto& r : agg.at("per_run")) {
      if (r.at("status").get<std::string>() != "ok") continue;
      const fs::path csv = dir / "runs" / ("run_" + std::to_string(r.at("run").get<int>()) + ".csv");
      if (!fs::exists(csv)) throw ReportError("missing " + csv.string());
      TrajectoryRecord rec = load_trajectory_csv(csv.string());
      reports.push_back(verify_trajectory(rec, c, cert, reports.empty() ? &ens : nullptr, vopt));
    }
    if (reports.empty()) throw ReportError("no completed runs to verify");
    const VerificationReport merged = merge_reports(reports);

    std::ostringstream text;
    text << "certificate (" << (cert.binding ? "BINDING" : "NON-BINDING") << "): C_tot = " << cert.C_tot
         << ", rhs_meanfield = " << cert.rhs_meanfield << ", rhs_consensus = " << cert.rhs_consensus
         << ", step cap = " << cert.cap << "\n";
    text << "checks over " << reports.size() << " runs\n" << merged.summary();
    write_text_file((dir / "report.txt").string(), text.str());
    Json rj = to_json(merged);
    rj["certificate"] = to_json(cert);
    write_text_file((dir / "report.json").string(), rj.dump(2) + "\n");
    out << text.str();
    return merged.passed() ? kExitOk : kExitAssumption;
  });
}

int cmd_bound(const std::string& constants_path, const BoundParams& params, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Json j = read_json_file(constants_path);
    const Json& cj = j.contains("constants") ? j.at("constants") : j;
    ConstantsBundle c = constants_from_json(cj);
    std::optional<double> V0 = params.V0, grad0 = params.grad0;
    if (!V0 && j.contains("V0")) V0 = j.at("V0").get<double>();
    if (!grad0 && j.contains("grad0")) grad0 = j.at("grad0").get<double>();
    // Schedule constants are recomputed from the requested schedule.
    c.a_hat.reset();
    c.a_ratio.reset();
    std::vector<std::string> absent = c.missing();
    absent.erase(std::remove_if(absent.begin(), absent.end(),
                                [](const std::string& s) { return s == "a_hat" || s == "a_ratio"; }),
                 absent.end());
    if (!V0) absent.emplace_back("V0");
    if (!grad0) absent.emplace_back("grad0");
    if (!absent.empty()) {
      std::string msg = "incomplete constants; missing:";
      for (const auto& a : absent) msg += " " + a;
      throw IncompleteConstantsError(msg);
    }
    const StepSchedule raw = make_step_schedule(params.a0, params.a1, params.T);
    const StepSchedule steps =
        params.clip ? make_step_schedule(params.a0, params.a1, params.T, with_schedule(c, raw), c.rho_bar->value) : raw;
    const BoundCertificate cert = compute_certificate(with_schedule(c, steps), steps, params.T, *V0, *grad0);
    Json outj = to_json(cert);
    outj["step_schedule"] = to_json(steps);
    out << outj.dump(2) << "\n";
    return kExitOk;
  });
}

int cmd_sweep(const std::string& config_path, const CliOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_with_overrides(config_path, opts);
    if (cfg.schedule.T_grid.size() < 3) throw ConfigError("schedule.T_grid: a sweep needs at least three horizons");
    cfg.outputs.checkpoints = Checkpoints::Geometric;
    const std::string dir = output_dir(cfg, opts);
    std::vector<double> Ts, grad, hbar, dev, cons;
    bool diverged = false;
    for (long T : cfg.schedule.T_grid) {
      ExperimentConfig sub = cfg;
      sub.schedule.T = T;
      sub.raw["schedule"]["T"] = T;
      const Prepared prep = prepare(sub, T);
      const EnsembleResult ens = run_experiment(sub, prep, T, opts.jobs);
      write_run_outputs((fs::path(dir) / ("T_" + std::to_string(T))).string(), sub, prep, ens);
      out << "-- T = " << T << "\n";
      print_ensemble(out, ens);
      diverged = diverged || !ens.all_ok();
      Ts.push_back(static_cast<double>(T));
      grad.push_back(ens.grad_sq.mean);
      hbar.push_back(ens.h_bar_sq.mean);
      dev.push_back(ens.max_agent_dev.mean);
      cons.push_back(ens.cons_err.mean);
    }
    Json sj;
    sj["schema_version"] = kSchemaVersion;
    sj["T_grid"] = cfg.schedule.T_grid;
    auto fit = [&](const char* name, const std::vector<double>& v) {
      try {
        const RateFit f = rate_fit(Ts, v);
        sj["fits"][name] = to_json(f);
        out << name << ": slope " << f.slope << " +- " << f.half_width << "\n";
      } catch (const FitError& e) {
        sj["fits"][name] = {{"error", e.what()}, {"values", v}};
        out << name << ": " << e.what() << "\n";
      }
    };
    fit("grad_sq", grad);
    fit("h_bar_sq", hbar);
    fit("max_agent_dev", dev);
    fit("cons_err", cons);
    fs::create_directories(dir);
    write_text_file((fs::path(dir) / "sweep.json").string(), sj.dump(2) + "\n");
    return diverged ? kExitDivergence : kExitOk;
  });
}

}  // namespace dsa
