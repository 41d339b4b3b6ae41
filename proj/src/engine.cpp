#include "dsa/engine.hpp"

#include "dsa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dsa {

namespace {

void fill_decrement_constants(StepSchedule& s) {
  s.a_hat = 0;
  s.a_ratio = 1;
  for (long t = 0; t <= s.horizon; ++t) {
    const double g = s.gammas[t], g1 = s.gammas[t + 1];
    s.a_hat = std::max(s.a_hat, (g - g1) / (g * g));
    s.a_ratio = std::max(s.a_ratio, g / g1);
  }
}

}  // namespace

double StepSchedule::max_gamma() const { return *std::max_element(gammas.begin(), gammas.end()); }

StepSchedule make_step_schedule(double a0, double a1, long T, const std::optional<ConstantsBundle>& constants,
                                std::optional<double> rho_bar) {
  if (!(a0 > 0) || !std::isfinite(a0)) throw ConfigError("a0 must be positive");
  if (!(a1 >= 1)) throw ConfigError("a1 must be >= 1");
  if (T < 0) throw ConfigError("T must be nonnegative");
  StepSchedule s;
  s.a0 = a0;
  s.a1 = a1;
  s.horizon = T;
  s.gammas.resize(static_cast<std::size_t>(T) + 2);
  for (long t = 0; t <= T + 1; ++t) s.gammas[t] = s.constant() ? a0 : a0 / std::sqrt(t + a1);
  const std::vector<double> raw = s.gammas;
  fill_decrement_constants(s);
  if (!constants) return s;

  ConstantsBundle c = *constants;
  if (rho_bar) c.rho_bar = Constant{*rho_bar, Provenance::Network};
  // The ceiling depends on a_hat and a_ratio, which clipping changes: iterate to a fixed point.
  double cap = 0;
  for (int iter = 0; iter < 50; ++iter) {
    c.a_hat = Constant{s.a_hat, Provenance::Schedule};
    c.a_ratio = Constant{s.a_ratio, Provenance::Schedule};
    const double next = step_cap(c);
    if (!(next > 0) || !std::isfinite(next))
      throw ConfigError("step-size ceiling is not positive (" + std::to_string(next) + ")");
    const bool stable = iter > 0 && std::abs(next - cap) <= 1e-15 * cap;
    cap = next;
    for (std::size_t t = 0; t < raw.size(); ++t) s.gammas[t] = std::min(raw[t], cap);
    fill_decrement_constants(s);
    if (stable) break;
  }
  s.cap = cap;
  s.cap_binds = raw.front() > cap;
  if (s.cap_binds) {
    std::ostringstream msg;
    msg << "step-size ceiling " << cap << " binds (gamma_0 = " << raw.front() << ")";
    s.warnings.push_back(msg.str());
  }
  c.a_hat = Constant{s.a_hat, Provenance::Schedule};
  c.a_ratio = Constant{s.a_ratio, Provenance::Schedule};
  if (s.max_gamma() > step_cap(c) * (1 + 1e-12))
    s.warnings.push_back("clipped schedule exceeds its own recomputed ceiling");
  return s;
}

ConstantsBundle with_schedule(ConstantsBundle c, const StepSchedule& steps) {
  c.a_hat = Constant{steps.a_hat, Provenance::Schedule};
  c.a_ratio = Constant{steps.a_ratio, Provenance::Schedule};
  return c;
}

double TauAverages::max_agent_dev() const { return dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end()); }

std::uint64_t run_seed(std::uint64_t master, int run) { return derive_seed(master, static_cast<std::uint64_t>(run)); }
std::uint64_t tau_seed(std::uint64_t seed) { return derive_seed(seed, 0); }
std::uint64_t stream_seed(std::uint64_t seed, int agent) { return derive_seed(seed, 1 + static_cast<std::uint64_t>(agent)); }

long sample_terminating_time(const StepSchedule& steps, long T, std::uint64_t seed) {
  if (T < 0) throw ConfigError("T must be nonnegative");
  if (static_cast<long>(steps.gammas.size()) < T + 2) throw ConfigError("schedule shorter than the horizon");
  CompensatedSum<> total;
  for (long t = 0; t <= T; ++t) total += steps.gamma(t + 1);
  Rng rng(seed);
  const double target = rng.uniform() * total.value();
  CompensatedSum<> acc;
  for (long t = 0; t <= T; ++t) {
    acc += steps.gamma(t + 1);
    if (target < acc.value()) return t;
  }
  return T;
}

TrajectoryRecord run_dsa(const ProblemOracle& oracle, const MixingSchedule& mixing, const StepSchedule& steps,
                         long T, std::uint64_t seed, const RecordOptions& options) {
  const int n = oracle.agents();
  const int d = oracle.dim();
  if (mixing.nodes() != n) throw DimensionError("mixing schedule size does not match the number of agents");
  if (T < 0) throw ConfigError("T must be nonnegative");
  if (static_cast<long>(steps.gammas.size()) < T + 2) throw ConfigError("step schedule shorter than the horizon");

  Matrix theta = options.theta0 ? *options.theta0 : Matrix::Zero(d, n);
  if (theta.rows() != d || theta.cols() != n) throw DimensionError("theta0 must be d x n");
  if (!options.allow_unequal_init)
    for (int i = 1; i < n; ++i)
      if ((theta.col(i) - theta.col(0)).cwiseAbs().maxCoeff() != 0.0)
        throw ConfigError("agents must start from a common initial point");

  const bool has_basis = n >= 2;
  const ProjectionBasis basis = has_basis ? build_projection_basis(n) : ProjectionBasis{Matrix(1, 0)};

  // One stream for a shared chain, one per agent otherwise.
  const int n_streams = oracle.shared_chain() ? 1 : n;
  std::vector<SampleStream> streams;
  for (int k = 0; k < n_streams; ++k) {
    const MarkovModel& mc = oracle.chain(k);
    int x0;
    if (options.initial_state) {
      x0 = *options.initial_state;
    } else {
      Rng init(derive_seed(stream_seed(seed, k), 0xA11));
      x0 = sample_categorical(mc.stationary(), init);
    }
    streams.emplace_back(mc, x0, stream_seed(seed, k));
  }
  std::vector<int> joint(n);

  TrajectoryRecord rec;
  rec.agents = n;
  rec.dim = d;
  rec.horizon = T;
  rec.seed = seed;
  rec.diagnostics = options.diagnostics;
  rec.tau = sample_terminating_time(steps, T, tau_seed(seed));

  std::vector<long> forced = options.always_record;
  std::sort(forced.begin(), forced.end());
  long next_geo = 1;

  CompensatedSum<> w_total, w_h, w_g, w_c;
  std::vector<CompensatedSum<>> w_dev(n);

  for (long t = 0; t <= T; ++t) {
    const double gamma = steps.gamma(t + 1);
    const Vector bar = theta.rowwise().mean();
    const Matrix err = has_basis ? Matrix(theta * basis.U) : Matrix::Zero(d, 0);
    const Vector hb = oracle.averaged_mean_field(bar);

    TrajectoryRow row;
    row.t = t;
    row.gamma = gamma;
    row.h_bar_sq = hb.squaredNorm();
    row.grad_sq = oracle.gradient(bar).squaredNorm();
    row.cons_err = err.norm();
    row.potential = oracle.potential(bar);
    row.dev.resize(n);
    for (int i = 0; i < n; ++i) {
      row.dev[i] = (theta.col(i) - bar).norm();
      row.max_dev = std::max(row.max_dev, row.dev[i]);
    }

    w_total += gamma;
    w_h += gamma * row.h_bar_sq;
    w_g += gamma * row.grad_sq;
    w_c += gamma * row.cons_err;
    for (int i = 0; i < n; ++i) w_dev[i] += gamma * row.dev[i];

    // X^{t+1}
    for (int k = 0; k < n_streams; ++k) streams[k].next();
    for (int i = 0; i < n; ++i) joint[i] = streams[oracle.shared_chain() ? 0 : i].state();

    Matrix updates(d, n);
    for (int i = 0; i < n; ++i) updates.col(i) = oracle.local_update(i, theta.col(i), joint[i]);
    const Matrix& a = mixing.at(t);
    Matrix next = theta * a.transpose() - gamma * updates;

    if (options.diagnostics) {
      Vector at_bar = Vector::Zero(d);
      for (int i = 0; i < n; ++i) at_bar += oracle.local_update(i, bar, joint[i]);
      at_bar /= n;
      const Vector mean_update = updates.rowwise().mean();
      const Vector e0 = at_bar - hb;
      const Vector e1 = mean_update - at_bar;
      row.e0 = e0.norm();
      row.e1 = e1.norm();
      const Vector next_bar = next.rowwise().mean();
      row.res_c = std::max((next_bar - (bar - gamma * mean_update)).cwiseAbs().maxCoeff(),
                           (next_bar - bar + gamma * (hb + e0 + e1)).cwiseAbs().maxCoeff());
      if (has_basis) {
        const Matrix contracted = basis.U.transpose() * a * basis.U;
        const Matrix predicted = err * contracted.transpose() - gamma * updates * basis.U;
        row.res_o = (next * basis.U - predicted).cwiseAbs().maxCoeff();
        row.res_d = (theta - (bar * Eigen::RowVectorXd::Ones(n) + err * basis.U.transpose())).cwiseAbs().maxCoeff();
      } else {
        row.res_o = 0;
        row.res_d = (theta.col(0) - bar).cwiseAbs().maxCoeff();
      }
      rec.max_res_c = std::max(rec.max_res_c, row.res_c);
      rec.max_res_o = std::max(rec.max_res_o, row.res_o);
      rec.max_res_d = std::max(rec.max_res_d, row.res_d);
    }

    bool keep = options.checkpoints == Checkpoints::All || t == 0 || t == T;
    if (!keep && t >= next_geo) {
      keep = true;
      next_geo = std::max(next_geo + 1, static_cast<long>(std::ceil(next_geo * options.geometric_ratio)));
    }
    if (!keep) keep = std::binary_search(forced.begin(), forced.end(), t);
    if (t == rec.tau) rec.at_tau = row;
    if (t == T) rec.final_theta = theta;
    if (keep) rec.rows.push_back(std::move(row));

    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > options.divergence_limit) {
      if (t == T) break;  // theta^(T+1) is never recorded
      throw DivergenceError("iterate diverged at t = " + std::to_string(t + 1), t);
    }
    theta = std::move(next);
  }

  const double total = w_total.value();
  rec.weighted.h_bar_sq = w_h.value() / total;
  rec.weighted.grad_sq = w_g.value() / total;
  rec.weighted.cons_err = w_c.value() / total;
  rec.weighted.dev.resize(n);
  for (int i = 0; i < n; ++i) rec.weighted.dev[i] = w_dev[i].value() / total;
  return rec;
}

}  // namespace dsa
