#include "dsa/problems.hpp"
#include "dsa/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dsa {

namespace {

Vector random_direction(int d, Rng& rng) {
  Vector v(d);
  do {
    for (int k = 0; k < d; ++k) v(k) = rng.normal();
  } while (v.norm() == 0.0);
  return v.normalized();
}

/// Joint samples: every agent's coordinate, enumerated when small enough.
std::vector<std::vector<int>> joint_states(const ProblemOracle& oracle, const SampleSpec& spec, bool* exhaustive) {
  const int n = oracle.agents();
  std::vector<std::vector<int>> out;
  if (oracle.shared_chain()) {
    for (int s = 0; s < oracle.chain(0).states(); ++s) out.emplace_back(n, s);
    *exhaustive = true;
    return out;
  }
  long total = 1;
  for (int i = 0; i < n && total <= spec.joint_state_cap; ++i) total *= oracle.chain(i).states();
  if (total <= spec.joint_state_cap) {
    std::vector<int> cur(n, 0);
    for (long k = 0; k < total; ++k) {
      out.push_back(cur);
      for (int i = n - 1; i >= 0; --i) {
        if (++cur[i] < oracle.chain(i).states()) break;
        cur[i] = 0;
      }
    }
    *exhaustive = true;
    return out;
  }
  Rng rng(derive_seed(spec.seed, 0x5157));
  for (long k = 0; k < spec.joint_state_cap; ++k) {
    std::vector<int> cur(n);
    for (int i = 0; i < n; ++i) cur[i] = static_cast<int>(rng.below(oracle.chain(i).states()));
    out.push_back(std::move(cur));
  }
  *exhaustive = false;
  return out;
}

/// Per agent: the smoothing operator f -> P f_hat on that agent's chain.
std::vector<Matrix> smoothing_operators(const ProblemOracle& oracle) {
  std::vector<Matrix> ops;
  if (oracle.shared_chain()) {
    const Matrix w = PoissonSolver(oracle.chain(0)).smoothed_operator();
    ops.assign(oracle.agents(), w);
  } else {
    for (int i = 0; i < oracle.agents(); ++i) ops.push_back(PoissonSolver(oracle.chain(i)).smoothed_operator());
  }
  return ops;
}

/// Table x -> H_i(theta; x) as an S x d matrix.
Matrix update_table(const ProblemOracle& oracle, int agent, const Vector& theta) {
  const int s = oracle.chain(agent).states();
  Matrix t(s, oracle.dim());
  for (int x = 0; x < s; ++x) t.row(x) = oracle.local_update(agent, theta, x).transpose();
  return t;
}

double sigma_h_on(const ProblemOracle& oracle, const std::vector<Vector>& grid,
                  const std::vector<std::vector<int>>& joints) {
  const int n = oracle.agents();
  double best = 0;
  for (const Vector& th : grid) {
    const Vector hb = oracle.averaged_mean_field(th);
    std::vector<Matrix> tables;
    for (int i = 0; i < n; ++i) tables.push_back(update_table(oracle, i, th));
    for (const auto& js : joints) {
      Vector avg = Vector::Zero(oracle.dim());
      for (int i = 0; i < n; ++i) avg += tables[i].row(js[i]).transpose();
      best = std::max(best, (avg / n - hb).norm());
    }
  }
  return best;
}

double sigma_o_on(const ProblemOracle& oracle, const SampleSpec& spec, double radius,
                  const std::vector<std::vector<int>>& joints) {
  const int n = oracle.agents();
  const int d = oracle.dim();
  if (n == 1) return 0.0;
  SampleSpec sub = spec;
  sub.radius = radius;
  const std::vector<Vector> centres = theta_grid(oracle, sub);
  Rng rng(derive_seed(spec.seed, 0x0513));
  double best = 0;
  for (std::size_t k = 0; k < centres.size(); ++k) {
    std::vector<Vector> theta(n, centres[k]);
    if (k % 4 != 0)  // every fourth stack stays consensual
      for (int i = 0; i < n; ++i)
        if (rng.uniform() < 0.75) theta[i] += radius * rng.uniform() * random_direction(d, rng);
    Vector bar = Vector::Zero(d);
    for (const auto& t : theta) bar += t;
    bar /= n;
    const double hb = oracle.averaged_mean_field(bar).norm();
    std::vector<Matrix> tables;
    for (int i = 0; i < n; ++i) tables.push_back(update_table(oracle, i, theta[i]));
    for (const auto& js : joints) {
      Vector avg = Vector::Zero(d);
      for (int i = 0; i < n; ++i) avg += tables[i].row(js[i]).transpose();
      avg /= n;
      for (int i = 0; i < n; ++i) {
        const double num = (tables[i].row(js[i]).transpose() - avg).norm();
        const double den = 1.0 / n + hb / n + (theta[i] - bar).norm();
        best = std::max(best, num / den);
      }
    }
  }
  return best;
}

}  // namespace

std::vector<Vector> theta_grid(const ProblemOracle& oracle, const SampleSpec& spec) {
  const int d = oracle.dim();
  std::vector<Vector> grid;
  grid.push_back(Vector::Zero(d));
  grid.push_back(oracle.minimizer());
  Rng rng(derive_seed(spec.seed, 0x6121));
  for (int k = 2; k < spec.points; ++k) {
    const double r = (k % 2 == 0) ? spec.radius : spec.radius * std::pow(rng.uniform(), 1.0 / d);
    grid.push_back(r * random_direction(d, rng));
  }
  return grid;
}

BiasEstimate estimate_bias_constants(const ProblemOracle& oracle, const SampleSpec& spec) {
  BiasEstimate out;
  out.c0 = std::numeric_limits<double>::infinity();
  out.d0 = 0;
  for (const Vector& th : theta_grid(oracle, spec)) {
    const Vector h = oracle.averaged_mean_field(th);
    const double hh = h.squaredNorm();
    if (std::sqrt(hh) <= 1e-9 * (1.0 + th.norm())) continue;
    const Vector g = oracle.gradient(th);
    const double inner = h.dot(g);
    out.c0 = std::min(out.c0, inner / hh);
    out.d0 = std::max(out.d0, g.squaredNorm() / hh);
    if (inner <= 0) out.violations.push_back(th);
    ++out.evaluated;
  }
  if (out.evaluated == 0) out.c0 = 0;
  return out;
}

NoiseEstimate estimate_noise_constants(const ProblemOracle& oracle, const SampleSpec& spec) {
  NoiseEstimate out;
  bool exhaustive = true;
  const auto joints = joint_states(oracle, spec, &exhaustive);
  if (!exhaustive) out.warnings.push_back("joint state space sampled, not enumerated");

  SampleSpec half = spec;
  half.radius = spec.radius / 2;
  out.sigma_h = sigma_h_on(oracle, theta_grid(oracle, spec), joints);
  const double sh_half = sigma_h_on(oracle, theta_grid(oracle, half), joints);
  out.sigma_o = sigma_o_on(oracle, spec, spec.radius, joints);
  const double so_half = sigma_o_on(oracle, spec, half.radius, joints);
  out.sigma_h_growth = sh_half > 0 ? out.sigma_h / sh_half : 1.0;
  out.sigma_o_growth = so_half > 0 ? out.sigma_o / so_half : 1.0;
  if (out.sigma_h_growth > 1.5)
    out.warnings.push_back("sigma_h grows with the sampling radius; certified on the grid only");
  if (out.sigma_o_growth > 1.5)
    out.warnings.push_back("sigma_o grows with the sampling radius; certified on the grid only");
  return out;
}

LipschitzEstimate estimate_lipschitz(const ProblemOracle& oracle, const SampleSpec& spec) {
  LipschitzEstimate out;
  const int n = oracle.agents();
  const int d = oracle.dim();
  const auto grid = theta_grid(oracle, spec);
  const auto ops = smoothing_operators(oracle);

  // Lipschitz constants of V and (for non-affine oracles) H and P H_hat from grid pairs.
  double lv = 0, lh = 0, lhb = 0;
  const auto* affine = dynamic_cast<const AffineOracle*>(&oracle);
  for (std::size_t k = 0; k + 1 < grid.size(); k += 2) {
    const Vector& a = grid[k];
    const Vector& b = grid[k + 1];
    const double dist = (a - b).norm();
    if (dist == 0) continue;
    lv = std::max(lv, (oracle.gradient(a) - oracle.gradient(b)).norm() / dist);
    if (affine) continue;
    for (int i = 0; i < n; ++i) {
      const Matrix ta = update_table(oracle, i, a), tb = update_table(oracle, i, b);
      lh = std::max(lh, (ta - tb).rowwise().norm().maxCoeff() / dist);
      lhb = std::max(lhb, (ops[i] * (ta - tb)).rowwise().norm().maxCoeff() / dist);
    }
  }
  out.L_V = {lv, Provenance::Sampled};
  if (affine) {
    // Exact operator norms over the finite state space.
    for (int i = 0; i < n; ++i) {
      const int s = oracle.chain(i).states();
      std::vector<Matrix> slopes;
      for (int x = 0; x < s; ++x) {
        slopes.push_back(affine->slope(i, x));
        lh = std::max(lh, spectral_norm(slopes.back()));
      }
      for (int x = 0; x < s; ++x) {
        Matrix smoothed = Matrix::Zero(d, d);
        for (int y = 0; y < s; ++y) smoothed += ops[i](x, y) * slopes[y];
        lhb = std::max(lhb, spectral_norm(smoothed));
      }
    }
    out.L_h = {lh, Provenance::Analytic};
    out.L_h_bar = {lhb, Provenance::Analytic};
  } else {
    out.L_h = {lh, Provenance::Sampled};
    out.L_h_bar = {lhb, Provenance::Sampled};
  }

  // K_P: largest |(1/n) sum_i P H_hat_i(theta; x_i)| over consensual grid points.
  bool exhaustive = true;
  SampleSpec joint_spec = spec;
  const auto joints = joint_states(oracle, joint_spec, &exhaustive);
  double kp = 0;
  for (const Vector& th : grid) {
    std::vector<Matrix> smoothed;
    for (int i = 0; i < n; ++i) smoothed.push_back(ops[i] * update_table(oracle, i, th));
    if (exhaustive) {
      for (const auto& js : joints) {
        Vector acc = Vector::Zero(d);
        for (int i = 0; i < n; ++i) acc += smoothed[i].row(js[i]).transpose();
        kp = std::max(kp, acc.norm() / n);
      }
    } else {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += smoothed[i].rowwise().norm().maxCoeff();
      kp = std::max(kp, acc / n);
    }
  }
  out.K_P = {kp, Provenance::Sampled};
  return out;
}

ConstantsBundle estimate_constants(const ProblemOracle& oracle, const SampleSpec& spec) {
  ConstantsBundle c = oracle.analytic_constants();
  if (!c.c0 || !c.d0) {
    const auto bias = estimate_bias_constants(oracle, spec);
    if (!c.c0) c.c0 = Constant{bias.c0, Provenance::Sampled};
    if (!c.d0) c.d0 = Constant{bias.d0, Provenance::Sampled};
  }
  if (!c.sigma_o || !c.sigma_h) {
    const auto noise = estimate_noise_constants(oracle, spec);
    if (!c.sigma_o) c.sigma_o = Constant{noise.sigma_o, Provenance::Sampled};
    if (!c.sigma_h) c.sigma_h = Constant{noise.sigma_h, Provenance::Sampled};
    for (const auto& w : noise.warnings) c.notes.push_back(w);
  }
  const auto lip = estimate_lipschitz(oracle, spec);
  if (!c.L_h) c.L_h = lip.L_h;
  if (!c.L_V) c.L_V = lip.L_V;
  if (!c.L_h_bar) c.L_h_bar = lip.L_h_bar;
  if (!c.K_P) c.K_P = lip.K_P;
  if (!c.V_star) c.V_star = Constant{oracle.optimal_value(), Provenance::Sampled};
  c.n_agents = Constant{static_cast<double>(oracle.agents()), Provenance::Network};
  if (c.c0->value > std::sqrt(c.d0->value) * (1 + 1e-12))
    c.notes.push_back("c0 exceeds sqrt(d0); the bias constants are inconsistent");
  return c;
}

}  // namespace dsa
