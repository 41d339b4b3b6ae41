#include "dsa/markov.hpp"

#include "dsa/topology.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <queue>

namespace dsa {

bool is_row_stochastic(const Matrix& p, double tol) {
  if (p.rows() != p.cols() || p.rows() == 0) return false;
  if (!p.allFinite() || (p.array() < 0).any()) return false;
  return (p.rowwise().sum().array() - 1).abs().maxCoeff() <= tol;
}

namespace {

std::vector<int> reachable_from(const Matrix& p, int src, bool transpose) {
  const int s = static_cast<int>(p.rows());
  std::vector<int> level(s, -1);
  std::queue<int> q;
  level[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < s; ++v) {
      const double w = transpose ? p(v, u) : p(u, v);
      if (w > 0 && level[v] < 0) {
        level[v] = level[u] + 1;
        q.push(v);
      }
    }
  }
  return level;
}

}  // namespace

bool is_irreducible(const Matrix& p) {
  const auto fwd = reachable_from(p, 0, false);
  const auto bwd = reachable_from(p, 0, true);
  return std::none_of(fwd.begin(), fwd.end(), [](int l) { return l < 0; }) &&
         std::none_of(bwd.begin(), bwd.end(), [](int l) { return l < 0; });
}

int chain_period(const Matrix& p) {
  const auto level = reachable_from(p, 0, false);
  int g = 0;
  for (int u = 0; u < p.rows(); ++u)
    for (int v = 0; v < p.cols(); ++v)
      if (p(u, v) > 0 && level[u] >= 0 && level[v] >= 0)
        g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
  return g;
}

Vector stationary_distribution(const Matrix& p) {
  if (!is_row_stochastic(p)) throw ValidationError("transition matrix is not row-stochastic");
  if (!is_irreducible(p)) throw ErgodicityError("chain is reducible");
  if (chain_period(p) != 1) throw ErgodicityError("chain is periodic (period " + std::to_string(chain_period(p)) + ")");
  const int s = static_cast<int>(p.rows());
  Matrix system(s + 1, s);
  system.topRows(s) = p.transpose() - Matrix::Identity(s, s);
  system.row(s).setOnes();
  Vector rhs = Vector::Zero(s + 1);
  rhs(s) = 1.0;
  Vector mu = system.colPivHouseholderQr().solve(rhs);
  mu = mu.cwiseMax(0.0);
  return mu / mu.sum();
}

MarkovModel::MarkovModel(Matrix transition) : p_(std::move(transition)) {
  mu_ = stationary_distribution(p_);
}

MarkovModel MarkovModel::with_mixing_fit(int t_max) const {
  MarkovModel copy = *this;
  copy.mixing_ = tv_mixing_profile(*this, t_max).fit;
  return copy;
}

MixingProfile tv_mixing_profile(const MarkovModel& model, int t_max) {
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  const Matrix& p = model.transition();
  const Vector& mu = model.stationary();
  const int s = model.states();
  MixingProfile out;
  out.tv.resize(t_max + 1);
  Matrix power = Matrix::Identity(s, s);
  for (int t = 0; t <= t_max; ++t) {
    if (t > 0) power = power * p;
    double worst = 0;
    for (int x = 0; x < s; ++x)
      worst = std::max(worst, 0.5 * (power.row(x).transpose() - mu).cwiseAbs().sum());
    out.tv[t] = worst;
  }

  // Points below the floor are round-off; the envelope is fitted on the rest.
  constexpr double kFloor = 1e-13;
  std::vector<int> ts;
  for (int t = 1; t <= t_max; ++t)
    if (out.tv[t] > kFloor) ts.push_back(t);
  out.fit_points = static_cast<int>(ts.size());

  double lambda = 0;
  if (ts.size() >= 2) {
    double mx = 0, my = 0;
    for (int t : ts) {
      mx += t;
      my += std::log(out.tv[t]);
    }
    mx /= ts.size();
    my /= ts.size();
    double sxy = 0, sxx = 0;
    for (int t : ts) {
      sxy += (t - mx) * (std::log(out.tv[t]) - my);
      sxx += (t - mx) * (t - mx);
    }
    lambda = std::exp(sxy / sxx);
  } else if (ts.size() == 1 && out.tv[0] > 0) {
    lambda = std::pow(out.tv[ts[0]] / out.tv[0], 1.0 / ts[0]);
  }
  lambda = std::clamp(lambda, 0.0, std::nextafter(1.0, 0.0));

  double k = out.tv[0];
  if (lambda > 0)
    for (int t : ts) k = std::max(k, out.tv[t] / std::pow(lambda, t));
  out.fit = {k, lambda};
  return out;
}

PoissonSolver::PoissonSolver(const MarkovModel& model)
    : p_(model.transition()), mu_(model.stationary()) {
  const int s = model.states();
  const Matrix z = Matrix::Identity(s, s) - p_ + Vector::Ones(s) * mu_.transpose();
  Eigen::FullPivLU<Matrix> check(z);
  if (!check.isInvertible()) throw ErgodicityError("fundamental matrix is singular");
  lu_.compute(z);
  const Matrix centring = Matrix::Identity(s, s) - Vector::Ones(s) * mu_.transpose();
  p_fund_ = p_ * lu_.solve(centring);
}

PoissonSolution PoissonSolver::solve(const Matrix& h) const {
  if (h.rows() != p_.rows()) throw DimensionError("function table has wrong number of states");
  const Matrix centred = h - Vector::Ones(h.rows()) * (mu_.transpose() * h);
  PoissonSolution out;
  out.H_hat = lu_.solve(centred);
  out.H_hat -= Vector::Ones(h.rows()) * (mu_.transpose() * out.H_hat);
  const Matrix defect = (out.H_hat - p_ * out.H_hat) - centred;
  out.residual = defect.size() ? defect.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

PoissonSolution solve_poisson(const MarkovModel& model, const Matrix& h) {
  return PoissonSolver(model).solve(h);
}

SampleStream::SampleStream(const MarkovModel& model, int x0, std::uint64_t seed)
    : states_(model.states()), state_(x0), rng_(seed) {
  if (x0 < 0 || x0 >= states_) throw StateError("initial state " + std::to_string(x0) + " out of range");
  auto cum = std::make_shared<std::vector<double>>(static_cast<std::size_t>(states_) * states_);
  for (int x = 0; x < states_; ++x) {
    double acc = 0;
    for (int y = 0; y < states_; ++y) {
      acc += model.transition()(x, y);
      (*cum)[x * states_ + y] = acc;
    }
    (*cum)[x * states_ + states_ - 1] = 1.0;
  }
  cumulative_ = std::move(cum);
}

int SampleStream::next() {
  const double u = rng_.uniform();
  const auto first = cumulative_->begin() + static_cast<long>(state_) * states_;
  state_ = static_cast<int>(std::upper_bound(first, first + states_, u) - first);
  if (state_ >= states_) state_ = states_ - 1;
  return state_;
}

SampleStream sample_stream(const MarkovModel& model, int x0, std::uint64_t seed) {
  return SampleStream(model, x0, seed);
}

int sample_categorical(const Vector& probabilities, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (int i = 0; i < probabilities.size(); ++i) {
    acc += probabilities(i);
    if (u < acc) return i;
  }
  return static_cast<int>(probabilities.size()) - 1;
}

MarkovModel product_kernel(const std::vector<MarkovModel>& factors, long cap) {
  if (factors.empty()) throw DimensionError("product of zero kernels");
  long states = 1;
  for (const auto& f : factors) {
    states *= f.states();
    if (states > cap)
      throw CapacityError("product state space exceeds cap of " + std::to_string(cap));
  }
  Matrix p = factors.front().transition();
  for (std::size_t k = 1; k < factors.size(); ++k) {
    const Matrix& q = factors[k].transition();
    Matrix next(p.rows() * q.rows(), p.cols() * q.cols());
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j)
        next.block(i * q.rows(), j * q.cols(), q.rows(), q.cols()) = p(i, j) * q;
    p = std::move(next);
  }
  return MarkovModel(std::move(p));
}

PairChain make_pair_chain(const MarkovModel& base) {
  const Matrix& p = base.transition();
  const int s = base.states();
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> index(static_cast<std::size_t>(s) * s, -1);
  for (int x = 0; x < s; ++x)
    for (int y = 0; y < s; ++y)
      if (p(x, y) > 0) {
        index[x * s + y] = static_cast<int>(pairs.size());
        pairs.emplace_back(x, y);
      }
  const int m = static_cast<int>(pairs.size());
  Matrix q = Matrix::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    const int y = pairs[k].second;
    for (int z = 0; z < s; ++z)
      if (p(y, z) > 0) q(k, index[y * s + z]) = p(y, z);
  }
  return PairChain{MarkovModel(std::move(q)), std::move(pairs)};
}

Matrix load_kernel_csv(const std::string& path) {
  Matrix p = load_matrix_csv(path);
  if (!is_row_stochastic(p)) throw ValidationError(path + ": kernel is not row-stochastic");
  return p;
}

void write_profile_csv(std::ostream& out, const MixingProfile& profile) {
  out << "t,tv,envelope\n" << std::setprecision(17);
  for (std::size_t t = 0; t < profile.tv.size(); ++t)
    out << t << ',' << profile.tv[t] << ',' << profile.fit.K * std::pow(profile.fit.lambda, static_cast<double>(t)) << '\n';
}

}  // namespace dsa
