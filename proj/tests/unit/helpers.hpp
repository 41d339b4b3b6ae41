#pragma once

#include "dsa/experiment.hpp"
#include "dsa/markov.hpp"
#include "dsa/problems.hpp"
#include "dsa/rng.hpp"
#include "dsa/topology.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace testing {

using dsa::Matrix;
using dsa::Vector;

inline std::string source_path(const std::string& rel) { return std::string(DSALAB_SOURCE_DIR) + "/" + rel; }

/// Irreducible and aperiodic; sparse draws are repeated until irreducible.
inline Matrix random_stochastic(int s, dsa::Rng& rng, double zero_prob = 0.0) {
  Matrix p(s, s);
  do {
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < s; ++j) p(i, j) = rng.uniform() < zero_prob ? 0.0 : rng.uniform(0.05, 1.0);
      p(i, i) += 0.1;
      p.row(i) /= p.row(i).sum();
    }
  } while (!dsa::is_irreducible(p));
  return p;
}

inline Matrix random_matrix(int r, int c, dsa::Rng& rng, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Vector random_vector(int n, dsa::Rng& rng, double lo = -1, double hi = 1) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

inline Matrix td_toy_transition() {
  Matrix p(5, 5);
  p << 0.5, 0.2, 0.1, 0.1, 0.1,  //
      0.1, 0.5, 0.2, 0.1, 0.1,   //
      0.1, 0.1, 0.5, 0.2, 0.1,   //
      0.1, 0.1, 0.1, 0.5, 0.2,   //
      0.2, 0.1, 0.1, 0.1, 0.5;
  return p;
}

inline dsa::MdpSpec td_toy_mdp() {
  dsa::MdpSpec m;
  m.transition = td_toy_transition();
  m.features.resize(5, 3);
  m.features << 1, 0, 0, 0, 1, 0, 0, 0, 1, 0.6, 0.8, 0, 0, 0.6, 0.8;
  m.local_rewards.resize(4, 5);
  m.local_rewards << 1.0, -0.5, 0.2, 0.0, 0.7,  //
      -0.3, 0.8, 0.5, -1.0, 0.1,                //
      0.6, 0.1, -0.7, 0.4, -0.2,                //
      -0.9, 0.3, 0.0, 0.6, 0.9;
  m.discount = 0.9;
  return m;
}

inline dsa::ErgodicSgdProblem sgd_toy() {
  std::vector<dsa::Dataset> data(3);
  std::vector<dsa::MarkovModel> chains;
  data[0].features = (Matrix(3, 2) << 1, 0, 0, 1, 1, 1).finished();
  data[0].targets = (Vector(3) << 1.0, -1.0, 0.5).finished();
  data[1].features = (Matrix(3, 2) << 1, 0.5, -0.5, 1, 0.2, 0.8).finished();
  data[1].targets = (Vector(3) << 0.3, 1.0, -0.4).finished();
  data[2].features = (Matrix(3, 2) << 0.8, -0.2, 0.1, 1.2, 1, 0.3).finished();
  data[2].targets = (Vector(3) << -0.5, 0.2, 0.9).finished();
  chains.emplace_back((Matrix(3, 3) << 0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5).finished());
  chains.emplace_back((Matrix(3, 3) << 0.6, 0.2, 0.2, 0.3, 0.4, 0.3, 0.2, 0.3, 0.5).finished());
  chains.emplace_back((Matrix(3, 3) << 0.4, 0.4, 0.2, 0.2, 0.6, 0.2, 0.3, 0.3, 0.4).finished());
  return dsa::ErgodicSgdProblem(data, chains);
}

/// A random least-squares problem with per-agent chains.
inline dsa::ErgodicSgdProblem random_sgd(int n, int d, int m, dsa::Rng& rng) {
  std::vector<dsa::Dataset> data(n);
  std::vector<dsa::MarkovModel> chains;
  for (int i = 0; i < n; ++i) {
    data[i].features = random_matrix(m, d, rng);
    data[i].targets = random_vector(m, rng);
    chains.emplace_back(random_stochastic(m, rng));
  }
  return dsa::ErgodicSgdProblem(data, chains);
}

/// A complete bundle with every field set; schedule fields are left to the caller when `with_schedule` is false.
inline dsa::ConstantsBundle full_bundle(double c0, double d0, double so, double sh, double lh, double lv, double kp,
                                        double lhb, double rho, int n, bool with_schedule = true) {
  using dsa::Constant;
  using dsa::Provenance;
  dsa::ConstantsBundle c;
  c.c0 = Constant{c0, Provenance::Analytic};
  c.d0 = Constant{d0, Provenance::Analytic};
  c.sigma_o = Constant{so, Provenance::Analytic};
  c.sigma_h = Constant{sh, Provenance::Analytic};
  c.L_h = Constant{lh, Provenance::Analytic};
  c.L_V = Constant{lv, Provenance::Analytic};
  c.K_P = Constant{kp, Provenance::Analytic};
  c.L_h_bar = Constant{lhb, Provenance::Analytic};
  c.rho_bar = Constant{rho, Provenance::Network};
  c.n_agents = Constant{static_cast<double>(n), Provenance::Network};
  c.V_star = Constant{0.0, Provenance::Analytic};
  if (with_schedule) {
    c.a_hat = Constant{0.3, Provenance::Schedule};
    c.a_ratio = Constant{1.5, Provenance::Schedule};
  }
  return c;
}

/// Scalar oracle H(theta; x) = theta on a single-state chain, n agents.
class IdentityOracle final : public dsa::AffineOracle {
 public:
  explicit IdentityOracle(int n = 1, int d = 1, double sign = 1.0)
      : n_(n), d_(d), sign_(sign), chain_(Matrix::Ones(1, 1)) {}
  int agents() const override { return n_; }
  int dim() const override { return d_; }
  bool shared_chain() const override { return true; }
  const dsa::MarkovModel& chain(int) const override { return chain_; }
  Matrix slope(int, int) const override { return sign_ * Matrix::Identity(d_, d_); }
  Vector offset(int, int) const override { return Vector::Zero(d_); }
  double potential(const Vector& t) const override { return 0.5 * t.squaredNorm(); }
  Vector gradient(const Vector& t) const override { return t; }
  double optimal_value() const override { return 0; }
  Vector minimizer() const override { return Vector::Zero(d_); }

 private:
  int n_, d_;
  double sign_;
  dsa::MarkovModel chain_;
};

/// H == 0 for every agent: pure consensus.
class ZeroOracle final : public dsa::AffineOracle {
 public:
  ZeroOracle(int n, int d) : n_(n), d_(d), chain_(Matrix::Ones(1, 1)) {}
  int agents() const override { return n_; }
  int dim() const override { return d_; }
  bool shared_chain() const override { return true; }
  const dsa::MarkovModel& chain(int) const override { return chain_; }
  Matrix slope(int, int) const override { return Matrix::Zero(d_, d_); }
  Vector offset(int, int) const override { return Vector::Zero(d_); }
  double potential(const Vector&) const override { return 0; }
  Vector gradient(const Vector& t) const override { return Vector::Zero(t.size()); }
  double optimal_value() const override { return 0; }
  Vector minimizer() const override { return Vector::Zero(d_); }

 private:
  int n_, d_;
  dsa::MarkovModel chain_;
};

}  // namespace testing
