#pragma once

#include "dsa/common.hpp"
#include "dsa/constants.hpp"
#include "dsa/markov.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dsa {

/// Local stochastic updates H_i(theta; x), their mean fields and the potential V.
///
/// Each agent reads its own coordinate of the joint sample. When `shared_chain()` is true
/// every agent observes the same chain (all coordinates equal); otherwise agent i follows
/// its own independent chain `chain(i)`.
class ProblemOracle {
 public:
  virtual ~ProblemOracle() = default;

  virtual int agents() const = 0;
  virtual int dim() const = 0;
  virtual bool shared_chain() const = 0;
  virtual const MarkovModel& chain(int agent) const = 0;

  virtual Vector local_update(int agent, const Vector& theta, int state) const = 0;

  /// h_i(theta) = sum_x mu(x) H_i(theta; x). Overridden with closed forms.
  virtual Vector mean_field(int agent, const Vector& theta) const;
  Vector averaged_mean_field(const Vector& theta) const;

  virtual double potential(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  /// V* = inf V.
  virtual double optimal_value() const = 0;
  /// A minimizer of V (included in every estimation grid).
  virtual Vector minimizer() const = 0;

  /// Constants known in closed form; absent entries are estimated on a grid.
  virtual ConstantsBundle analytic_constants() const { return {}; }
};

/// Oracle with H_i(theta; x) = M_{i,x} theta - v_{i,x}.
class AffineOracle : public ProblemOracle {
 public:
  virtual Matrix slope(int agent, int state) const = 0;
  virtual Vector offset(int agent, int state) const = 0;

  Vector local_update(int agent, const Vector& theta, int state) const override {
    return slope(agent, state) * theta - offset(agent, state);
  }
};

/// One agent's finite dataset: rows a_x of `features`, targets b_x.
struct Dataset {
  Matrix features;  // m x d
  Vector targets;   // m
};

/// Decentralized least squares over Markov-sampled data: V_i(theta; x) = (a_x^T theta - b_x)^2 / 2.
class ErgodicSgdProblem final : public AffineOracle {
 public:
  ErgodicSgdProblem(std::vector<Dataset> data, std::vector<MarkovModel> chains);

  int agents() const override { return static_cast<int>(data_.size()); }
  int dim() const override { return static_cast<int>(data_.front().features.cols()); }
  bool shared_chain() const override { return false; }
  const MarkovModel& chain(int agent) const override { return chains_[agent]; }

  Matrix slope(int agent, int state) const override;
  Vector offset(int agent, int state) const override;

  Vector mean_field(int agent, const Vector& theta) const override;
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  double optimal_value() const override { return v_star_; }
  Vector minimizer() const override { return theta_star_; }
  ConstantsBundle analytic_constants() const override;

  /// V_i(theta) = E_{mu_i}[V_i(theta; X)].
  double local_potential(int agent, const Vector& theta) const;
  const Dataset& dataset(int agent) const { return data_[agent]; }

 private:
  std::vector<Dataset> data_;
  std::vector<MarkovModel> chains_;
  std::vector<Matrix> hess_;   // E_mu[a a^T]
  std::vector<Vector> lin_;    // E_mu[a b]
  std::vector<double> cst_;    // E_mu[b^2] / 2
  Matrix hess_bar_;
  Vector lin_bar_;
  Vector theta_star_;
  double v_star_ = 0;
};

ErgodicSgdProblem make_ergodic_sgd_problem(std::vector<Dataset> data, std::vector<MarkovModel> chains);

/// Policy-evaluation MDP under a fixed policy with per-agent local rewards.
struct MdpSpec {
  Matrix transition;     // S x S
  Matrix features;       // S x d, row x is Phi(x)
  Matrix local_rewards;  // n x S
  double discount = 0.9;

  int states() const { return static_cast<int>(transition.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  double max_feature_norm() const { return features.rowwise().norm().maxCoeff(); }
  double max_abs_reward() const { return local_rewards.cwiseAbs().maxCoeff(); }
  /// Throws ValidationError / RankError / DimensionError.
  void validate() const;
};

/// TD(0) with linear features. The update is negated relative to the usual TD direction so
/// that h_bar(theta) = A (theta - theta*) points along grad V for V = ||theta - theta*||^2 / 2.
class Td0Problem final : public AffineOracle {
 public:
  Td0Problem(MdpSpec mdp, int agents);

  int agents() const override { return agents_; }
  int dim() const override { return mdp_.dim(); }
  bool shared_chain() const override { return true; }
  const MarkovModel& chain(int) const override { return pairs_.model; }

  Matrix slope(int agent, int state) const override;
  Vector offset(int agent, int state) const override;

  Vector mean_field(int agent, const Vector& theta) const override;
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  double optimal_value() const override { return 0.0; }
  Vector minimizer() const override { return theta_star_; }
  ConstantsBundle analytic_constants() const override;

  const MdpSpec& mdp() const { return mdp_; }
  const MarkovModel& state_chain() const { return base_; }
  const PairChain& pair_chain() const { return pairs_; }
  /// A = Phi^T D (I - discount P) Phi.
  const Matrix& system_matrix() const { return system_; }
  /// E_mu[ || Phi(x) (discount Phi(x') - Phi(x))^T ||_2 ]^2, reported for reference.
  double reference_d0() const;

 private:
  MdpSpec mdp_;
  int agents_;
  MarkovModel base_;
  PairChain pairs_;
  Matrix system_;
  Matrix offsets_;  // d x n: b_i = Phi^T D R_i
  Vector theta_star_;
};

Td0Problem make_td0_problem(MdpSpec mdp, int agents);

/// theta* solving A theta* = Phi^T D R_bar. Throws RankError if A is singular.
Vector bellman_solution(const MdpSpec& mdp);

// ---------------------------------------------------------------------------------------
// Constant estimation on a seeded grid.

struct SampleSpec {
  double radius = 10.0;
  int points = 1000;
  std::uint64_t seed = 0;
  long joint_state_cap = kProductStateCap;  // enumerate joint states up to this count
};

struct BiasEstimate {
  double c0 = 0;
  double d0 = 0;
  int evaluated = 0;
  std::vector<Vector> violations;  // thetas with <h_bar, grad V> <= 0
};

BiasEstimate estimate_bias_constants(const ProblemOracle& oracle, const SampleSpec& spec);

struct NoiseEstimate {
  double sigma_o = 0;
  double sigma_h = 0;
  /// sup over the full ball divided by sup over the half-radius ball; near 2 means linear growth.
  double sigma_o_growth = 0;
  double sigma_h_growth = 0;
  std::vector<std::string> warnings;
};

NoiseEstimate estimate_noise_constants(const ProblemOracle& oracle, const SampleSpec& spec);

struct LipschitzEstimate {
  Constant L_h, L_V, L_h_bar, K_P;
};

LipschitzEstimate estimate_lipschitz(const ProblemOracle& oracle, const SampleSpec& spec);

/// Analytic constants merged with grid estimates for whatever is not known in closed form.
ConstantsBundle estimate_constants(const ProblemOracle& oracle, const SampleSpec& spec);

/// The grid of consensual points: origin, the minimizer, points in the ball and on its sphere.
std::vector<Vector> theta_grid(const ProblemOracle& oracle, const SampleSpec& spec);

}  // namespace dsa
