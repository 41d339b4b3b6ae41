#pragma once

#include "dsa/common.hpp"
#include "dsa/rng.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dsa {

/// Geometric envelope sup_x ||P^t(x,.) - mu||_TV <= K lambda^t.
struct MixingFit {
  double K = 0;
  double lambda = 0;
};

/// Ergodic finite-state kernel with its stationary distribution.
class MarkovModel {
 public:
  /// Validates row-stochasticity and ergodicity, then solves for mu.
  /// Throws ValidationError / ErgodicityError.
  explicit MarkovModel(Matrix transition);

  int states() const { return static_cast<int>(p_.rows()); }
  const Matrix& transition() const { return p_; }
  const Vector& stationary() const { return mu_; }
  const std::optional<MixingFit>& mixing() const { return mixing_; }

  /// Copy with the (K, lambda) envelope fitted over t in [1, t_max].
  MarkovModel with_mixing_fit(int t_max) const;

 private:
  Matrix p_;
  Vector mu_;
  std::optional<MixingFit> mixing_;
};

/// True when `p` has nonnegative entries and unit row sums (tolerance 1e-12).
bool is_row_stochastic(const Matrix& p, double tol = 1e-12);

/// Irreducibility via strong connectivity of the positive-entry graph.
bool is_irreducible(const Matrix& p);

/// Period of an irreducible chain (gcd of cycle lengths).
int chain_period(const Matrix& p);

/// Unique mu with mu P = mu, sum(mu) = 1. Throws ErgodicityError for reducible or periodic P.
Vector stationary_distribution(const Matrix& p);

struct MixingProfile {
  std::vector<double> tv;  // tv[t] = sup_x ||P^t(x,.) - mu||_TV, t = 0..t_max
  MixingFit fit;
  int fit_points = 0;      // number of t used for the envelope
};

/// Exact TV profile via matrix powers, with the envelope fitted as an upper bound.
MixingProfile tv_mixing_profile(const MarkovModel& model, int t_max);

/// Solution of H_hat - P H_hat = H - 1 (mu^T H), centred so mu^T H_hat = 0.
struct PoissonSolution {
  Matrix H_hat;
  double residual = 0;  // max-norm of the defect
};

/// Factorizes (I - P + 1 mu^T) once for repeated Poisson solves on the same chain.
class PoissonSolver {
 public:
  explicit PoissonSolver(const MarkovModel& model);
  PoissonSolution solve(const Matrix& h) const;
  /// The linear map f -> P f_hat taking a function table to P applied to its Poisson solution.
  const Matrix& smoothed_operator() const { return p_fund_; }

 private:
  Matrix p_;
  Vector mu_;
  Eigen::PartialPivLU<Matrix> lu_;
  Matrix p_fund_;
};

PoissonSolution solve_poisson(const MarkovModel& model, const Matrix& h);

/// Seeded sample path X^0, X^1, ... of a chain.
class SampleStream {
 public:
  SampleStream(const MarkovModel& model, int x0, std::uint64_t seed);

  int state() const { return state_; }
  /// Advances one transition and returns the new state.
  int next();

 private:
  std::shared_ptr<const std::vector<double>> cumulative_;  // row-major cumulative rows
  int states_;
  int state_;
  Rng rng_;
};

SampleStream sample_stream(const MarkovModel& model, int x0, std::uint64_t seed);

/// Inverse-CDF draw from a probability vector.
int sample_categorical(const Vector& probabilities, Rng& rng);

inline constexpr long kProductStateCap = 10000;

/// Kernel on the product space with independent factors. Throws CapacityError above `cap`.
MarkovModel product_kernel(const std::vector<MarkovModel>& factors, long cap = kProductStateCap);

/// Chain on observed transitions (x, x'): (x,x') -> (x', y) with probability P(x', y).
struct PairChain {
  MarkovModel model;
  std::vector<std::pair<int, int>> pairs;
};

PairChain make_pair_chain(const MarkovModel& base);

Matrix load_kernel_csv(const std::string& path);
void write_profile_csv(std::ostream& out, const MixingProfile& profile);

}  // namespace dsa
