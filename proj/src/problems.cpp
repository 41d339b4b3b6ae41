#include "dsa/problems.hpp"

#include <algorithm>
#include <cmath>

namespace dsa {

Vector ProblemOracle::mean_field(int agent, const Vector& theta) const {
  const MarkovModel& mc = chain(agent);
  Vector acc = Vector::Zero(dim());
  for (int x = 0; x < mc.states(); ++x)
    if (mc.stationary()(x) > 0) acc += mc.stationary()(x) * local_update(agent, theta, x);
  return acc;
}

Vector ProblemOracle::averaged_mean_field(const Vector& theta) const {
  Vector acc = Vector::Zero(dim());
  for (int i = 0; i < agents(); ++i) acc += mean_field(i, theta);
  return acc / agents();
}

// --- decentralized least squares ---------------------------------------------------------

ErgodicSgdProblem::ErgodicSgdProblem(std::vector<Dataset> data, std::vector<MarkovModel> chains)
    : data_(std::move(data)), chains_(std::move(chains)) {
  if (data_.empty()) throw DimensionError("at least one agent is required");
  if (data_.size() != chains_.size()) throw DimensionError("one chain per agent is required");
  const long d = data_.front().features.cols();
  if (d < 1) throw DimensionError("parameter dimension must be positive");
  hess_bar_ = Matrix::Zero(d, d);
  lin_bar_ = Vector::Zero(d);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const Dataset& ds = data_[i];
    if (ds.features.cols() != d) throw DimensionError("agent " + std::to_string(i + 1) + ": feature dimension mismatch");
    if (ds.targets.size() != ds.features.rows()) throw DimensionError("agent " + std::to_string(i + 1) + ": targets/features row mismatch");
    if (chains_[i].states() != ds.features.rows())
      throw DimensionError("agent " + std::to_string(i + 1) + ": chain states must index the data points");
    const Vector& mu = chains_[i].stationary();
    hess_.push_back(ds.features.transpose() * mu.asDiagonal() * ds.features);
    lin_.push_back(ds.features.transpose() * mu.asDiagonal() * ds.targets);
    cst_.push_back(0.5 * mu.dot(ds.targets.cwiseAbs2()));
    hess_bar_ += hess_.back();
    lin_bar_ += lin_.back();
  }
  hess_bar_ /= agents();
  lin_bar_ /= agents();
  theta_star_ = hess_bar_.completeOrthogonalDecomposition().solve(lin_bar_);
  v_star_ = potential(theta_star_);
}

Matrix ErgodicSgdProblem::slope(int agent, int state) const {
  const Vector a = data_[agent].features.row(state).transpose();
  return a * a.transpose();
}

Vector ErgodicSgdProblem::offset(int agent, int state) const {
  return data_[agent].features.row(state).transpose() * data_[agent].targets(state);
}

Vector ErgodicSgdProblem::mean_field(int agent, const Vector& theta) const {
  return hess_[agent] * theta - lin_[agent];
}

double ErgodicSgdProblem::local_potential(int agent, const Vector& theta) const {
  return 0.5 * theta.dot(hess_[agent] * theta) - lin_[agent].dot(theta) + cst_[agent];
}

double ErgodicSgdProblem::potential(const Vector& theta) const {
  double acc = 0;
  for (int i = 0; i < agents(); ++i) acc += local_potential(i, theta);
  return acc / agents();
}

Vector ErgodicSgdProblem::gradient(const Vector& theta) const { return hess_bar_ * theta - lin_bar_; }

ConstantsBundle ErgodicSgdProblem::analytic_constants() const {
  ConstantsBundle c;
  c.c0 = Constant{1.0, Provenance::Analytic};
  c.d0 = Constant{1.0, Provenance::Analytic};
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hess_bar_);
  c.L_V = Constant{eig.eigenvalues().maxCoeff(), Provenance::Analytic};
  c.V_star = Constant{v_star_, Provenance::Analytic};
  return c;
}

ErgodicSgdProblem make_ergodic_sgd_problem(std::vector<Dataset> data, std::vector<MarkovModel> chains) {
  return ErgodicSgdProblem(std::move(data), std::move(chains));
}

// --- decentralized TD(0) -----------------------------------------------------------------

void MdpSpec::validate() const {
  if (transition.rows() != transition.cols() || transition.rows() == 0)
    throw DimensionError("transition matrix must be square");
  if (!is_row_stochastic(transition)) throw ValidationError("transition matrix is not row-stochastic");
  if (features.rows() != transition.rows()) throw DimensionError("feature table needs one row per state");
  if (local_rewards.cols() != transition.rows()) throw DimensionError("reward table needs one column per state");
  if (local_rewards.rows() < 1) throw DimensionError("reward table needs one row per agent");
  if (!(discount > 0 && discount < 1)) throw ValidationError("discount must lie in (0, 1)");
  if (!features.allFinite() || !local_rewards.allFinite()) throw ValidationError("non-finite features or rewards");
  Eigen::FullPivLU<Matrix> lu(features);
  if (lu.rank() < features.cols()) throw RankError("feature matrix is not full column rank");
}

namespace {

Matrix td_system(const MdpSpec& mdp, const Vector& mu) {
  const int s = mdp.states();
  return mdp.features.transpose() * mu.asDiagonal() *
         (Matrix::Identity(s, s) - mdp.discount * mdp.transition) * mdp.features;
}

Vector solve_bellman(const Matrix& system, const Vector& rhs) {
  Eigen::FullPivLU<Matrix> lu(system);
  if (!lu.isInvertible()) throw RankError("Bellman system is singular");
  return lu.solve(rhs);
}

}  // namespace

Vector bellman_solution(const MdpSpec& mdp) {
  mdp.validate();
  const Vector mu = stationary_distribution(mdp.transition);
  const Vector r_bar = mdp.local_rewards.colwise().mean().transpose();
  return solve_bellman(td_system(mdp, mu), mdp.features.transpose() * mu.asDiagonal() * r_bar);
}

Td0Problem::Td0Problem(MdpSpec mdp, int agents)
    : mdp_((mdp.validate(), std::move(mdp))),
      agents_(agents),
      base_(mdp_.transition),
      pairs_(make_pair_chain(base_)) {
  if (agents_ != mdp_.local_rewards.rows())
    throw DimensionError("reward table has " + std::to_string(mdp_.local_rewards.rows()) + " rows for " +
                         std::to_string(agents_) + " agents");
  const Vector& mu = base_.stationary();
  system_ = td_system(mdp_, mu);
  offsets_ = mdp_.features.transpose() * mu.asDiagonal() * mdp_.local_rewards.transpose();
  theta_star_ = solve_bellman(system_, offsets_.rowwise().mean());
}

Matrix Td0Problem::slope(int, int state) const {
  const auto [x, y] = pairs_.pairs[state];
  const Vector phi = mdp_.features.row(x).transpose();
  const Vector next = mdp_.features.row(y).transpose();
  return phi * (phi - mdp_.discount * next).transpose();
}

Vector Td0Problem::offset(int agent, int state) const {
  const int x = pairs_.pairs[state].first;
  return mdp_.features.row(x).transpose() * mdp_.local_rewards(agent, x);
}

Vector Td0Problem::mean_field(int agent, const Vector& theta) const {
  return system_ * theta - offsets_.col(agent);
}

double Td0Problem::potential(const Vector& theta) const { return 0.5 * (theta - theta_star_).squaredNorm(); }

Vector Td0Problem::gradient(const Vector& theta) const { return theta - theta_star_; }

double Td0Problem::reference_d0() const {
  const Vector& mu = pairs_.model.stationary();
  double acc = 0;
  for (int s = 0; s < pairs_.model.states(); ++s) acc += mu(s) * spectral_norm(slope(0, s));
  return acc * acc;
}

ConstantsBundle Td0Problem::analytic_constants() const {
  ConstantsBundle c;
  // <h, grad V> / |h|^2 over h = A e is the Rayleigh quotient of sym(A^{-1}).
  const Matrix inv = system_.inverse();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (inv + inv.transpose()));
  c.c0 = Constant{eig.eigenvalues().minCoeff(), Provenance::Analytic};
  Eigen::JacobiSVD<Matrix> svd(system_);
  const double smin = svd.singularValues().minCoeff();
  c.d0 = Constant{1.0 / (smin * smin), Provenance::Analytic};
  c.L_V = Constant{1.0, Provenance::Analytic};
  c.V_star = Constant{0.0, Provenance::Analytic};

  // Agents share M_x, so H_i - mean_j H_j = M_x (theta_i - theta_bar) - Phi(x)(R_i(x) - R_bar(x)).
  double slope_norm = 0;
  for (int s = 0; s < pairs_.model.states(); ++s) slope_norm = std::max(slope_norm, spectral_norm(slope(0, s)));
  const Vector r_bar = mdp_.local_rewards.colwise().mean().transpose();
  double het = 0;
  for (int i = 0; i < agents_; ++i)
    for (int x = 0; x < mdp_.states(); ++x)
      het = std::max(het, mdp_.features.row(x).norm() * std::abs(mdp_.local_rewards(i, x) - r_bar(x)));
  c.sigma_o = Constant{std::max(agents_ * het, slope_norm), Provenance::Analytic};
  c.L_h = Constant{slope_norm, Provenance::Analytic};
  return c;
}

Td0Problem make_td0_problem(MdpSpec mdp, int agents) { return Td0Problem(std::move(mdp), agents); }

}  // namespace dsa
