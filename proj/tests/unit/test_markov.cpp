#include "helpers.hpp"

#include <doctest.h>

#include <sstream>

using namespace dsa;
using testing::random_matrix;
using testing::random_stochastic;

namespace {

Vector power_iteration(const Matrix& p, int iters = 20000) {
  Vector mu = Vector::Constant(p.rows(), 1.0 / p.rows());
  for (int k = 0; k < iters; ++k) mu = (mu.transpose() * p).transpose();
  return mu / mu.sum();
}

Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (long i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

Matrix two_state(double p, double q) { return (Matrix(2, 2) << 1 - p, p, q, 1 - q).finished(); }

}  // namespace

TEST_SUITE("markov") {
  TEST_CASE("two-state stationary law") {
    const Vector mu = stationary_distribution(two_state(0.1, 0.2));
    CHECK(mu(0) == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(mu(1) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }

  TEST_CASE("reducible and periodic chains are rejected") {
    CHECK_THROWS_AS(stationary_distribution(Matrix::Identity(3, 3)), ErgodicityError);
    CHECK_THROWS_AS(MarkovModel(Matrix::Identity(2, 2)), ErgodicityError);
    const Matrix flip = (Matrix(2, 2) << 0, 1, 1, 0).finished();
    CHECK(chain_period(flip) == 2);
    CHECK_THROWS_AS(stationary_distribution(flip), ErgodicityError);
    CHECK_THROWS_AS(stationary_distribution((Matrix(2, 2) << 0.5, 0.6, 0.5, 0.5).finished()), ValidationError);
  }

  TEST_CASE("random 5-state chain against power iteration") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix p = random_stochastic(5, rng);
      const Vector mu = stationary_distribution(p);
      CHECK((mu.transpose() * p - mu.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((mu - power_iteration(p)).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(mu.minCoeff() > 0);
    }
  }

  TEST_CASE("TV profile of the symmetric two-state chain") {
    const MarkovModel m(two_state(0.1, 0.1));
    const auto prof = tv_mixing_profile(m, 60);
    for (int t = 0; t <= 60; ++t) CHECK(std::abs(prof.tv[t] - 0.5 * std::pow(0.8, t)) < 1e-14);
    CHECK(std::abs(prof.fit.lambda - 0.8) < 1e-6);
    CHECK(prof.fit.K >= 0.5 - 1e-12);
  }

  TEST_CASE("i.i.d. chain has zero TV distance after one step") {
    const Vector mu = (Vector(3) << 0.2, 0.5, 0.3).finished();
    const Matrix p = Vector::Ones(3) * mu.transpose();
    const auto prof = tv_mixing_profile(MarkovModel(p), 20);
    for (int t = 1; t <= 20; ++t) CHECK(prof.tv[t] < 1e-15);
  }

  TEST_CASE("profile is nonincreasing and under its envelope") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
      const int s = 2 + static_cast<int>(rng.below(10));
      const MarkovModel m(random_stochastic(s, rng, 0.4));
      const auto prof = tv_mixing_profile(m, 100);
      for (int t = 1; t <= 100; ++t) {
        CHECK(prof.tv[t] <= prof.tv[t - 1] + 1e-14);
        CHECK(prof.tv[t] <= prof.fit.K * std::pow(prof.fit.lambda, t) * (1 + 1e-9) + 1e-13);
      }
      CHECK(prof.fit.K >= 0);
      CHECK(prof.fit.lambda >= 0);
      CHECK(prof.fit.lambda < 1);
      // the distribution started anywhere approaches mu monotonically in L1
      Vector nu = Vector::Zero(s);
      nu(0) = 1;
      double prev = (nu - m.stationary()).cwiseAbs().sum();
      for (int t = 1; t <= 100; ++t) {
        nu = (nu.transpose() * m.transition()).transpose();
        const double cur = (nu - m.stationary()).cwiseAbs().sum();
        CHECK(cur <= prev + 1e-14);
        prev = cur;
      }
    }
  }

  TEST_CASE("Poisson closed forms") {
    const MarkovModel single(Matrix::Ones(1, 1));
    const auto sol = solve_poisson(single, (Matrix(1, 2) << 3.0, -1.0).finished());
    CHECK(sol.H_hat.cwiseAbs().maxCoeff() == 0.0);

    const Vector mu = (Vector(3) << 0.2, 0.5, 0.3).finished();
    const MarkovModel iid(Vector::Ones(3) * mu.transpose());
    Rng rng(1);
    const Matrix h = random_matrix(3, 2, rng);
    const Matrix expect = h - Vector::Ones(3) * (mu.transpose() * h);
    CHECK((solve_poisson(iid, h).H_hat - expect).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("two-state Poisson residual") {
    const MarkovModel m(two_state(0.3, 0.1));
    const Matrix h = (Matrix(2, 1) << 1.0, 0.0).finished();
    const auto sol = solve_poisson(m, h);
    const Matrix& p = m.transition();
    const Vector& mu = m.stationary();
    const Matrix defect = (sol.H_hat - p * sol.H_hat) - (h - Vector::Ones(2) * (mu.transpose() * h));
    CHECK(defect.cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(std::abs((mu.transpose() * sol.H_hat)(0)) <= 1e-12);
    CHECK(sol.residual <= 1e-10);
  }

  TEST_CASE("Poisson defect identity on random chains") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
      const int s = 1 + static_cast<int>(rng.below(20));
      const MarkovModel m(random_stochastic(s, rng, 0.5));
      const Matrix h = random_matrix(s, 3, rng, -5, 5);
      const auto sol = solve_poisson(m, h);
      const Matrix defect = (sol.H_hat - m.transition() * sol.H_hat) -
                            (h - Vector::Ones(s) * (m.stationary().transpose() * h));
      CHECK(defect.cwiseAbs().maxCoeff() <= 1e-10);
    }
  }

  TEST_CASE("sample stream follows a permutation orbit") {
    Matrix p = Matrix::Zero(4, 4);
    p(0, 2) = p(2, 1) = p(1, 3) = p(3, 0) = 1;
    // periodic, so MarkovModel rejects it; the row draws are what a stream does per step
    Rng rng(0);
    int x = 0;
    const int orbit[] = {2, 1, 3, 0, 2, 1, 3, 0};
    for (int k : orbit) {
      x = sample_categorical(p.row(x).transpose(), rng);
      CHECK(x == k);
    }
  }

  TEST_CASE("sample stream determinism and occupancy") {
    const MarkovModel m(two_state(0.1, 0.2));
    SampleStream a(m, 0, 99), b(m, 0, 99);
    bool same = true;
    for (int k = 0; k < 10000; ++k) same = same && a.next() == b.next();
    CHECK(same);

    SampleStream s(m, 0, 2024);
    const long steps = 1000000;
    long visits = 0;
    for (long k = 0; k < steps; ++k) visits += s.next() == 0;
    const double freq = static_cast<double>(visits) / steps;
    // asymptotic variance of the occupancy of a two-state chain
    const double mu0 = 2.0 / 3, lam = 1 - 0.1 - 0.2;
    const double se = std::sqrt(mu0 * (1 - mu0) * (1 + lam) / (1 - lam) / steps);
    CHECK(std::abs(freq - mu0) <= 3 * se);

    CHECK_THROWS_AS(SampleStream(m, 2, 1), StateError);
    CHECK_THROWS_AS(SampleStream(m, -1, 1), StateError);
  }

  TEST_CASE("deterministic chain stream") {
    Matrix p = Matrix::Zero(3, 3);
    p(0, 1) = p(1, 2) = p(2, 2) = 1;
    Rng rng(7);
    int x = 0;
    for (int k : {1, 2, 2, 2}) {
      x = sample_categorical(p.row(x).transpose(), rng);
      CHECK(x == k);
    }
    SampleStream one(MarkovModel(Matrix::Ones(1, 1)), 0, 5);
    for (int k = 0; k < 10; ++k) CHECK(one.next() == 0);
  }

  TEST_CASE("product kernels") {
    const MarkovModel a(two_state(0.1, 0.2)), b(two_state(0.3, 0.4));
    const MarkovModel ab = product_kernel({a, b});
    CHECK(ab.states() == 4);
    CHECK((ab.stationary() - kron(a.stationary(), b.stationary())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ab.transition()(1, 2) == doctest::Approx(a.transition()(0, 1) * b.transition()(1, 0)));

    const MarkovModel solo = product_kernel({a});
    CHECK((solo.transition() - a.transition()).cwiseAbs().maxCoeff() == 0.0);

    Rng rng(8);
    std::vector<MarkovModel> three;
    for (int k = 0; k < 3; ++k) three.emplace_back(random_stochastic(3, rng));
    const MarkovModel big = product_kernel(three);
    CHECK(big.states() == 27);
    const Vector expect = kron(kron(three[0].stationary(), three[1].stationary()), three[2].stationary());
    CHECK((big.stationary() - expect).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(product_kernel(three, 26), CapacityError);
  }

  TEST_CASE("pair chain marginal") {
    const MarkovModel base(testing::td_toy_transition());
    const PairChain pc = make_pair_chain(base);
    const Vector& nu = pc.model.stationary();
    for (int k = 0; k < static_cast<int>(pc.pairs.size()); ++k) {
      const auto [x, y] = pc.pairs[k];
      CHECK(nu(k) == doctest::Approx(base.stationary()(x) * base.transition()(x, y)).epsilon(1e-10));
    }
  }

  TEST_CASE("profile CSV") {
    const auto prof = tv_mixing_profile(MarkovModel(two_state(0.1, 0.1)), 3);
    std::ostringstream out;
    write_profile_csv(out, prof);
    CHECK(out.str().rfind("t,tv,envelope\n0,0.5,", 0) == 0);
  }
}
