#include "helpers.hpp"

#include <doctest.h>

using namespace dsa;
using testing::full_bundle;
using testing::random_vector;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// Straight transcription of the constant formulas, kept separate from the library code.
struct Sheet {
  double E0, C0, C1, C2, Ct, Cb, Ctot, mf, cons, cap;
};

Sheet spreadsheet(const ConstantsBundle& c, const std::vector<double>& g, long T, double V0, double grad0) {
  const double c0 = c.c0->value, d0 = c.d0->value, so = c.sigma_o->value, sh = c.sigma_h->value;
  const double Lh = c.L_h->value, LV = c.L_V->value, KP = c.K_P->value, Lb = c.L_h_bar->value;
  const double ah = c.a_hat->value, a = c.a_ratio->value, rho = c.rho_bar->value, n = c.n_agents->value;
  const double rd = std::sqrt(d0);
  Sheet s{};
  s.E0 = 12 * so * so * Lh * Lh / (rho * n * n);
  s.C0 = KP * (rd / 2 + g[1] * grad0);
  s.C1 = KP * LV * (rho * n * (1 + 2 * sh) + Lh * (1 + 4 * so * so)) / (2 * rho * n) +
         rd * (Lb * sh * sh + 4 * Lb * so * so / rho + KP * ah);
  s.C2 = rd * Lb * (2 + Lh / (2 * n) + 4 * so * so / rho) + KP * rd / 2 +
         KP * (ah * a * a * rd + LV * (rho * n + 4 * Lh * so * so) / (2 * rho * n));
  s.Ct = s.C2 + s.E0 + d0 / 2 + LV;
  s.Cb = s.C1 + s.E0 + sh * sh * LV;
  long double sg = 0, sg2 = 0;
  for (long t = 0; t <= T; ++t) {
    sg += g[t + 1];
    sg2 += static_cast<long double>(g[t + 1]) * g[t + 1];
  }
  s.Ctot = V0 - c.V_star->value + s.C0 + s.Cb * static_cast<double>(sg2);
  s.mf = s.Ctot / ((c0 / 2) * static_cast<double>(sg));
  s.cons = (s.Ctot / c0 + 3 * so / (2 * rho) * static_cast<double>(sg2)) / static_cast<double>(sg);
  s.cap = std::min({1.0, so > 0 ? rho / (2 * so) : 1.0, c0 / (2 * s.Ct)});
  return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("noiseless centralized certificate") {
    auto c = full_bundle(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.3, 1.0, 1);
    const auto steps = make_step_schedule(0.1, 1.0, 100);
    const auto cert = compute_certificate(c, steps, 100, 2.5, 1.0);
    CHECK(cert.mk.E0 == 0.0);
    CHECK(cert.mk.C0mk == 0.0);
    CHECK(cert.mk.C1mk == 0.0);
    CHECK(cert.mk.C2mk == doctest::Approx(0.3 * (2 + 1.0 / 2)).epsilon(1e-14));
    CHECK(cert.C_tot == doctest::Approx(2.5).epsilon(1e-14));
  }

  TEST_CASE("mean-field right-hand side identity") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      auto c = full_bundle(rng.uniform(0.01, 1), rng.uniform(1, 50), rng.uniform(0, 5), rng.uniform(0, 5),
                           rng.uniform(0, 3), rng.uniform(0.1, 3), rng.uniform(0, 5), rng.uniform(0, 3),
                           rng.uniform(0.05, 1), 1 + static_cast<int>(rng.below(10)));
      const long T = 1 + static_cast<long>(rng.below(5000));
      const auto steps = make_step_schedule(rng.uniform(0.01, 1), rng.uniform(1, 10), T);
      const auto cert = compute_certificate(c, steps, T, rng.uniform(0, 10), rng.uniform(0, 10));
      CHECK(rel(cert.rhs_meanfield * (c.c0->value / 2) * cert.sum_gamma, cert.C_tot) <= 1e-12);
    }
  }

  TEST_CASE("TD(0) toy certificate against an independent recomputation") {
    const auto cfg = load_config(testing::source_path("configs/td0_toy.json"));
    const long T = 20000;
    const auto prep = prepare(cfg, T);
    const auto cert = compute_certificate(prep.constants, prep.steps, T, prep.V0, prep.grad0);
    const auto sheet = spreadsheet(prep.constants, prep.steps.gammas, T, prep.V0, prep.grad0);
    CHECK(rel(cert.mk.E0, sheet.E0) <= 1e-10);
    CHECK(rel(cert.mk.C0mk, sheet.C0) <= 1e-10);
    CHECK(rel(cert.mk.C1mk, sheet.C1) <= 1e-10);
    CHECK(rel(cert.mk.C2mk, sheet.C2) <= 1e-10);
    CHECK(rel(cert.mk.Ctilde_mk, sheet.Ct) <= 1e-10);
    CHECK(rel(cert.mk.Cbar_mk, sheet.Cb) <= 1e-10);
    CHECK(rel(cert.C_tot, sheet.Ctot) <= 1e-10);
    CHECK(rel(cert.rhs_meanfield, sheet.mf) <= 1e-10);
    CHECK(rel(cert.rhs_consensus, sheet.cons) <= 1e-10);
    CHECK(rel(cert.cap, sheet.cap) <= 1e-10);
    CHECK(cert.binding);
  }

  TEST_CASE("certificate needs every constant") {
    auto c = full_bundle(1, 1, 1, 1, 1, 1, 1, 1, 0.5, 3);
    c.K_P.reset();
    c.L_h_bar.reset();
    const auto steps = make_step_schedule(0.1, 1.0, 10);
    try {
      compute_certificate(c, steps, 10, 0, 0);
      FAIL("expected IncompleteConstantsError");
    } catch (const IncompleteConstantsError& e) {
      const std::string what = e.what();
      CHECK(what.find("K_P") != std::string::npos);
      CHECK(what.find("L_h_bar") != std::string::npos);
    }
  }

  TEST_CASE("certificate is monotone in the noise constants") {
    Rng rng(2);
    const auto steps = make_step_schedule(0.2, 2.0, 500);
    for (int trial = 0; trial < 40; ++trial) {
      const auto base = full_bundle(rng.uniform(0.01, 1), rng.uniform(1, 10), rng.uniform(0, 3), rng.uniform(0, 3),
                                    rng.uniform(0, 2), rng.uniform(0.1, 2), rng.uniform(0, 3), rng.uniform(0, 2),
                                    rng.uniform(0.05, 1), 4);
      const double ref = compute_certificate(base, steps, 500, 1.0, 1.0).C_tot;
      for (int which = 0; which < 3; ++which) {
        auto up = base;
        std::optional<Constant>& slot = which == 0 ? up.sigma_o : (which == 1 ? up.sigma_h : up.K_P);
        slot->value += rng.uniform(0.01, 2);
        CHECK(compute_certificate(up, steps, 500, 1.0, 1.0).C_tot >= ref);
      }
    }
  }

  TEST_CASE("right-hand sides eventually decrease in T") {
    const auto c = full_bundle(0.5, 4, 1, 1, 1, 1, 1, 1, 0.5, 4);
    double prev = kInf;
    for (long T : {10000L, 100000L, 1000000L}) {
      const auto steps = make_step_schedule(0.01, 1.0, T);
      const auto cert = compute_certificate(c, steps, T, 1, 1);
      CHECK(cert.rhs_meanfield < prev);
      prev = cert.rhs_meanfield;
    }
  }

  TEST_CASE("pathwise bound: geometric limit") {
    const double gamma = 0.05, rho = 0.4, so = 2.0;
    const std::vector<double> gammas(402, gamma);
    const auto b = lemma1_bound(gammas, rho, so, std::vector<double>(401, 0.0));
    CHECK(b.binding);
    CHECK(b.bound.back() == doctest::Approx(2 * so * gamma / rho).epsilon(1e-12));
    for (std::size_t t = 1; t < b.bound.size(); ++t) CHECK(b.bound[t] >= b.bound[t - 1]);
  }

  TEST_CASE("pathwise bound: no heterogeneity") {
    Rng rng(3);
    std::vector<double> g(52), h(51);
    for (auto& v : g) v = rng.uniform(0, 1);
    for (auto& v : h) v = rng.uniform(0, 10);
    const auto b = lemma1_bound(g, 0.3, 0.0, h);
    for (double v : b.bound) CHECK(v == 0.0);
    CHECK(b.binding);
  }

  TEST_CASE("pathwise bound: running recursion equals the convolution") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const int T = 50;
      const double rho = rng.uniform(0.01, 1), so = rng.uniform(0, 3);
      std::vector<double> g(T + 2), h(T + 1);
      for (auto& v : g) v = rng.uniform(0, rho / (2 * std::max(so, 1e-9)));
      for (auto& v : h) v = rng.uniform(0, 5);
      const auto b = lemma1_bound(g, rho, so, h);
      for (int t = 0; t <= T; ++t) {
        double direct = 0;
        for (int s = 0; s <= t; ++s) direct += g[s + 1] * std::pow(1 - rho / 2, t - s) * (1 + h[s]);
        direct *= so;
        CHECK(std::abs(b.bound[t + 1] - direct) <= 1e-12 * std::max(1.0, direct));
      }
      CHECK(b.binding);
    }
    const auto loose = lemma1_bound({1, 1, 1}, 0.5, 1.0, {0, 0});
    CHECK(!loose.binding);
  }

  TEST_CASE("summation inequality: worked cases") {
    const auto zero = lemma5_check(std::vector<double>(10, 0.0), 0.5, 9);
    CHECK(zero.lhs == 0.0);
    CHECK(zero.rhs == 0.0);
    CHECK(zero.holds);
    const auto ones = lemma5_check({1, 1, 1}, 0.5, 2);
    CHECK(ones.lhs == 6.3125);
    CHECK(ones.rhs == 12.0);
    CHECK(ones.holds);
  }

  TEST_CASE("summation inequality: the constant 2/rho is too small for slow contraction") {
    // with a = 1 the inner sums approach 1/rho, so the left side grows like T / rho^2
    const auto r = lemma5_check(std::vector<double>(201, 1.0), 0.1, 200);
    CHECK(!r.holds);
    CHECK(r.lhs > r.rhs);
  }

  TEST_CASE("summation inequality holds with the constant 1/rho^2") {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
      const long T = static_cast<long>(rng.below(100));
      const double rho = rng.uniform(0.01, 0.99);
      std::vector<double> a(T + 1);
      for (auto& v : a) v = rng.uniform(0, 1);
      const auto r = lemma5_check(a, rho, T);
      const double corrected = r.rhs * rho / 2 / (rho * rho);
      CHECK(r.lhs <= corrected * (1 + 1e-12));
    }
  }

  TEST_CASE("rate fits") {
    const std::vector<double> grid{1e3, 1e4, 1e5};
    std::vector<double> power, logp, flat;
    for (double T : grid) {
      power.push_back(5 / std::sqrt(T));
      logp.push_back(std::log(T) / std::sqrt(T));
      flat.push_back(0.7);
    }
    const auto a = rate_fit(grid, power);
    CHECK(std::abs(a.slope + 0.5) <= 1e-10);
    CHECK(a.half_width <= 1e-9);
    const auto b = rate_fit(grid, logp);
    CHECK(b.slope > -0.5);
    CHECK(b.slope < -0.35);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(b.log_profile[k] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(rate_fit(grid, flat).slope) <= 1e-12);
    CHECK_THROWS_AS(rate_fit({1e3, 1e4}, {1, 1}), FitError);
    CHECK_THROWS_AS(rate_fit(grid, {1, 0, 1}), FitError);
    CHECK_THROWS_AS(rate_fit(grid, {1, -1, 1}), FitError);
  }

  TEST_CASE("verification of a noiseless centralized run") {
    const testing::IdentityOracle o(1, 2);
    MixingSchedule m;
    m.matrices = {Matrix::Ones(1, 1)};
    m.rho_bar = 1;
    auto c = full_bundle(1, 1, 0, 0, 1, 1, 0, 0, 1, 1);
    const auto steps = make_step_schedule(0.2, 1.0, 100, c, 1.0);
    RecordOptions opt;
    opt.diagnostics = true;
    opt.theta0 = Matrix::Constant(2, 1, 3.0);
    const auto rec = run_dsa(o, m, steps, 100, 1, opt);
    const auto cert = compute_certificate(c, steps, 100, o.potential(opt.theta0->col(0)), 3 * std::sqrt(2.0));
    EnsembleSpec spec{&o, &m, &steps, 100, opt, {}};
    const auto ens = run_ensemble(spec, 3, 9);
    const auto rep = verify_trajectory(rec, c, cert, &ens);
    CHECK(rep.passed());
    for (const auto& chk : rep.checks) {
      CHECK_MESSAGE(chk.pass, chk.name);
      CHECK_MESSAGE(chk.binding, chk.name);
    }
    CHECK(rep.summary().find("verdict: PASS") != std::string::npos);
  }

  TEST_CASE("large steps leave the pathwise bound non-binding") {
    const auto p = testing::sgd_toy();
    const auto mix = make_static_schedule(build_metropolis_weights(Graph::path(3)));
    auto c = estimate_constants(p, SampleSpec{10, 200, 1});
    c.rho_bar = Constant{mix.rho_bar, Provenance::Network};
    c.n_agents = Constant{3, Provenance::Network};
    const auto steps = make_step_schedule(0.8, 1.0, 300);
    RecordOptions opt;
    opt.diagnostics = true;
    const auto rec = run_dsa(p, mix, steps, 300, 4, opt);
    const auto cert = compute_certificate(c, steps, 300, p.potential(Vector::Zero(2)), p.gradient(Vector::Zero(2)).norm());
    CHECK(!cert.binding);
    const auto rep = verify_trajectory(rec, c, cert);
    REQUIRE(!rep.checks.empty());
    CHECK(rep.checks.front().name == "pathwise consensus bound");
    CHECK(!rep.checks.front().binding);
    CHECK(rep.summary().find("[NON-BINDING] pathwise consensus bound") != std::string::npos);
  }

  TEST_CASE("missing columns are reported") {
    const auto p = testing::sgd_toy();
    const auto mix = make_static_schedule(build_metropolis_weights(Graph::path(3)));
    const auto steps = make_step_schedule(0.1, 1.0, 20);
    const auto rec = run_dsa(p, mix, steps, 20, 4);
    auto c = full_bundle(1, 1, 1, 1, 1, 1, 1, 1, mix.rho_bar, 3);
    const auto cert = compute_certificate(c, steps, 20, 0, 0);
    try {
      verify_trajectory(rec, c, cert);
      FAIL("expected ReportError");
    } catch (const ReportError& e) {
      CHECK(std::string(e.what()).find("e0") != std::string::npos);
      CHECK(std::string(e.what()).find("res_o") != std::string::npos);
    }
    c.sigma_h.reset();
    CHECK_THROWS_AS(verify_trajectory(rec, c, cert), ReportError);
  }
}
