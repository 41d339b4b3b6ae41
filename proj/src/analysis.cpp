#include "dsa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dsa {

BoundCertificate compute_certificate(const ConstantsBundle& constants, const StepSchedule& steps, long T, double V0,
                                     double grad0) {
  if (T < 0) throw ConfigError("T must be nonnegative");
  if (static_cast<long>(steps.gammas.size()) < T + 2) throw ConfigError("step schedule shorter than the horizon");
  ConstantsBundle c = constants;
  if (!c.a_hat) c.a_hat = Constant{steps.a_hat, Provenance::Schedule};
  if (!c.a_ratio) c.a_ratio = Constant{steps.a_ratio, Provenance::Schedule};
  c.require_complete();

  BoundCertificate cert;
  cert.T = T;
  cert.V0 = V0;
  cert.grad0 = grad0;
  cert.mk = markov_constants(c, steps.gamma(1), grad0);
  CompensatedSum<> s1, s2;
  for (long t = 0; t <= T; ++t) {
    const double g = steps.gamma(t + 1);
    s1 += g;
    s2 += g * g;
  }
  cert.sum_gamma = s1.value();
  cert.sum_gamma_sq = s2.value();
  cert.C_tot = V0 - c.V_star->value + cert.mk.C0mk + cert.mk.Cbar_mk * cert.sum_gamma_sq;
  const double c0 = c.c0->value;
  cert.rhs_meanfield = cert.C_tot / ((c0 / 2.0) * cert.sum_gamma);
  cert.rhs_consensus =
      (cert.C_tot / c0 + (3.0 * c.sigma_o->value / (2.0 * c.rho_bar->value)) * cert.sum_gamma_sq) / cert.sum_gamma;
  cert.cap = step_cap(c);
  double gmax = 0;
  for (long t = 0; t <= T + 1; ++t) gmax = std::max(gmax, steps.gamma(t));
  cert.binding = gmax <= cert.cap * (1 + 1e-12);
  return cert;
}

Lemma1Bound lemma1_bound(const std::vector<double>& gammas, double rho_bar, double sigma_o,
                         const std::vector<double>& h_bar_norms) {
  if (gammas.size() < h_bar_norms.size() + 1) throw DimensionError("need gamma_{t+1} for every history entry");
  Lemma1Bound out;
  out.bound.assign(h_bar_norms.size() + 1, 0.0);
  const double q = 1.0 - rho_bar / 2.0;
  out.binding = true;
  for (std::size_t t = 0; t < h_bar_norms.size(); ++t) {
    const double g = gammas[t + 1];
    if (sigma_o > 0 && g > rho_bar / (2.0 * sigma_o)) out.binding = false;
    out.bound[t + 1] = q * out.bound[t] + sigma_o * g * (1.0 + h_bar_norms[t]);
  }
  return out;
}

Lemma5Result lemma5_check(const std::vector<double>& a, double rho, long T) {
  if (T < 0 || static_cast<long>(a.size()) < T + 1) throw DimensionError("sequence shorter than T + 1");
  Lemma5Result r;
  CompensatedSum<> lhs, sq;
  double inner = 0;
  for (long t = 0; t <= T; ++t) {
    inner = (1.0 - rho) * inner + a[t];
    lhs += inner * inner;
    sq += a[t] * a[t];
  }
  r.lhs = lhs.value();
  r.rhs = (2.0 / rho) * sq.value();
  r.holds = r.lhs <= r.rhs;
  return r;
}

namespace {

CheckOutcome named(const char* name) {
  CheckOutcome c;
  c.name = name;
  return c;
}

// Two-sided 95% Student t quantiles for df = 1..30.
double t_quantile_975(int df) {
  static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                 2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                 2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df < 1) return std::numeric_limits<double>::infinity();
  return df <= 30 ? table[df - 1] : 1.96;
}

}  // namespace

RateFit rate_fit(const std::vector<double>& T_grid, const std::vector<double>& values) {
  if (T_grid.size() != values.size()) throw FitError("grid and values differ in length");
  if (T_grid.size() < 3) throw FitError("at least three grid points are required");
  RateFit fit;
  fit.T_grid = T_grid;
  fit.values = values;
  const std::size_t k = T_grid.size();
  Matrix X(k, 2);
  Vector y(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(values[i] > 0) || !std::isfinite(values[i])) throw FitError("values must be positive and finite");
    if (!(T_grid[i] > 1)) throw FitError("grid points must exceed 1");
    X(i, 0) = 1.0;
    X(i, 1) = std::log(T_grid[i]);
    y(i) = std::log(values[i]);
    fit.log_profile.push_back(values[i] * std::sqrt(T_grid[i]) / std::log(T_grid[i]));
  }
  const Vector beta = X.colPivHouseholderQr().solve(y);
  fit.intercept = beta(0);
  fit.slope = beta(1);
  if (!std::isfinite(fit.slope)) throw FitError("slope is not finite");
  const Vector resid = y - X * beta;
  const double mean_x = X.col(1).mean();
  const double sxx = (X.col(1).array() - mean_x).square().sum();
  if (k > 2 && sxx > 0) {
    const double s2 = resid.squaredNorm() / static_cast<double>(k - 2);
    fit.half_width = t_quantile_975(static_cast<int>(k - 2)) * std::sqrt(s2 / sxx);
  }
  return fit;
}

bool VerificationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.pass || !c.binding; });
}

std::string VerificationReport::summary() const {
  std::ostringstream out;
  out.precision(6);
  for (const auto& c : checks) {
    const char* tag = !c.binding ? "NON-BINDING" : (c.pass ? "PASS" : "FAIL");
    out << "[" << tag << "] " << c.name << "  margin=" << c.margin;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << "\n";
  }
  out << (passed() ? "verdict: PASS" : "verdict: FAIL") << "\n";
  return out.str();
}

VerificationReport verify_trajectory(const TrajectoryRecord& record, const ConstantsBundle& constants,
                                     const BoundCertificate& certificate, const EnsembleResult* ensemble,
                                     const VerifyOptions& options) {
  std::vector<std::string> missing;
  if (record.rows.empty()) missing.emplace_back("rows");
  bool has_dev = !record.rows.empty(), has_diag = !record.rows.empty();
  for (const auto& row : record.rows) {
    if (static_cast<int>(row.dev.size()) != record.agents) has_dev = false;
    if (std::isnan(row.e0) || std::isnan(row.e1) || std::isnan(row.res_c) || std::isnan(row.res_o) ||
        std::isnan(row.res_d))
      has_diag = false;
  }
  if (!has_dev) missing.emplace_back("dev_1..dev_n");
  if (!has_diag)
    for (const char* name : {"e0", "e1", "res_c", "res_o", "res_d"}) missing.emplace_back(name);
  const auto absent = constants.missing();
  for (const char* name : {"sigma_o", "sigma_h", "L_h", "rho_bar"})
    if (std::find(absent.begin(), absent.end(), name) != absent.end())
      missing.emplace_back(std::string("constant ") + name);
  if (!missing.empty()) {
    std::string msg = "record lacks required columns:";
    for (const auto& m : missing) msg += " " + m;
    throw ReportError(msg);
  }

  const double so = constants.sigma_o->value, sh = constants.sigma_h->value;
  const double Lh = constants.L_h->value, rho = constants.rho_bar->value;
  const int n = record.agents;
  VerificationReport rep;
  constexpr double kRel = 1e-9;

  {
    CheckOutcome c = named("pathwise consensus bound");
    const bool contiguous = static_cast<long>(record.rows.size()) == record.horizon + 1;
    const bool equal_init = record.rows.front().cons_err <= 1e-12;
    if (!options.static_mixing || !contiguous || !equal_init) {
      c.binding = false;
      c.detail = !options.static_mixing ? "time-varying mixing" : (!contiguous ? "rows are not contiguous" : "unequal initialization");
    } else {
      std::vector<double> gammas(record.rows.size() + 1, 0.0), hn;
      for (std::size_t s = 0; s < record.rows.size(); ++s) {
        gammas[s + 1] = record.rows[s].gamma;
        hn.push_back(std::sqrt(record.rows[s].h_bar_sq));
      }
      const Lemma1Bound b = lemma1_bound(gammas, rho, so, hn);
      c.binding = b.binding;
      if (!b.binding) c.detail = "step size exceeds rho_bar/(2 sigma_o)";
      c.margin = std::numeric_limits<double>::infinity();
      int violations = 0;
      for (std::size_t t = 1; t < record.rows.size(); ++t) {
        const double m = b.bound[t] - record.rows[t].cons_err;
        c.margin = std::min(c.margin, m);
        if (m < -kRel * (1 + b.bound[t])) ++violations;
      }
      if (record.rows.size() == 1) c.margin = 0;
      c.pass = violations == 0;
      if (violations) c.detail = std::to_string(violations) + " violations";
    }
    rep.checks.push_back(c);
  }

  CheckOutcome e0 = named("|e0| <= sigma_h"), e1 = named("|e1| <= (L_h/n)|theta_tilde_o|");
  CheckOutcome rc = named("consensual recursion residual"), ro = named("error recursion residual"), rd = named("decomposition residual");
  CheckOutcome dc = named("|theta_tilde_o|^2 = sum_i |theta_i - theta_bar_c|^2");
  CheckOutcome mx = named("max_i |theta_i - theta_bar_c| <= |theta_tilde_o|");
  for (auto* c : {&e0, &e1, &rc, &ro, &rd, &dc, &mx}) c->margin = std::numeric_limits<double>::infinity();
  int n_e0 = 0, n_e1 = 0, n_rc = 0, n_ro = 0, n_rd = 0, n_dc = 0, n_mx = 0;
  for (const auto& row : record.rows) {
    const double m0 = sh - row.e0;
    e0.margin = std::min(e0.margin, m0);
    n_e0 += m0 < -kRel * (1 + sh);
    const double lim1 = Lh / n * row.cons_err;
    const double m1 = lim1 - row.e1;
    e1.margin = std::min(e1.margin, m1);
    n_e1 += m1 < -kRel * (1 + lim1);
    rc.margin = std::min(rc.margin, options.residual_tol - row.res_c);
    n_rc += row.res_c > options.residual_tol;
    ro.margin = std::min(ro.margin, options.residual_tol - row.res_o);
    n_ro += row.res_o > options.residual_tol;
    rd.margin = std::min(rd.margin, options.residual_tol - row.res_d);
    n_rd += row.res_d > options.residual_tol;
    double sq = 0, mdev = 0;
    for (double v : row.dev) {
      sq += v * v;
      mdev = std::max(mdev, v);
    }
    const double tol = 1e-10 * std::max(1.0, sq);
    const double md = tol - std::abs(row.cons_err * row.cons_err - sq);
    dc.margin = std::min(dc.margin, md);
    n_dc += md < 0;
    const double mm = row.cons_err - mdev;
    mx.margin = std::min(mx.margin, mm);
    n_mx += mm < -1e-12 * (1 + row.cons_err);
  }
  auto finish = [&](CheckOutcome& c, int v) {
    c.pass = v == 0;
    if (v) c.detail = std::to_string(v) + " of " + std::to_string(record.rows.size()) + " rows violate";
    rep.checks.push_back(c);
  };
  finish(e0, n_e0);
  finish(e1, n_e1);
  finish(rc, n_rc);
  finish(ro, n_ro);
  finish(rd, n_rd);
  finish(dc, n_dc);
  finish(mx, n_mx);

  if (ensemble) {
    CheckOutcome mf = named("E|h_bar(theta_bar_c^tau)|^2 <= rhs_meanfield");
    mf.binding = certificate.binding;
    mf.margin = certificate.rhs_meanfield - ensemble->h_bar_sq.mean;
    mf.pass = mf.margin >= -2.0 * ensemble->h_bar_sq.se;
    if (!mf.binding) mf.detail = "step-size ceiling not satisfied";
    rep.checks.push_back(mf);
    CheckOutcome cs = named("max_i E|theta_i^tau - theta_bar_c^tau| <= rhs_consensus");
    cs.binding = certificate.binding;
    cs.margin = certificate.rhs_consensus - ensemble->max_agent_dev.mean;
    cs.pass = cs.margin >= -2.0 * ensemble->max_agent_dev.se;
    if (!cs.binding) cs.detail = "step-size ceiling not satisfied";
    rep.checks.push_back(cs);
  }
  return rep;
}

}  // namespace dsa
