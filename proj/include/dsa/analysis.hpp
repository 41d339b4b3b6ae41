#pragma once

#include "dsa/common.hpp"
#include "dsa/constants.hpp"
#include "dsa/engine.hpp"

#include <string>
#include <vector>

namespace dsa {

struct BoundCertificate {
  long T = 0;
  double V0 = 0, grad0 = 0;
  MarkovConstants mk;          // E0, C0mk, C1mk, C2mk, Ctilde_mk, Cbar_mk
  double sum_gamma = 0;        // sum_{t=0}^T gamma_{t+1}
  double sum_gamma_sq = 0;     // sum_{t=0}^T gamma_{t+1}^2
  double C_tot = 0;
  double rhs_meanfield = 0;
  double rhs_consensus = 0;
  double cap = 0;              // min{1, rho_bar/(2 sigma_o), c0/(2 Ctilde_mk)}
  bool binding = false;        // every step of the schedule respects `cap`
};

/// a_hat / a_ratio missing from `constants` are taken from `steps`.
BoundCertificate compute_certificate(const ConstantsBundle& constants, const StepSchedule& steps, long T, double V0,
                                     double grad0);

struct Lemma1Bound {
  std::vector<double> bound;  // bound[t] for t = 0..T+1, bound[0] = 0
  bool binding = false;       // gamma_t <= rho_bar / (2 sigma_o) on the whole range
};

/// `gammas[t]` = gamma_t (t = 0..T+1); `h_bar_norms[s]` = |h_bar(theta_bar_c^(s))| (s = 0..T).
Lemma1Bound lemma1_bound(const std::vector<double>& gammas, double rho_bar, double sigma_o,
                         const std::vector<double>& h_bar_norms);

struct Lemma5Result {
  double lhs = 0;
  double rhs = 0;
  bool holds = true;
};

/// lhs = sum_{t<=T} (sum_{s<=t} a_s (1-rho)^{t-s})^2, rhs = (2/rho) sum_{t<=T} a_t^2.
Lemma5Result lemma5_check(const std::vector<double>& a, double rho, long T);

struct RateFit {
  std::vector<double> T_grid;
  std::vector<double> values;
  double slope = 0;
  double intercept = 0;
  double half_width = 0;            // 95% confidence half-width of the slope
  std::vector<double> log_profile;  // value * sqrt(T) / log(T) per point
};

RateFit rate_fit(const std::vector<double>& T_grid, const std::vector<double>& values);

struct CheckOutcome {
  std::string name;
  bool pass = true;
  bool binding = true;  // false: precondition not met, reported for information only
  double margin = 0;    // smallest (allowed - observed); negative on failure
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckOutcome> checks;
  /// Every binding check passed.
  bool passed() const;
  std::string summary() const;
};

struct VerifyOptions {
  bool static_mixing = true;
  double residual_tol = 1e-10;
};

/// Pathwise consensus bound, |e0| <= sigma_h, |e1| <= (L_h/n)|theta_tilde_o|, recursion residuals,
/// decomposition consistency and, with an ensemble, both right-hand sides of the rate bound.
VerificationReport verify_trajectory(const TrajectoryRecord& record, const ConstantsBundle& constants,
                                     const BoundCertificate& certificate, const EnsembleResult* ensemble = nullptr,
                                     const VerifyOptions& options = {});

}  // namespace dsa
