#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dsa {

/// Where a constant came from.
enum class Provenance {
  Analytic,  ///< closed form, valid for every parameter value
  Sampled,   ///< supremum certified only on the sampling grid (a lower bound of the true sup)
  Schedule,  ///< derived from the step-size schedule
  Network,   ///< derived from the mixing schedule / agent count
};

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct Constant {
  double value = 0;
  Provenance provenance = Provenance::Sampled;
};

/// Problem, network and schedule constants consumed by the bound calculator.
struct ConstantsBundle {
  std::optional<Constant> c0, d0;        // bias of the mean field
  std::optional<Constant> sigma_o;       // heterogeneity
  std::optional<Constant> sigma_h;       // mean-field noise
  std::optional<Constant> L_h, L_V;      // Lipschitz / smoothness
  std::optional<Constant> K_P;           // bound on the averaged P H_hat
  std::optional<Constant> L_h_bar;       // Lipschitz constant of P H_hat
  std::optional<Constant> a_hat;         // 0 <= g_t - g_{t+1} <= a_hat g_t^2
  std::optional<Constant> a_ratio;       // sup_t g_t / g_{t+1}
  std::optional<Constant> rho_bar;       // mixing contraction
  std::optional<Constant> n_agents;
  std::optional<Constant> V_star;        // minimum of the potential

  /// Names of absent fields, in declaration order.
  std::vector<std::string> missing() const;
  /// Throws IncompleteConstantsError listing every absent field.
  void require_complete() const;
  /// Informational observations (e.g. c0 > sqrt(d0), which Cauchy–Schwarz forbids).
  std::vector<std::string> notes;
};

/// Markov-noise constants and the totals built from them.
struct MarkovConstants {
  double E0 = 0;
  double C0mk = 0, C1mk = 0, C2mk = 0;
  double Ctilde_mk = 0;  // C2mk + E0 + d0/2 + L_V
  double Cbar_mk = 0;    // C1mk + E0 + sigma_h^2 L_V
};

/// `gamma1` and `grad0` only enter C0mk.
MarkovConstants markov_constants(const ConstantsBundle& c, double gamma1, double grad0);

/// Ceiling min{1, rho_bar/(2 sigma_o), c0/(2 Ctilde_mk)} on every step size.
double step_cap(const ConstantsBundle& c);

}  // namespace dsa
