#include "dsa/constants.hpp"

#include "dsa/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsa {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Analytic: return "analytic";
    case Provenance::Sampled: return "sampled";
    case Provenance::Schedule: return "schedule";
    case Provenance::Network: return "network";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "analytic") return Provenance::Analytic;
  if (s == "sampled") return Provenance::Sampled;
  if (s == "schedule") return Provenance::Schedule;
  if (s == "network") return Provenance::Network;
  throw ValidationError("unknown provenance '" + s + "'");
}

std::vector<std::string> ConstantsBundle::missing() const {
  std::vector<std::string> out;
  auto check = [&](const std::optional<Constant>& c, const char* name) {
    if (!c) out.emplace_back(name);
  };
  check(c0, "c0");
  check(d0, "d0");
  check(sigma_o, "sigma_o");
  check(sigma_h, "sigma_h");
  check(L_h, "L_h");
  check(L_V, "L_V");
  check(K_P, "K_P");
  check(L_h_bar, "L_h_bar");
  check(a_hat, "a_hat");
  check(a_ratio, "a_ratio");
  check(rho_bar, "rho_bar");
  check(n_agents, "n_agents");
  check(V_star, "V_star");
  return out;
}

void ConstantsBundle::require_complete() const {
  const auto absent = missing();
  if (absent.empty()) return;
  std::string msg = "incomplete constants bundle; missing:";
  for (const auto& name : absent) msg += " " + name;
  throw IncompleteConstantsError(msg);
}

MarkovConstants markov_constants(const ConstantsBundle& c, double gamma1, double grad0) {
  c.require_complete();
  const double d0s = std::sqrt(c.d0->value);
  const double so = c.sigma_o->value, sh = c.sigma_h->value;
  const double Lh = c.L_h->value, LV = c.L_V->value, KP = c.K_P->value, Lhb = c.L_h_bar->value;
  const double ah = c.a_hat->value, ar = c.a_ratio->value;
  const double rho = c.rho_bar->value, n = c.n_agents->value;

  MarkovConstants m;
  m.E0 = 12.0 * so * so * Lh * Lh / (rho * n * n);
  m.C0mk = KP * (d0s / 2.0 + gamma1 * grad0);
  m.C1mk = KP * LV * (rho * n * (1.0 + 2.0 * sh) + Lh * (1.0 + 4.0 * so * so)) / (2.0 * rho * n) +
           d0s * (Lhb * sh * sh + Lhb * 4.0 * so * so / rho + KP * ah);
  m.C2mk = d0s * Lhb * (2.0 + Lh / (2.0 * n) + 4.0 * so * so / rho) + KP * d0s / 2.0 +
           KP * (ah * ar * ar * d0s + LV * (rho * n + 4.0 * Lh * so * so) / (2.0 * rho * n));
  m.Ctilde_mk = m.C2mk + m.E0 + c.d0->value / 2.0 + LV;
  m.Cbar_mk = m.C1mk + m.E0 + sh * sh * LV;
  return m;
}

double step_cap(const ConstantsBundle& c) {
  const auto m = markov_constants(c, 0.0, 0.0);  // C0mk does not enter the cap
  double cap = 1.0;
  if (c.sigma_o->value > 0) cap = std::min(cap, c.rho_bar->value / (2.0 * c.sigma_o->value));
  if (m.Ctilde_mk > 0)
    cap = std::min(cap, c.c0->value / (2.0 * m.Ctilde_mk));
  else if (c.c0->value <= 0)
    cap = std::min(cap, 0.0);
  return cap;
}

}  // namespace dsa
