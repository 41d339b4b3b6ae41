#include "dsa/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dsa {

namespace {

void put(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  line += buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, long line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ValidationError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

const char* const kDiagColumns[] = {"e0", "e1", "res_c", "res_o", "res_d"};

}  // namespace

void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& record) {
  std::string header = "t,gamma,h_bar_sq,grad_sq,cons_err,V";
  if (record.diagnostics)
    for (const char* c : kDiagColumns) header += std::string(",") + c;
  header += ",max_dev";
  for (int i = 1; i <= record.agents; ++i) header += ",dev_" + std::to_string(i);
  out << header << "\n";
  std::string line;
  for (const auto& r : record.rows) {
    line = std::to_string(r.t);
    for (double v : {r.gamma, r.h_bar_sq, r.grad_sq, r.cons_err, r.potential}) {
      line += ',';
      put(line, v);
    }
    if (record.diagnostics)
      for (double v : {r.e0, r.e1, r.res_c, r.res_o, r.res_d}) {
        line += ',';
        put(line, v);
      }
    line += ',';
    put(line, r.max_dev);
    for (double v : r.dev) {
      line += ',';
      put(line, v);
    }
    out << line << "\n";
  }
}

TrajectoryRecord read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ReportError("empty trajectory file");
  const auto header = split(line);
  auto find = [&](const std::string& name) -> int {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return static_cast<int>(k);
    return -1;
  };
  std::vector<std::string> missing;
  for (const char* c : {"t", "gamma", "h_bar_sq", "grad_sq", "cons_err", "V", "max_dev"})
    if (find(c) < 0) missing.emplace_back(c);
  if (!missing.empty()) {
    std::string msg = "trajectory file lacks columns:";
    for (const auto& m : missing) msg += " " + m;
    throw ReportError(msg);
  }
  TrajectoryRecord rec;
  rec.diagnostics = find("e0") >= 0;
  std::vector<int> dev_cols;
  for (int i = 1; find("dev_" + std::to_string(i)) >= 0; ++i) dev_cols.push_back(find("dev_" + std::to_string(i)));
  rec.agents = static_cast<int>(dev_cols.size());
  int diag[5];
  for (int k = 0; k < 5; ++k) diag[k] = find(kDiagColumns[k]);

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ReportError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " cells");
    auto get = [&](int col) { return parse_double(cells[col], line_no); };
    TrajectoryRow r;
    r.t = static_cast<long>(get(find("t")));
    r.gamma = get(find("gamma"));
    r.h_bar_sq = get(find("h_bar_sq"));
    r.grad_sq = get(find("grad_sq"));
    r.cons_err = get(find("cons_err"));
    r.potential = get(find("V"));
    r.max_dev = get(find("max_dev"));
    if (rec.diagnostics) {
      double* slots[] = {&r.e0, &r.e1, &r.res_c, &r.res_o, &r.res_d};
      for (int k = 0; k < 5; ++k)
        if (diag[k] >= 0) *slots[k] = get(diag[k]);
    }
    for (int c : dev_cols) r.dev.push_back(get(c));
    rec.rows.push_back(std::move(r));
  }
  if (!rec.rows.empty()) rec.horizon = rec.rows.back().t;
  return rec;
}

TrajectoryRecord load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot open " + path);
  return read_trajectory_csv(in);
}

Json to_json(const ConstantsBundle& c) {
  Json j = Json::object();
  auto add = [&](const char* name, const std::optional<Constant>& v) {
    if (v) j[name] = {{"value", v->value}, {"provenance", to_string(v->provenance)}};
  };
  add("c0", c.c0);
  add("d0", c.d0);
  add("sigma_o", c.sigma_o);
  add("sigma_h", c.sigma_h);
  add("L_h", c.L_h);
  add("L_V", c.L_V);
  add("K_P", c.K_P);
  add("L_h_bar", c.L_h_bar);
  add("a_hat", c.a_hat);
  add("a_ratio", c.a_ratio);
  add("rho_bar", c.rho_bar);
  add("n_agents", c.n_agents);
  add("V_star", c.V_star);
  if (!c.notes.empty()) j["notes"] = c.notes;
  return j;
}

ConstantsBundle constants_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("constants must be a JSON object");
  ConstantsBundle c;
  std::optional<Constant>* slots[] = {&c.c0,      &c.d0,    &c.sigma_o, &c.sigma_h,  &c.L_h,
                                      &c.L_V,     &c.K_P,   &c.L_h_bar, &c.a_hat,    &c.a_ratio,
                                      &c.rho_bar, &c.n_agents, &c.V_star};
  const char* names[] = {"c0",  "d0",      "sigma_o", "sigma_h", "L_h",      "L_V",   "K_P",
                         "L_h_bar", "a_hat", "a_ratio", "rho_bar", "n_agents", "V_star"};
  for (std::size_t k = 0; k < std::size(names); ++k) {
    if (!j.contains(names[k])) continue;
    const Json& v = j.at(names[k]);
    Constant out;
    if (v.is_number()) {
      out.value = v.get<double>();
    } else if (v.is_object() && v.contains("value") && v.at("value").is_number()) {
      out.value = v.at("value").get<double>();
      if (v.contains("provenance")) out.provenance = provenance_from_string(v.at("provenance").get<std::string>());
    } else {
      throw ValidationError(std::string("constant '") + names[k] + "' must be a number or {value, provenance}");
    }
    *slots[k] = out;
  }
  if (j.contains("notes")) c.notes = j.at("notes").get<std::vector<std::string>>();
  return c;
}

Json to_json(const BoundCertificate& cert) {
  return Json{{"T", cert.T},
              {"V0", cert.V0},
              {"grad0", cert.grad0},
              {"E0", cert.mk.E0},
              {"C0mk", cert.mk.C0mk},
              {"C1mk", cert.mk.C1mk},
              {"C2mk", cert.mk.C2mk},
              {"Ctilde_mk", cert.mk.Ctilde_mk},
              {"Cbar_mk", cert.mk.Cbar_mk},
              {"sum_gamma", cert.sum_gamma},
              {"sum_gamma_sq", cert.sum_gamma_sq},
              {"C_tot", cert.C_tot},
              {"rhs_meanfield", cert.rhs_meanfield},
              {"rhs_consensus", cert.rhs_consensus},
              {"step_cap", cert.cap},
              {"status", cert.binding ? "BINDING" : "NON-BINDING"}};
}

Json to_json(const MeanSe& m) { return Json{{"mean", m.mean}, {"se", m.se}}; }

Json to_json(const StepSchedule& s) {
  Json j{{"a0", s.a0},
         {"a1", s.constant() ? Json("inf") : Json(s.a1)},
         {"T", s.horizon},
         {"a_hat", s.a_hat},
         {"a_ratio", s.a_ratio},
         {"gamma_1", s.gammas.size() > 1 ? s.gammas[1] : 0.0},
         {"max_gamma", s.max_gamma()}};
  j["cap"] = s.cap ? Json(*s.cap) : Json(nullptr);
  j["cap_binds"] = s.cap_binds;
  j["warnings"] = s.warnings;
  return j;
}

Json to_json(const EnsembleResult& e) {
  Json j;
  j["T"] = e.T;
  j["runs"] = e.runs;
  j["master_seed"] = e.master_seed;
  Json runs = Json::array();
  std::size_t next = 0;
  for (int k = 0; k < e.runs; ++k) {
    Json r{{"run", k}, {"seed", run_seed(e.master_seed, k)}, {"status", e.status[k]}};
    if (e.status[k] == "ok" && next < e.records.size()) r["tau"] = e.records[next++].tau;
    runs.push_back(r);
  }
  j["per_run"] = runs;
  Json dev = Json::array();
  for (const auto& m : e.agent_dev) dev.push_back(to_json(m));
  j["tau_expectation"] = {{"h_bar_sq", to_json(e.h_bar_sq)},
                          {"grad_sq", to_json(e.grad_sq)},
                          {"cons_err", to_json(e.cons_err)},
                          {"agent_dev", dev},
                          {"max_agent_dev", to_json(e.max_agent_dev)}};
  j["tau_sampled"] = {{"h_bar_sq", to_json(e.sampled_h_bar_sq)},
                      {"grad_sq", to_json(e.sampled_grad_sq)},
                      {"cons_err", to_json(e.sampled_cons_err)}};
  Json cps = Json::array();
  for (const auto& c : e.checkpoints)
    cps.push_back({{"t", c.t},
                   {"h_bar_sq", to_json(c.h_bar_sq)},
                   {"grad_sq", to_json(c.grad_sq)},
                   {"cons_err", to_json(c.cons_err)},
                   {"max_dev", to_json(c.max_dev)}});
  j["checkpoints"] = cps;
  return j;
}

Json to_json(const VerificationReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"status", !c.binding ? "NON-BINDING" : (c.pass ? "PASS" : "FAIL")},
                      {"margin", c.margin},
                      {"detail", c.detail}});
  return Json{{"passed", r.passed()}, {"checks", checks}};
}

Json to_json(const RateFit& f) {
  return Json{{"T_grid", f.T_grid},   {"values", f.values},       {"slope", f.slope},
              {"intercept", f.intercept}, {"half_width", f.half_width}, {"log_profile", f.log_profile}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dsa
