#include "dsa/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace dsa {

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  if (values.empty()) return out;
  CompensatedSum<> s;
  for (double v : values) s += v;
  out.mean = s.value() / values.size();
  if (values.size() < 2) return out;
  // shifted by the first value, so identical inputs give exactly zero
  const double shift = values.front();
  CompensatedSum<> d, dd;
  for (double v : values) {
    d += v - shift;
    dd += (v - shift) * (v - shift);
  }
  const double k = static_cast<double>(values.size());
  const double ss = std::max(0.0, dd.value() - d.value() * d.value() / k);
  out.se = std::sqrt(ss / (k - 1) / k);
  return out;
}

bool EnsembleResult::all_ok() const {
  return std::all_of(status.begin(), status.end(), [](const std::string& s) { return s == "ok"; });
}

EnsembleResult run_ensemble(const EnsembleSpec& spec, int n_runs, std::uint64_t master_seed, int jobs) {
  if (!spec.oracle || !spec.mixing || !spec.steps) throw ConfigError("ensemble spec is incomplete");
  if (n_runs < 1) throw ConfigError("at least one run is required");
  jobs = std::clamp(jobs, 1, n_runs);

  RecordOptions options = spec.record;
  for (long t : spec.checkpoints)
    if (t >= 0 && t <= spec.T) options.always_record.push_back(t);

  std::vector<std::optional<TrajectoryRecord>> slots(n_runs);
  std::vector<std::string> status(n_runs, "ok");
  std::vector<std::exception_ptr> fatal(n_runs);
  std::atomic<int> next{0};

  auto worker = [&] {
    for (int k = next++; k < n_runs; k = next++) {
      try {
        slots[k] = run_dsa(*spec.oracle, *spec.mixing, *spec.steps, spec.T, run_seed(master_seed, k), options);
      } catch (const DivergenceError& e) {
        status[k] = std::string("diverged: ") + e.what();
      } catch (...) {
        fatal[k] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : fatal)
    if (e) std::rethrow_exception(e);

  EnsembleResult res;
  res.T = spec.T;
  res.runs = n_runs;
  res.master_seed = master_seed;
  res.status = std::move(status);
  for (auto& s : slots)
    if (s) res.records.push_back(std::move(*s));
  if (res.records.empty()) return res;

  const int n = res.records.front().agents;
  std::vector<double> hb, gr, ce, shb, sgr, sce;
  std::vector<std::vector<double>> dev(n);
  for (const auto& r : res.records) {
    res.taus.push_back(r.tau);
    hb.push_back(r.weighted.h_bar_sq);
    gr.push_back(r.weighted.grad_sq);
    ce.push_back(r.weighted.cons_err);
    for (int i = 0; i < n; ++i) dev[i].push_back(r.weighted.dev[i]);
    shb.push_back(r.at_tau.h_bar_sq);
    sgr.push_back(r.at_tau.grad_sq);
    sce.push_back(r.at_tau.cons_err);
  }
  res.h_bar_sq = mean_se(hb);
  res.grad_sq = mean_se(gr);
  res.cons_err = mean_se(ce);
  res.sampled_h_bar_sq = mean_se(shb);
  res.sampled_grad_sq = mean_se(sgr);
  res.sampled_cons_err = mean_se(sce);
  for (int i = 0; i < n; ++i) {
    res.agent_dev.push_back(mean_se(dev[i]));
    if (i == 0 || res.agent_dev[i].mean > res.max_agent_dev.mean) res.max_agent_dev = res.agent_dev[i];
  }

  std::vector<long> cps = spec.checkpoints;
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  for (long t : cps) {
    if (t < 0 || t > spec.T) continue;
    std::vector<double> a, b, c, m;
    for (const auto& r : res.records) {
      auto it = std::lower_bound(r.rows.begin(), r.rows.end(), t,
                                 [](const TrajectoryRow& row, long v) { return row.t < v; });
      if (it == r.rows.end() || it->t != t) continue;
      a.push_back(it->h_bar_sq);
      b.push_back(it->grad_sq);
      c.push_back(it->cons_err);
      m.push_back(it->max_dev);
    }
    res.checkpoints.push_back({t, mean_se(a), mean_se(b), mean_se(c), mean_se(m)});
  }
  return res;
}

}  // namespace dsa
