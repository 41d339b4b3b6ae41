#include "dsa/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <limits>

int main(int argc, char** argv) {
  CLI::App app{"dsalab: decentralized stochastic approximation lab"};
  app.require_subcommand(1);

  std::string config, run_dir, constants_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool diagnostics = false;
  dsa::BoundParams bound;
  std::string a1_text = "1";
  double V0 = 0, grad0 = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--diagnostics", diagnostics, "record e0/e1 and recursion residuals");
  };
  auto* validate = app.add_subcommand("validate", "certify the assumptions for a config");
  add_common(validate);
  auto* run = app.add_subcommand("run", "run an ensemble and write its outputs");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "run ensembles over schedule.T_grid and fit rates");
  add_common(sweep);

  auto* verify = app.add_subcommand("verify", "check a run directory against the certificate");
  verify->add_option("--out,dir", run_dir, "run directory")->required();

  auto* bnd = app.add_subcommand("bound", "print the certificate for a constants file");
  bnd->add_option("--constants", constants_path, "constants JSON")->required();
  bnd->add_option("--a0", bound.a0, "step-size scale");
  bnd->add_option("--a1", a1_text, "step-size offset, or 'inf' for a constant step");
  bnd->add_option("--T", bound.T, "horizon");
  bnd->add_flag("--clip", bound.clip, "clip the schedule at the step-size ceiling");
  auto* v0_opt = bnd->add_option("--V0", V0, "V at the initial consensual point");
  auto* g0_opt = bnd->add_option("--grad0", grad0, "|grad V| at the initial consensual point");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? dsa::kExitOk : dsa::kExitInput;
  }

  dsa::CliOptions opts;
  if (!out_dir.empty()) opts.out = out_dir;
  if (validate->count("--seed") + run->count("--seed") + sweep->count("--seed") > 0) opts.seed = seed;
  opts.jobs = jobs;
  opts.diagnostics = diagnostics;

  if (*validate) return dsa::cmd_validate(config, opts, std::cout, std::cerr);
  if (*run) return dsa::cmd_run(config, opts, std::cout, std::cerr);
  if (*sweep) return dsa::cmd_sweep(config, opts, std::cout, std::cerr);
  if (*verify) return dsa::cmd_verify(run_dir, std::cout, std::cerr);
  if (*bnd) {
    if (a1_text == "inf") {
      bound.a1 = std::numeric_limits<double>::infinity();
    } else {
      try {
        bound.a1 = std::stod(a1_text);
      } catch (const std::exception&) {
        std::cerr << "input error: --a1 must be a number or 'inf'\n";
        return dsa::kExitInput;
      }
    }
    if (v0_opt->count()) bound.V0 = V0;
    if (g0_opt->count()) bound.grad0 = grad0;
    return dsa::cmd_bound(constants_path, bound, std::cout, std::cerr);
  }
  return dsa::kExitInput;
}
