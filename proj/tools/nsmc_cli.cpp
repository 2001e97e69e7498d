// nsmc_cli: simulate datasets, run replicated filter experiments, evaluate the
// asymptotic variance formulas and run the built-in self-checks.
//
// Exit codes: 0 success, 1 runtime failure (including failed replicates or
// self-checks), 2 usage or configuration error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsmc/asymptotics.hpp"
#include "nsmc/exact.hpp"
#include "nsmc/experiment.hpp"
#include "nsmc/io.hpp"
#include "nsmc/oracle.hpp"
#include "nsmc/selftest.hpp"

namespace fs = std::filesystem;
using namespace nsmc;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::vector<double> grid{2, 5, 10, 100, 1e9};
  std::optional<std::size_t> horizon;
  std::size_t component = 1;
  std::string quadrature = "closed-form";
  std::size_t selftest_replicates = 20000;
};

fs::path config_dir(const std::string& config) { return fs::path(config).parent_path(); }

int cmd_simulate(const Options& o) {
  auto c = load_config(o.config);
  if (o.seed) c.data = {o.seed, std::nullopt};
  if (!c.data.seed) throw InvalidParameter("simulate: the config has no data.seed; pass --seed");
  const auto data = simulate_dataset(c.model, *c.data.seed);
  const fs::path out = o.out.empty() ? fs::path(c.name + ".csv") : fs::path(o.out);
  write_dataset(out, data, meta_of(c.model, *c.data.seed));
  if (o.verbose) std::cerr << "wrote " << out << " and " << meta_path_for(out) << '\n';
  return 0;
}

int cmd_run(const Options& o) {
  const auto c = load_config(o.config);
  const fs::path out = o.out.empty() ? fs::path(c.output_dir) : fs::path(o.out);
  const auto status = run_experiment(c, out, config_dir(o.config), o.workers, o.verbose ? &std::cerr : nullptr);
  if (status.failures > 0)
    std::cerr << status.failures << " replicate(s) failed; see rows with quantity 'failed' in " << (out / "results.csv")
              << '\n';
  if (o.verbose) std::cerr << "outputs in " << out << '\n';
  return status.exit_code;
}

int cmd_asymptotics(const Options& o) {
  const auto c = load_config(o.config);
  if (c.model.kind != "independent")
    throw InvalidParameter("asymptotics: needs model.kind = independent (the formulas assume independent components)");
  const auto data = load_experiment_data(c, config_dir(o.config));
  const std::size_t t = o.horizon.value_or(c.model.T);
  if (t < 1 || t > data.T) throw InvalidParameter("asymptotics: --t must lie in [1, T]");
  if (o.component < 1 || o.component > data.n_x) throw InvalidParameter("asymptotics: --component out of range");
  std::vector<double> y(t);
  for (std::size_t s = 1; s <= t; ++s) y[s - 1] = data.y(s)[o.component - 1];
  QuadratureSpec q;
  if (o.quadrature == "gauss-hermite") q.method = QuadratureMethod::gauss_hermite;
  else if (o.quadrature != "closed-form") throw InvalidParameter("asymptotics: --quadrature closed-form|gauss-hermite");
  const ScalarLgss scalar{c.model.init_mean, c.model.init_var, c.model.a_coef, 1.0 / c.model.tau, c.model.obs_var};
  const auto k = compute_constants(scalar, y, t, q);
  const auto curve = variance_curve(k, c.model.n_x, o.grid);
  if (o.out.empty()) {
    write_variance_curve(std::cout, curve);
  } else {
    std::ofstream os(o.out);
    if (!os) throw Error("cannot write " + o.out);
    write_variance_curve(os, curve);
  }
  return 0;
}

bool report(bool pass, const std::string& what) {
  std::cout << (pass ? "PASS " : "FAIL ") << what << '\n';
  return pass;
}

int cmd_selftest(const Options& o) {
  bool ok = true;

  // Kalman filter against the dense joint posterior.
  {
    const auto spec = make_stssm(3, 0.6, 1.0, 0.8, 0.5);
    const auto data = simulate(spec, 3, 11);
    const auto kf = kalman_filter(StssmModel(spec), data);
    const auto post = oracle::DenseLgss::from(spec).posterior(data, 3);
    const double rel = std::abs(kf.log_z() - post.log_evidence) / std::abs(post.log_evidence);
    ok &= report(rel < 1e-8, "kalman log-likelihood vs dense oracle (rel err " + format_double(rel) + ")");
  }

  // Exact one-step evidence against the dense oracle.
  {
    const ProperWeightingCase c;
    const auto cache = ffbs_forward(c.spec, c.x_prev, c.y);
    const auto ref = oracle::one_step(c.spec, c.x_prev, c.y, c.t);
    const double rel = std::abs(cache.log_nu - ref.log_evidence) / std::abs(ref.log_evidence);
    ok &= report(rel < 1e-8, "forward-filtering evidence vs dense oracle (rel err " + format_double(rel) + ")");
  }

  // Proper weighting of every inner procedure.
  std::vector<ProperWeightingProcedure> procs;
  for (auto kind : {InnerKind::smc_backward, InnerKind::smc_empirical, InnerKind::importance}) {
    ProperWeightingProcedure p;
    p.kind = kind;
    p.M = 5;
    procs.push_back(p);
  }
  procs.push_back(self_nested_proc(5, 3, StageOrder::natural));
  std::uint64_t seed = 100;
  for (const auto& p : procs)
    for (const auto& r : proper_weighting_check(p, ProperWeightingCase{}, o.selftest_replicates, seed++))
      ok &= report(r.test.pass, "proper weighting " + describe(p) + " phi=" + r.phi + " (z=" + format_double(r.test.z) +
                                    ")");
  return ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested sequential Monte Carlo for high-dimensional state space models"};
  app.require_subcommand(1);
  Options o;

  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from the model block of a config");
  sim->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", o.out, "Output CSV path (a .meta.json sidecar is written next to it)");
  sim->add_option("--seed", o.seed, "Override data.seed");
  sim->add_flag("--verbose", o.verbose);

  auto* run = app.add_subcommand("run", "Run a replicated experiment");
  run->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", o.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  run->add_option("--out", o.out, "Output directory (overrides output_dir)");
  run->add_flag("--verbose", o.verbose, "Log each finished replicate");

  auto* asym = app.add_subcommand("asymptotics", "Evaluate the asymptotic variance curve over a grid of M");
  asym->add_option("--config", o.config, "Experiment config with an independent model")
      ->required()
      ->check(CLI::ExistingFile);
  asym->add_option("--grid", o.grid, "Values of M")->delimiter(',');
  asym->add_option("--t", o.horizon, "Horizon t (default: model.T)");
  asym->add_option("--component", o.component, "Component whose observations are used (1-based)");
  asym->add_option("--quadrature", o.quadrature, "closed-form | gauss-hermite");
  asym->add_option("--out", o.out, "Output CSV (default: stdout)");
  asym->add_flag("--verbose", o.verbose);

  auto* self = app.add_subcommand("selftest", "Run proper-weighting and oracle checks");
  self->add_option("--replicates", o.selftest_replicates, "Invocations per proper-weighting check")
      ->check(CLI::Range(30, 100000000));
  self->add_flag("--verbose", o.verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (run->parsed()) return cmd_run(o);
    if (asym->parsed()) return cmd_asymptotics(o);
    return cmd_selftest(o);
  } catch (const InvalidParameter& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
