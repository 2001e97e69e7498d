// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only
//
// Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsmc/asymptotics.hpp"
#include "nsmc/diagnostics.hpp"
#include "nsmc/exact.hpp"
#include "nsmc/experiment.hpp"
#include "nsmc/io.hpp"
#include "nsmc/nested.hpp"
#include "nsmc/oracle.hpp"
#include "nsmc/selftest.hpp"
#include "nsmc/smc.hpp"

using namespace nsmc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

StssmSpec random_spec(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> a(-0.9, 0.9), tau(0.5, 2.0), lam(0.0, 2.0), ov(0.1, 2.0);
  return make_stssm(n, a(gen), tau(gen), lam(gen), ov(gen));
}

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(gen);
  return v;
}

ProperWeightingProcedure proc_of(InnerKind kind, std::size_t M) {
  ProperWeightingProcedure p;
  p.kind = kind;
  p.M = M;
  return p;
}

// ---- 1: oracle agreement ------------------------------------------------------------

Outcome criterion_1() {
  Outcome o;
  std::mt19937_64 gen(101);
  double worst_nu = 0.0, worst_ll = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + gen() % 4;
    const auto spec = random_spec(gen, n);
    const auto xp = random_vec(gen, n), y = random_vec(gen, n, 2.0);
    const double mine = ffbs_forward(spec, xp, y).log_nu;
    const double ref = oracle::one_step(spec, xp, y).log_evidence;
    // Relative error of exp(log nu) against exp(reference).
    worst_nu = std::max(worst_nu, std::abs(std::expm1(mine - ref)));
  }
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + gen() % 4, T = 1 + gen() % 3;
    double ll = 0.0, ref = 0.0;
    if (k % 2 == 0) {
      const auto spec = random_spec(gen, n);
      const auto data = simulate(spec, T, gen());
      ll = kalman_filter(StssmModel(spec), data).log_z();
      ref = oracle::DenseLgss::from(spec).posterior(data, T).log_evidence;
    } else {
      std::uniform_real_distribution<double> u(0.1, 2.0), a(-0.9, 0.9), m(-1.0, 1.0);
      const IndependentSsmSpec spec{n, {m(gen), u(gen), a(gen), u(gen), u(gen)}};
      const auto data = simulate(spec, T, gen());
      ll = kalman_filter(IndependentSsmModel(spec), data).log_z();
      ref = oracle::DenseLgss::from(spec).posterior(data, T).log_evidence;
    }
    worst_ll = std::max(worst_ll, std::abs(ll - ref) / std::max(1.0, std::abs(ref)));
  }
  o.check(worst_nu <= 1e-8, "exp(log nu) relative error " + fmt(worst_nu));
  o.check(worst_ll <= 1e-8, "kalman log-likelihood error " + fmt(worst_ll));
  o.note("max rel err nu " + fmt(worst_nu, 3) + ", kalman " + fmt(worst_ll, 3) + " over 100 + 100 instances");
  return o;
}

// ---- 2: proper weighting ------------------------------------------------------------

Outcome criterion_2() {
  Outcome o;
  const std::size_t R = 100000;
  std::uint64_t seed = 2000;
  double worst = 0.0;
  std::size_t checks = 0;
  for (auto kind : {InnerKind::smc_backward, InnerKind::smc_empirical, InnerKind::importance, InnerKind::self_nested})
    for (std::size_t M : {1u, 5u, 20u}) {
      if (kind == InnerKind::self_nested && M < 2) continue;
      const auto proc = kind == InnerKind::self_nested ? self_nested_proc(M, 3) : proc_of(kind, M);
      for (const auto& r : proper_weighting_check(proc, ProperWeightingCase{}, R, seed++)) {
        ++checks;
        worst = std::max(worst, std::abs(r.test.z));
        o.check(r.test.pass, describe(proc) + " phi=" + r.phi + " z=" + fmt(r.test.z));
      }
    }
  o.note(std::to_string(checks) + " checks, R=" + std::to_string(R) + ", max |z| " + fmt(worst, 3));
  return o;
}

// ---- 3: normalizer unbiasedness -----------------------------------------------------

Outcome criterion_3() {
  Outcome o;
  const std::size_t R = 500, T = 5;
  for (std::size_t n_x : {2u, 10u}) {
    const auto spec = make_stssm(n_x, 0.5, 1.0, 1.0, 1.0);
    const StssmModel model(spec);
    const auto data = simulate(spec, T, 300 + n_x);
    const double ll = kalman_filter(model, data).log_z();
    struct Method {
      std::string name;
      std::function<FilterOutput(std::uint64_t)> run;
    };
    const std::vector<Method> methods{
        {"fapf N=100", [&](std::uint64_t s) { return fapf_run(model, data, 100, s); }},
        {"bpf N=1000", [&](std::uint64_t s) { return bootstrap_pf(model, data, 1000, s); }},
        {"nsmc N=100 M=5",
         [&](std::uint64_t s) { return nsmc_run(model, data, 100, proc_of(InnerKind::smc_backward, 5), s); }},
        {"nsmc N=100 M=20",
         [&](std::uint64_t s) { return nsmc_run(model, data, 100, proc_of(InnerKind::smc_backward, 20), s); }}};
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> ratio(R);
      for (std::size_t r = 0; r < R; ++r) ratio[r] = std::exp(methods[m].run(derive_seed(3000 + n_x, {m, r})).log_z() - ll);
      const auto z = unbiasedness_test(ratio, 1.0);
      const std::string label = methods[m].name + " n_x=" + std::to_string(n_x);
      o.check(z.pass, label + " mean " + fmt(z.mean) + " z=" + fmt(z.z));
      o.note(label + ": mean " + fmt(z.mean) + " +- " + fmt(z.stderr_, 2));
    }
  }
  return o;
}

// ---- 4: desk-scale Gaussian experiment ----------------------------------------------

Outcome criterion_4() {
  Outcome o;
  auto c = load_config(fs::path(NSMC_SOURCE_DIR) / "configs" / "desk_scale_stssm.json");
  // Backward simulation is compared against drawing from the inner empirical measure.
  for (std::size_t M : {10u, 50u})
    c.methods.push_back(
        {.name = "nsmc-empirical-M" + std::to_string(M), .kind = "nsmc", .N = 100, .M = M, .inner = "smc+empirical"});
  validate_config(c);
  const auto data = load_experiment_data(c);
  const auto res = run_replicates(c, data, 1);
  o.check(res.failures == 0, std::to_string(res.failures) + " failed replicates");
  std::map<std::string, std::pair<double, double>> med;  // name -> (median SE logZ, median SE E[x_T1])
  for (const auto& s : summarize(c, res))
    if (!s.se_log_z.empty()) med[s.name] = {quantile(s.se_log_z, 0.5), quantile(s.se_mean_first, 0.5)};
  std::string table;
  for (std::size_t M : {5u, 10u, 20u, 50u}) {
    const auto n = med.at("nsmc-M" + std::to_string(M)), b = med.at("bpf-M" + std::to_string(M));
    table += " M=" + std::to_string(M) + " nsmc " + fmt(n.first, 3) + " bpf " + fmt(b.first, 3) + ";";
    if (M >= 10) o.check(n.first < b.first, "(a) nsmc vs bpf log Z at M=" + std::to_string(M));
  }
  const double fa = med.at("fapf").first, n50 = med.at("nsmc-M50").first;
  o.check(n50 <= 2.0 * fa, "(b) nsmc M=50 " + fmt(n50, 3) + " vs 2 x fapf " + fmt(2.0 * fa, 3));
  for (std::size_t M : {10u, 50u}) {
    const double bs = med.at("nsmc-M" + std::to_string(M)).second;
    const double emp = med.at("nsmc-empirical-M" + std::to_string(M)).second;
    table += " E[x_T1] M=" + std::to_string(M) + " bs " + fmt(bs, 3) + " emp " + fmt(emp, 3) + ";";
    o.check(bs <= emp, "(c) backward simulation vs empirical draw at M=" + std::to_string(M));
  }
  o.note("median SE log Z:" + table + " fapf " + fmt(fa, 3));
  return o;
}

// ---- 5: asymptotic variance formulas ------------------------------------------------

ZTest mc_constant(double rho_mean, double rho_var, double pt_mean, double pt_var, double beta, int k, double expected,
                  std::uint64_t seed) {
  Stream s = substream(seed, {0});
  std::vector<double> v(1000000);
  for (auto& x : v) {
    const double z = s.normal(rho_mean, std::sqrt(rho_var));
    const double ratio = std::exp(log_normal_pdf(z, pt_mean, pt_var) - log_normal_pdf(z, rho_mean, rho_var));
    x = ratio * ratio * std::pow(beta * (z - pt_mean), k);
  }
  return unbiasedness_test(v, expected);
}

Outcome criterion_5() {
  Outcome o;
  const ScalarLgss scalar{0.0, 1.0, 0.5, 1.0, 1.0};

  // Limit M -> infinity at formula level.
  {
    const std::vector<double> y{0.9, -0.4, 1.3, 0.2};
    const auto k = compute_constants(scalar, y, 4);
    double worst = 0.0;
    for (std::size_t n_x : {1u, 2u, 10u, 100u}) {
      const double fa = sigma_fa(k, n_x, 4);
      worst = std::max(worst, std::abs(sigma_nsmc(k, n_x, 4, 1e9) - fa) / fa);
    }
    o.check(worst <= 1e-6, "M = 1e9 limit, rel diff " + fmt(worst));
    o.note("M=1e9 vs fully adapted: max rel diff " + fmt(worst, 3));
  }

  // Constants against Monte Carlo integration with dense smoothing laws.
  {
    const std::vector<double> y{0.9, -0.4, 1.3, 0.2};
    const std::size_t t = 4;
    const auto k = compute_constants(scalar, y, t);
    Dataset d;
    d.T = t;
    d.n_x = 1;
    d.observations = y;
    const auto dense = oracle::DenseLgss::from(IndependentSsmSpec{1, scalar});
    const auto full = dense.posterior(d, t);
    const auto beta = [&](std::size_t s) {
      const auto i = static_cast<Eigen::Index>(s - 1);
      return full.cov(i, 3) / full.cov(i, i);
    };
    std::uint64_t seed = 5000;
    std::size_t checks = 0;
    double worst = 0.0;
    const auto run = [&](double rm, double rv, double pm, double pv, double b, int p, double expected,
                         const std::string& name) {
      const auto z = mc_constant(rm, rv, pm, pv, b, p, expected, seed++);
      ++checks;
      worst = std::max(worst, std::abs(z.z));
      o.check(z.pass, name + " z=" + fmt(z.z));
    };
    for (std::size_t s = 0; s < t; ++s) {
      const std::string ss = "[s=" + std::to_string(s) + "]";
      const auto u = static_cast<Eigen::Index>(s);
      double rm = scalar.init_mean, rv = scalar.init_var;
      if (s >= 1) {
        const auto filt = dense.posterior(d, s);
        const auto i = static_cast<Eigen::Index>(s - 1);
        const double fm = filt.mean(i), fv = filt.cov(i, i), pm = full.mean(i), pv = full.cov(i, i);
        run(fm, fv, pm, pv, beta(s), 0, k.B[s], "B" + ss);
        run(fm, fv, pm, pv, beta(s), 1, k.C[s], "C" + ss);
        run(fm, fv, pm, pv, beta(s), 2, k.A[s], "A" + ss);
        rm = scalar.a_coef * fm;
        rv = scalar.a_coef * scalar.a_coef * fv + scalar.trans_var;
      }
      run(rm, rv, full.mean(u), full.cov(u, u), beta(s + 1), 0, k.B_tilde[s], "B_tilde" + ss);
      run(rm, rv, full.mean(u), full.cov(u, u), beta(s + 1), 1, k.C_tilde[s], "C_tilde" + ss);
      run(rm, rv, full.mean(u), full.cov(u, u), beta(s + 1), 2, k.A_tilde[s], "A_tilde" + ss);
    }
    o.note(std::to_string(checks) + " constants vs Monte Carlo, max |z| " + fmt(worst, 3));
  }

  // Formula against the empirical variance of the NSMC filtering estimate of sum_d x_{t,d}.
  {
    const std::size_t n_x = 2, t = 2, N = 2000, R = 2000, M = 5;
    // Every component sees the same observations so all components share one set of constants.
    const auto one = simulate(IndependentSsmSpec{1, scalar}, t, 42);
    Dataset data;
    data.T = t;
    data.n_x = n_x;
    for (std::size_t s = 1; s <= t; ++s)
      for (std::size_t d = 0; d < n_x; ++d) data.observations.push_back(one.y(s)[0]);
    const std::vector<double> y(one.observations.begin(), one.observations.end());
    const auto k = compute_constants(scalar, y, t);
    const double predicted = sigma_nsmc(k, n_x, t, static_cast<double>(M));
    const IndependentSsmModel model(IndependentSsmSpec{n_x, scalar});
    std::vector<double> est(R);
    for (std::size_t r = 0; r < R; ++r) {
      const auto out = nsmc_run(model, data, N, proc_of(InnerKind::smc_backward, M), derive_seed(5500, {r}));
      est[r] = out.mean[t - 1][0] + out.mean[t - 1][1];
    }
    const double empirical = static_cast<double>(N) * sample_variance(est);
    const double rel = std::abs(empirical - predicted) / predicted;
    o.check(rel <= 0.15, "N Var " + fmt(empirical) + " vs formula " + fmt(predicted));
    o.note("M=5: N Var " + fmt(empirical) + ", formula " + fmt(predicted) + " (fully adapted " +
           fmt(sigma_fa(k, n_x, t)) + "), rel diff " + fmt(rel, 3));
  }
  return o;
}

// ---- 6: exact reductions ----------------------------------------------------------------

ParticleSystem scattered_system(std::size_t N, std::size_t n, std::mt19937_64& gen) {
  auto sys = ParticleSystem::initial(N, n);
  std::vector<std::size_t> anc(N);
  for (std::size_t i = 0; i < N; ++i) anc[i] = i;
  sys.commit(random_vec(gen, N * n, 1.5), anc);
  return sys;
}

Outcome criterion_6() {
  Outcome o;
  std::mt19937_64 gen(606);

  // General algorithm with target-ratio proposal and nu-hat = tau keeps uniform weights.
  std::size_t steps = 0;
  for (auto kind : {InnerKind::smc_backward, InnerKind::smc_empirical, InnerKind::importance, InnerKind::self_nested}) {
    const auto spec = random_spec(gen, 4);
    const StssmModel model(spec);
    const auto data = simulate(spec, 5, gen());
    const auto proc = kind == InnerKind::self_nested ? self_nested_proc(4, 2) : proc_of(kind, 4);
    auto sys = ParticleSystem::initial(40, 4);
    for (std::size_t t = 1; t <= 5; ++t) {
      general_nsmc_step(sys, model, data.y(t), proc, GeneralProposal::target_ratio, Adjustment::tau(), 60 + t);
      ++steps;
      o.check(std::all_of(sys.logw.begin(), sys.logw.end(), [&](double w) { return w == sys.logw[0]; }),
              "general weights not uniform, " + describe(proc) + " t=" + std::to_string(t));
    }
  }
  o.note("general algorithm: uniform weights on " + std::to_string(steps) + " steps");

  // Zero-variance inner proposal: NSMC resampling law equals FAPF's categorical parameters.
  auto exact_is = proc_of(InnerKind::importance, 3);
  exact_is.is_proposal = IsProposal::exact;
  std::size_t systems = 0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 1 + gen() % 6, N = 50;
    const auto spec = random_spec(gen, n);
    const StssmModel model(spec);
    const auto sys = scattered_system(N, n, gen);
    const auto y = random_vec(gen, n, 2.0);
    std::vector<double> log_tau, log_nu(N);
    detail::forward_all(sys, model, exact_is, y, sys.t + 1, gen(), log_tau);
    for (std::size_t i = 0; i < N; ++i) log_nu[i] = ffbs_forward(model, sys.row(i), y, sys.t + 1).log_nu;
    std::vector<double> p_nsmc(N), p_fapf(N);
    const double a = normalize_logweights_into(log_tau, p_nsmc);
    const double b = normalize_logweights_into(log_nu, p_fapf);
    o.check(p_nsmc == p_fapf && a == b, "resampling probabilities differ, instance " + std::to_string(k));
    Stream s1 = substream(9, {1}), s2 = substream(9, {1});
    o.check(multinomial_resample(p_nsmc, N, s1) == multinomial_resample(p_fapf, N, s2),
            "ancestor draws differ, instance " + std::to_string(k));
    ++systems;
  }
  o.note("exact-proposal IS vs fully adapted: bit-identical resampling law on " + std::to_string(systems) +
         " particle systems");

  // Fully adapted filter: uniform weights after propagation.
  {
    const auto spec = random_spec(gen, 5);
    const StssmModel model(spec);
    const auto data = simulate(spec, 6, gen());
    auto sys = ParticleSystem::initial(60, 5);
    for (std::size_t t = 1; t <= 6; ++t) {
      fapf_step(sys, model, data.y(t), 17);
      o.check(std::all_of(sys.logw.begin(), sys.logw.end(), [](double w) { return w == 0.0; }),
              "fapf weights not uniform at t=" + std::to_string(t));
    }
  }
  return o;
}

// ---- 7: determinism ------------------------------------------------------------------------

std::string bytes_of(const FilterOutput& out) {
  std::ostringstream os;
  write_filter_output(os, out);
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion_7() {
  Outcome o;
  const auto spec = make_stssm(4, 0.5, 1.0, 1.0, 0.5);
  const StssmModel model(spec);
  const auto data = simulate(spec, 5, 77);
  ProperWeightingProcedure transition;
  transition.kind = InnerKind::exact_transition;
  BootstrapOptions systematic;
  systematic.resampling = ResamplingScheme::systematic;
  auto exact_is = proc_of(InnerKind::importance, 4);
  exact_is.is_proposal = IsProposal::exact;
  const std::vector<std::pair<std::string, std::function<FilterOutput(std::uint64_t)>>> runs{
      {"kalman", [&](std::uint64_t) { return kalman_filter(model, data); }},
      {"fapf", [&](std::uint64_t s) { return fapf_run(model, data, 50, s); }},
      {"bpf", [&](std::uint64_t s) { return bootstrap_pf(model, data, 200, s); }},
      {"bpf-systematic", [&](std::uint64_t s) { return bootstrap_pf(model, data, 200, s, systematic); }},
      {"nsmc smc+bs", [&](std::uint64_t s) { return nsmc_run(model, data, 30, proc_of(InnerKind::smc_backward, 5), s); }},
      {"nsmc smc+empirical",
       [&](std::uint64_t s) { return nsmc_run(model, data, 30, proc_of(InnerKind::smc_empirical, 5), s); }},
      {"nsmc is", [&](std::uint64_t s) { return nsmc_run(model, data, 30, proc_of(InnerKind::importance, 5), s); }},
      {"nsmc is(exact)", [&](std::uint64_t s) { return nsmc_run(model, data, 30, exact_is, s); }},
      {"nsmc self-nested", [&](std::uint64_t s) { return nsmc_run(model, data, 30, self_nested_proc(4, 2), s); }},
      {"general", [&](std::uint64_t s) {
         return general_nsmc_run(model, data, 30, proc_of(InnerKind::smc_backward, 5), GeneralProposal::target_ratio,
                                 Adjustment::tau(), s);
       }},
      {"general transition", [&](std::uint64_t s) {
         return general_nsmc_run(model, data, 30, transition, GeneralProposal::transition, Adjustment::unit(), s);
       }}};
  for (const auto& [name, run] : runs) {
    const auto a = bytes_of(run(123)), b = bytes_of(run(123));
    o.check(a == b, name + " not reproducible");
    if (name != "kalman") o.check(a != bytes_of(run(124)), name + " ignores its seed");
  }

  const auto dir = fs::temp_directory_path() / "nsmc_acceptance_determinism";
  fs::remove_all(dir);
  auto c = load_config(fs::path(NSMC_SOURCE_DIR) / "configs" / "quick_demo.json");
  c.replicates = 4;
  run_experiment(c, dir / "a", {}, 1);
  run_experiment(c, dir / "b", {}, 1);
  run_experiment(c, dir / "c", {}, 3);
  for (const char* f : {"results.csv", "summary.csv", "config.echo.json"}) {
    const auto a = slurp(dir / "a" / f);
    o.check(!a.empty() && a == slurp(dir / "b" / f), std::string(f) + " differs between identical runs");
    o.check(a == slurp(dir / "c" / f), std::string(f) + " depends on the worker count");
  }
  fs::remove_all(dir);
  o.note(std::to_string(runs.size()) + " filters and the experiment pipeline (1 and 3 workers) byte-identical");
  return o;
}

struct Criterion {
  const char* title;
  double budget_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"oracle agreement of the exact stack", 60, criterion_1},
    {"proper weighting of every inner procedure", 300, criterion_2},
    {"unbiased normalizing-constant estimates", 600, criterion_3},
    {"desk-scale Gaussian experiment orderings", 1800, criterion_4},
    {"asymptotic variance formulas", 1200, criterion_5},
    {"exact reduction identities", 60, criterion_6},
    {"determinism", 60, criterion_7},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  bool verbose = false;
  app.add_option("--criterion", only, "Run a single criterion (1-7)")->check(CLI::Range(1, 7));
  app.add_flag("--verbose", verbose, "Print every failed check");
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  for (int i = 1; i <= 7; ++i) {
    if (only != 0 && i != only) continue;
    const auto& c = kCriteria[i - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.check(secs < c.budget_seconds, "runtime " + fmt(secs) + " s exceeds " + fmt(c.budget_seconds) + " s");
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i << ": " << c.title << " (" << fmt(secs, 3) << " s)\n";
    std::size_t shown = 0;
    for (const auto& n : o.notes) {
      const bool failure = n.rfind("failed: ", 0) == 0;
      if (failure && !verbose && ++shown > 10) continue;
      std::cout << "    " << n << '\n';
    }
    std::cout.flush();
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
