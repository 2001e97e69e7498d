#pragma once

// Config-driven replicated experiments: one dataset, several filters, R replicates
// each, squared errors against the Kalman filter, and CSV/JSON outputs.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nsmc/diagnostics.hpp"
#include "nsmc/errors.hpp"
#include "nsmc/exact.hpp"
#include "nsmc/io.hpp"
#include "nsmc/model.hpp"
#include "nsmc/nested.hpp"
#include "nsmc/smc.hpp"

namespace nsmc {

struct ModelConfig {
  std::string kind = "stssm";  // stssm | independent
  std::size_t n_x = 10;
  std::size_t T = 10;
  double a_coef = 0.5;
  double tau = 1.0;
  double lambda = 1.0;
  double obs_var = 0.0625;
  double init_mean = 0.0;  // independent only
  double init_var = 1.0;   // independent only

  bool operator==(const ModelConfig&) const = default;
};

struct DataConfig {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> path;

  bool operator==(const DataConfig&) const = default;
};

struct MethodConfig {
  std::string name;
  std::string kind;  // kalman | fapf | bpf | nsmc | nsmc-general
  std::size_t N = 100;
  std::size_t M = 1;
  std::string inner = "smc+bs";  // smc+bs | smc+empirical | is | self-nested | exact-transition
  std::size_t M_inner = 1;
  std::string stage_proposal = "prior";      // prior | locally-optimal
  std::string order = "natural";             // natural | reversed
  std::string is_proposal = "transition";    // transition | exact
  std::string resampling = "multinomial";    // bpf only: multinomial | systematic
  std::string proposal = "target-ratio";     // nsmc-general: target-ratio | transition
  std::string adjustment = "tau";            // nsmc-general: tau | unit

  bool operator==(const MethodConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelConfig model;
  DataConfig data;
  std::vector<MethodConfig> methods;
  std::size_t replicates = 1;
  std::uint64_t master_seed = 1;
  bool budget_matching = true;
  std::string output_dir = "out";
  std::size_t workers = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

// ---- JSON -------------------------------------------------------------------

namespace detail {

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    const std::string where = path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(where, "expected true or false");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(where, "expected a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        fail(where, "expected a non-negative integer");
      out = v.get<T>();
    } else {
      if (!v.is_number()) fail(where, "expected a number");
      out = v.get<T>();
    }
  }

  template <class T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    read(key, v);
    out = v;
  }

  void mark(const char* key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(path_ + "." + k, "unknown key");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw InvalidParameter("config " + where + ": " + what);
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = {{"kind", m.kind}, {"n_x", m.n_x}, {"T", m.T}, {"a_coef", m.a_coef}, {"tau", m.tau}, {"lambda", m.lambda},
       {"obs_var", m.obs_var}, {"init_mean", m.init_mean}, {"init_var", m.init_var}};
}

inline void to_json(nlohmann::json& j, const DataConfig& d) {
  j = nlohmann::json::object();
  if (d.seed) j["seed"] = *d.seed;
  if (d.path) j["path"] = *d.path;
}

inline void to_json(nlohmann::json& j, const MethodConfig& m) {
  j = {{"name", m.name},
       {"kind", m.kind},
       {"N", m.N},
       {"M", m.M},
       {"inner", m.inner},
       {"M_inner", m.M_inner},
       {"stage_proposal", m.stage_proposal},
       {"order", m.order},
       {"is_proposal", m.is_proposal},
       {"resampling", m.resampling},
       {"proposal", m.proposal},
       {"adjustment", m.adjustment}};
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"model", c.model},
       {"data", c.data},
       {"methods", c.methods},
       {"replicates", c.replicates},
       {"master_seed", c.master_seed},
       {"budget_matching", c.budget_matching},
       {"output_dir", c.output_dir},
       {"workers", c.workers}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::JsonReader r(j, "$");
  r.read("name", c.name);
  r.read("replicates", c.replicates);
  r.read("master_seed", c.master_seed);
  r.read("budget_matching", c.budget_matching);
  r.read("output_dir", c.output_dir);
  r.read("workers", c.workers);
  r.mark("model");
  r.mark("data");
  r.mark("methods");
  if (j.contains("model")) {
    detail::JsonReader m(j.at("model"), "$.model");
    m.read("kind", c.model.kind);
    m.read("n_x", c.model.n_x);
    m.read("T", c.model.T);
    m.read("a_coef", c.model.a_coef);
    m.read("tau", c.model.tau);
    m.read("lambda", c.model.lambda);
    m.read("obs_var", c.model.obs_var);
    m.read("init_mean", c.model.init_mean);
    m.read("init_var", c.model.init_var);
    m.finish();
  }
  if (j.contains("data")) {
    detail::JsonReader d(j.at("data"), "$.data");
    d.read_optional("seed", c.data.seed);
    d.read_optional("path", c.data.path);
    d.finish();
  }
  if (j.contains("methods")) {
    const auto& ms = j.at("methods");
    if (!ms.is_array()) detail::JsonReader::fail("$.methods", "expected an array");
    for (std::size_t i = 0; i < ms.size(); ++i) {
      MethodConfig mc;
      detail::JsonReader m(ms[i], "$.methods[" + std::to_string(i) + "]");
      m.read("name", mc.name);
      m.read("kind", mc.kind);
      m.read("N", mc.N);
      m.read("M", mc.M);
      m.read("inner", mc.inner);
      m.read("M_inner", mc.M_inner);
      m.read("stage_proposal", mc.stage_proposal);
      m.read("order", mc.order);
      m.read("is_proposal", mc.is_proposal);
      m.read("resampling", mc.resampling);
      m.read("proposal", mc.proposal);
      m.read("adjustment", mc.adjustment);
      m.finish();
      c.methods.push_back(std::move(mc));
    }
  }
  r.finish();
  return c;
}

// ---- validation ---------------------------------------------------------------

inline ProperWeightingProcedure procedure_of(const MethodConfig& m, const std::string& where) {
  ProperWeightingProcedure p;
  p.M = m.M;
  p.M_inner = m.M_inner;
  if (m.inner == "smc+bs") p.kind = InnerKind::smc_backward;
  else if (m.inner == "smc+empirical") p.kind = InnerKind::smc_empirical;
  else if (m.inner == "is") p.kind = InnerKind::importance;
  else if (m.inner == "self-nested") {
    p.kind = InnerKind::self_nested;
    p.recursion_depth = 1;
  } else if (m.inner == "exact-transition") p.kind = InnerKind::exact_transition;
  else detail::JsonReader::fail(where + ".inner", "unknown inner procedure '" + m.inner + "'");
  if (m.stage_proposal == "prior") p.stage_proposal = StageProposal::prior;
  else if (m.stage_proposal == "locally-optimal") p.stage_proposal = StageProposal::locally_optimal;
  else detail::JsonReader::fail(where + ".stage_proposal", "expected prior or locally-optimal");
  if (m.order == "natural") p.order = StageOrder::natural;
  else if (m.order == "reversed") p.order = StageOrder::reversed;
  else detail::JsonReader::fail(where + ".order", "expected natural or reversed");
  if (m.is_proposal == "transition") p.is_proposal = IsProposal::transition;
  else if (m.is_proposal == "exact") p.is_proposal = IsProposal::exact;
  else detail::JsonReader::fail(where + ".is_proposal", "expected transition or exact");
  try {
    p.validate();
  } catch (const InvalidParameter& e) {
    detail::JsonReader::fail(where, e.what());
  }
  return p;
}

inline void validate_config(const ExperimentConfig& c) {
  using detail::JsonReader;
  if (c.model.kind != "stssm" && c.model.kind != "independent")
    JsonReader::fail("$.model.kind", "expected stssm or independent");
  if (c.model.n_x < 1) JsonReader::fail("$.model.n_x", "must be at least 1");
  if (c.model.T < 1) JsonReader::fail("$.model.T", "must be at least 1");
  if (!(c.model.obs_var > 0)) JsonReader::fail("$.model.obs_var", "must be positive");
  if (!(c.model.tau > 0)) JsonReader::fail("$.model.tau", "must be positive");
  if (!(c.model.lambda >= 0)) JsonReader::fail("$.model.lambda", "must be non-negative");
  if (c.model.kind == "independent") {
    if (c.model.lambda != 0.0) JsonReader::fail("$.model.lambda", "the independent model has no interaction");
    if (!(c.model.init_var > 0)) JsonReader::fail("$.model.init_var", "must be positive");
  }
  if (c.data.seed.has_value() == c.data.path.has_value())
    JsonReader::fail("$.data", "give exactly one of seed or path");
  if (c.replicates < 1) JsonReader::fail("$.replicates", "must be at least 1");
  if (c.workers < 1) JsonReader::fail("$.workers", "must be at least 1");
  if (c.methods.empty()) JsonReader::fail("$.methods", "at least one method is required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    const auto& m = c.methods[i];
    const std::string where = "$.methods[" + std::to_string(i) + "]";
    if (m.name.empty()) JsonReader::fail(where + ".name", "must be non-empty");
    if (m.name.find(',') != std::string::npos) JsonReader::fail(where + ".name", "must not contain commas");
    if (!names.insert(m.name).second) JsonReader::fail(where + ".name", "duplicate method name '" + m.name + "'");
    if (m.N < 1) JsonReader::fail(where + ".N", "must be at least 1");
    if (m.M < 1) JsonReader::fail(where + ".M", "must be at least 1");
    if (m.kind == "kalman" || m.kind == "fapf") continue;
    if (m.kind == "bpf") {
      if (m.resampling != "multinomial" && m.resampling != "systematic")
        JsonReader::fail(where + ".resampling", "expected multinomial or systematic");
      continue;
    }
    if (m.kind != "nsmc" && m.kind != "nsmc-general")
      JsonReader::fail(where + ".kind", "unknown method kind '" + m.kind + "'");
    const auto p = procedure_of(m, where);
    if (m.kind == "nsmc") {
      if (p.kind == InnerKind::exact_transition)
        JsonReader::fail(where + ".inner", "exact-transition needs kind nsmc-general with proposal transition");
      continue;
    }
    if (m.proposal != "target-ratio" && m.proposal != "transition")
      JsonReader::fail(where + ".proposal", "expected target-ratio or transition");
    if (m.adjustment != "tau" && m.adjustment != "unit")
      JsonReader::fail(where + ".adjustment", "expected tau or unit");
    if ((m.proposal == "transition") != (p.kind == InnerKind::exact_transition))
      JsonReader::fail(where + ".inner", "proposal transition pairs with inner exact-transition (and only with it)");
  }
}

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidParameter(std::string("config: ") + e.what());
  }
  auto c = config_from_json(j);
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidParameter("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const InvalidParameter& e) {
    throw InvalidParameter(path.string() + ": " + e.what());
  }
}

// ---- models and data ------------------------------------------------------------

using AnyModel = std::variant<StssmModel, IndependentSsmModel>;

inline AnyModel make_model(const ModelConfig& m) {
  if (m.kind == "independent")
    return IndependentSsmModel(IndependentSsmSpec{m.n_x, {m.init_mean, m.init_var, m.a_coef, 1.0 / m.tau, m.obs_var}});
  return StssmModel(make_stssm(m.n_x, m.a_coef, m.tau, m.lambda, m.obs_var));
}

inline DatasetMeta meta_of(const ModelConfig& m, std::uint64_t seed) {
  DatasetMeta meta;
  meta.model_kind = m.kind;
  meta.n_x = m.n_x;
  meta.T = m.T;
  meta.a_coef = m.a_coef;
  meta.tau = m.tau;
  meta.lambda = m.lambda;
  meta.obs_var = m.obs_var;
  meta.seed = seed;
  if (m.kind == "independent") {
    meta.init_mean = m.init_mean;
    meta.init_var = m.init_var;
  }
  return meta;
}

inline Dataset simulate_dataset(const ModelConfig& m, std::uint64_t seed) {
  return std::visit([&](const auto& model) { return simulate(model.spec(), m.T, seed); }, make_model(m));
}

inline Dataset load_experiment_data(const ExperimentConfig& c, const std::filesystem::path& base = {}) {
  if (c.data.seed) return simulate_dataset(c.model, *c.data.seed);
  std::filesystem::path p = *c.data.path;
  if (p.is_relative() && !base.empty()) p = base / p;
  auto loaded = read_dataset(p);
  if (loaded.data.n_x != c.model.n_x || loaded.data.T != c.model.T)
    throw InvalidParameter("dataset " + p.string() + " does not match the model block (n_x, T)");
  return std::move(loaded.data);
}

// ---- running ----------------------------------------------------------------------

inline std::size_t effective_particles(const ExperimentConfig& c, const MethodConfig& m) {
  return m.kind == "bpf" && c.budget_matching ? m.N * m.M : m.N;
}

inline FilterOutput run_method(const AnyModel& any, const ExperimentConfig& c, const MethodConfig& m,
                               const Dataset& data, std::uint64_t seed) {
  return std::visit(
      [&](const auto& model) -> FilterOutput {
        const std::size_t N = effective_particles(c, m);
        if (m.kind == "kalman") return kalman_filter(model, data);
        if (m.kind == "fapf") return fapf_run(model, data, N, seed);
        if (m.kind == "bpf") {
          BootstrapOptions opts;
          opts.resampling = m.resampling == "systematic" ? ResamplingScheme::systematic : ResamplingScheme::multinomial;
          return bootstrap_pf(model, data, N, seed, opts);
        }
        const auto proc = procedure_of(m, m.name);
        if (m.kind == "nsmc") return nsmc_run(model, data, N, proc, seed);
        return general_nsmc_run(model, data, N, proc,
                                m.proposal == "transition" ? GeneralProposal::transition : GeneralProposal::target_ratio,
                                m.adjustment == "unit" ? Adjustment::unit() : Adjustment::tau(), seed);
      },
      any);
}

inline std::uint64_t method_seed(std::uint64_t master, std::size_t replicate, std::size_t method) {
  return derive_seed(derive_seed(master, {replicate}), {key(StreamTag::method), method});
}

struct ReplicateRecord {
  bool failed = false;
  std::string error;
  FilterOutput output;
};

struct ExperimentResult {
  FilterOutput truth;                              // Kalman filter on the dataset
  std::vector<std::vector<ReplicateRecord>> runs;  // [method][replicate]
  std::size_t failures = 0;
};

inline ExperimentResult run_replicates(const ExperimentConfig& c, const Dataset& data, std::size_t workers,
                                       std::ostream* log = nullptr) {
  const AnyModel model = make_model(c.model);
  ExperimentResult res;
  res.truth = std::visit([&](const auto& m) { return kalman_filter(m, data); }, model);
  const std::size_t n_methods = c.methods.size(), R = c.replicates;
  res.runs.assign(n_methods, std::vector<ReplicateRecord>(R));
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto work = [&] {
    for (std::size_t task = next++; task < n_methods * R; task = next++) {
      const std::size_t m = task / R, r = task % R;
      auto& rec = res.runs[m][r];
      try {
        rec.output = run_method(model, c, c.methods[m], data, method_seed(c.master_seed, r, m));
      } catch (const Error& e) {
        rec.failed = true;
        rec.error = e.what();
      }
      if (log) {
        const std::lock_guard lock(log_mutex);
        *log << c.methods[m].name << " replicate " << r << (rec.failed ? " FAILED: " + rec.error : " done") << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::max<std::size_t>(workers, 1); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& per : res.runs)
    for (const auto& rec : per) res.failures += rec.failed ? 1 : 0;
  return res;
}

// Per-method replicate values of the headline estimands at t = T.
struct MethodSummary {
  std::string name;
  std::vector<double> log_z, se_log_z, se_mean_first, se_mean_last, mean_ess;
};

inline std::vector<MethodSummary> summarize(const ExperimentConfig& c, const ExperimentResult& res) {
  std::vector<MethodSummary> out;
  const double truth_ll = res.truth.log_z();
  const std::size_t T = res.truth.steps(), n = res.truth.n_x;
  for (std::size_t m = 0; m < c.methods.size(); ++m) {
    MethodSummary s;
    s.name = c.methods[m].name;
    for (const auto& rec : res.runs[m]) {
      if (rec.failed) continue;
      const auto& o = rec.output;
      s.log_z.push_back(o.log_z());
      s.se_log_z.push_back(squared_error(o.log_z(), truth_ll));
      s.se_mean_first.push_back(squared_error(o.mean[T - 1][0], res.truth.mean[T - 1][0]));
      s.se_mean_last.push_back(squared_error(o.mean[T - 1][n - 1], res.truth.mean[T - 1][n - 1]));
      s.mean_ess.push_back(sample_mean(o.ess));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_results_csv(std::ostream& os, const ExperimentConfig& c, const ExperimentResult& res) {
  os << "method,replicate,t,quantity,value\n";
  const std::size_t n = res.truth.n_x;
  const double truth_ll = res.truth.log_z();
  for (std::size_t m = 0; m < c.methods.size(); ++m)
    for (std::size_t r = 0; r < res.runs[m].size(); ++r) {
      const auto& rec = res.runs[m][r];
      const auto row = [&](std::size_t t, const char* q, double v) {
        os << c.methods[m].name << ',' << r << ',' << t << ',' << q << ',' << format_double(v) << '\n';
      };
      if (rec.failed) {
        row(0, "failed", 1.0);
        continue;
      }
      const auto& o = rec.output;
      for (std::size_t t = 0; t < o.steps(); ++t) {
        row(t + 1, "logZ_increment", o.log_z_increment[t]);
        row(t + 1, "mean_first", o.mean[t][0]);
        row(t + 1, "mean_last", o.mean[t][n - 1]);
        row(t + 1, "ess", o.ess[t]);
      }
      const std::size_t T = o.steps();
      row(T, "logZ", o.log_z());
      row(T, "se_logZ", squared_error(o.log_z(), truth_ll));
      row(T, "se_mean_first", squared_error(o.mean[T - 1][0], res.truth.mean[T - 1][0]));
      row(T, "se_mean_last", squared_error(o.mean[T - 1][n - 1], res.truth.mean[T - 1][n - 1]));
    }
}

inline void write_summary_csv(std::ostream& os, const ExperimentConfig& c, const ExperimentResult& res) {
  write_summary_header(os);
  const auto emit = [&](const std::string& estimator, const std::vector<double>& v) {
    if (v.empty()) return;
    auto s = aggregate(v, estimator);
    const auto row = [&](const char* stat, double x) {
      os << c.name << ',' << estimator << ',' << stat << ',' << format_double(x) << '\n';
    };
    row("n", static_cast<double>(v.size()));
    row("mean", s.mean);
    row("stderr", s.stderr_);
    row("q25", s.q25);
    row("median", s.median);
    row("q75", s.q75);
  };
  for (const auto& s : summarize(c, res)) {
    emit(s.name + ":logZ", s.log_z);
    emit(s.name + ":se_logZ", s.se_log_z);
    emit(s.name + ":se_mean_first", s.se_mean_first);
    emit(s.name + ":se_mean_last", s.se_mean_last);
    emit(s.name + ":mean_ess", s.mean_ess);
  }
  os << c.name << ",kalman-truth:logZ,value," << format_double(res.truth.log_z()) << '\n';
}

struct RunStatus {
  int exit_code = 0;  // 0 success, 1 partial failure
  std::size_t failures = 0;
  std::filesystem::path output_dir;
};

inline RunStatus run_experiment(const ExperimentConfig& c, const std::filesystem::path& output_dir,
                                const std::filesystem::path& data_base = {}, std::optional<std::size_t> workers = {},
                                std::ostream* log = nullptr) {
  validate_config(c);
  const Dataset data = load_experiment_data(c, data_base);
  const auto res = run_replicates(c, data, workers.value_or(c.workers), log);
  std::filesystem::create_directories(output_dir);
  {
    std::ofstream os(output_dir / "results.csv");
    write_results_csv(os, c, res);
  }
  {
    std::ofstream os(output_dir / "summary.csv");
    write_summary_csv(os, c, res);
  }
  {
    std::ofstream os(output_dir / "config.echo.json");
    os << nlohmann::json(c).dump(2) << '\n';
  }
  {
    std::ofstream os(output_dir / "metadata.json");
    const nlohmann::json meta = {{"quantile_convention", "linear interpolation between closest ranks (type 7)"},
                                 {"squared_error_reference", "kalman filter on the same dataset"},
                                 {"bpf_particles", c.budget_matching ? "N*M" : "N"}};
    os << meta.dump(2) << '\n';
  }
  return {res.failures > 0 ? 1 : 0, res.failures, output_dir};
}

}  // namespace nsmc
