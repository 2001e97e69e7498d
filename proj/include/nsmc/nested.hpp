#pragma once

// Nested SMC: inner procedures that return properly weighted pairs (x_t, tau) for
// the one-step target f(x_t|x_{t-1}) g(y_t|x_t), and the outer loops that consume them.
//
// Inner procedures:
//   smc_backward     inner SMC over the components, backward simulation
//   smc_empirical    inner SMC over the components, draw from the empirical measure
//   importance       importance sampling with M full-state candidates
//   self_nested      the stage loop itself run as NSMC (sub-level importance sampling),
//                    backward simulation with unit stage weights
//   exact_transition exact draw from f with tau = 1 (for the general algorithm)

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nsmc/chain.hpp"
#include "nsmc/errors.hpp"
#include "nsmc/exact.hpp"
#include "nsmc/model.hpp"
#include "nsmc/random.hpp"
#include "nsmc/smc.hpp"

namespace nsmc {

// A chain-structured sequence of stage targets p_0, ..., p_{n-1} over scalar stage
// variables, with p_d / p_{d-1} depending only on (x_{d-1}, x_d), and stage proposals
// r_d(x_d | x_{d-1}).
template <class P>
concept InnerTarget = requires(const P& p, std::size_t d, double prev, double cur, Stream& s) {
  { p.stages() } -> std::convertible_to<std::size_t>;
  { p.log_increment(d, prev, cur) } -> std::convertible_to<double>;
  { p.sample_proposal(d, prev, s) } -> std::convertible_to<double>;
  { p.log_proposal(d, prev, cur) } -> std::convertible_to<double>;
};

// log p_d(x_{0:d}) from the increments.
template <InnerTarget P>
double log_stage_target(const P& target, std::size_t d, std::span<const double> prefix) {
  double acc = 0.0;
  for (std::size_t e = 0; e <= d; ++e) acc += target.log_increment(e, e > 0 ? prefix[e - 1] : 0.0, prefix[e]);
  return acc;
}

// All particles, ancestors and weights of one inner run; the auxiliary variable u.
struct InnerState {
  std::size_t stages = 0;
  std::size_t M = 0;
  std::vector<double> particles;          // [d * M + j] = x_d^j
  std::vector<std::uint32_t> ancestors;   // [d * M + j] = index into stage d-1 (d >= 1)
  std::vector<double> logw;               // [d * M + j] = log w_d^j
  std::vector<double> stage_log_norm;     // log((1/M) sum_j w_d^j), or the stage NSMC estimate
  double log_tau = 0.0;

  std::span<const double> stage_particles(std::size_t d) const { return {particles.data() + d * M, M}; }
  std::span<const double> stage_logw(std::size_t d) const { return {logw.data() + d * M, M}; }

  void allocate(std::size_t n, std::size_t m) {
    stages = n;
    M = m;
    particles.assign(n * m, 0.0);
    ancestors.assign(n * m, 0);
    logw.assign(n * m, 0.0);
    stage_log_norm.assign(n, 0.0);
    log_tau = 0.0;
  }
};

// Inner SMC over the stages. tau = prod_d (1/M) sum_j w_d^j.
template <InnerTarget P>
void inner_smc_into(const P& target, std::size_t M, Stream& stream, InnerState& st) {
  require(M >= 1, "inner_smc: M must be positive");
  const std::size_t n = target.stages();
  st.allocate(n, M);
  std::vector<double> probs(M), cdf(M);
  for (std::size_t j = 0; j < M; ++j) {
    const double x = target.sample_proposal(0, 0.0, stream);
    st.particles[j] = x;
    st.logw[j] = target.log_increment(0, 0.0, x) - target.log_proposal(0, 0.0, x);
  }
  for (std::size_t d = 0; d < n; ++d) {
    if (d > 0) {
      build_cdf(probs, cdf);
      for (std::size_t j = 0; j < M; ++j) {
        const std::size_t a = draw_from_cdf(cdf, stream.uniform());
        const double prev = st.particles[(d - 1) * M + a];
        const double x = target.sample_proposal(d, prev, stream);
        st.ancestors[d * M + j] = static_cast<std::uint32_t>(a);
        st.particles[d * M + j] = x;
        st.logw[d * M + j] = target.log_increment(d, prev, x) - target.log_proposal(d, prev, x);
      }
    }
    try {
      st.stage_log_norm[d] = normalize_logweights_into(st.stage_logw(d), probs);
    } catch (const WeightCollapse&) {
      throw InnerCollapse(d, "all stage weights are zero");
    }
    st.log_tau += st.stage_log_norm[d];
  }
}

template <InnerTarget P>
InnerState inner_smc(const P& target, std::size_t M, Stream& stream) {
  InnerState st;
  inner_smc_into(target, M, stream, st);
  return st;
}

// One trajectory traced back through the ancestry, drawn proportional to the final weights.
inline std::vector<double> empirical_draw(const InnerState& st, Stream& stream) {
  std::vector<double> probs(st.M);
  try {
    normalize_logweights_into(st.stage_logw(st.stages - 1), probs);
  } catch (const WeightCollapse&) {
    throw InnerCollapse(st.stages - 1, "empirical draw with all final weights zero");
  }
  std::size_t b = categorical_draw(probs, stream);
  std::vector<double> x(st.stages);
  for (std::size_t d = st.stages; d-- > 0;) {
    x[d] = st.particles[d * st.M + b];
    if (d > 0) b = st.ancestors[d * st.M + b];
  }
  return x;
}

// Backward simulation: final index proportional to w_{n-1}; then for d = n-2..0,
// b proportional to w_d^j p_{n-1}(x_{0:d}^j, x_{d+1:n-1}) / p_d(x_{0:d}^j), which for a
// chain reduces to w_d^j times the increment at stage d+1.
template <InnerTarget P>
std::vector<double> backward_simulate(const InnerState& st, const P& target, Stream& stream) {
  require(st.stages == target.stages(), "backward_simulate: state and target disagree on stages");
  const std::size_t n = st.stages, M = st.M;
  std::vector<double> probs(M), logits(M), x(n);
  try {
    normalize_logweights_into(st.stage_logw(n - 1), probs);
  } catch (const WeightCollapse&) {
    throw InnerCollapse(n - 1, "backward simulation with all final weights zero");
  }
  x[n - 1] = st.particles[(n - 1) * M + categorical_draw(probs, stream)];
  for (std::size_t d = n - 1; d-- > 0;) {
    for (std::size_t j = 0; j < M; ++j)
      logits[j] = st.logw[d * M + j] + target.log_increment(d + 1, st.particles[d * M + j], x[d + 1]);
    try {
      normalize_logweights_into(logits, probs);
    } catch (const WeightCollapse&) {
      throw InnerCollapse(d, "all backward weights are zero");
    }
    x[d] = st.particles[d * M + categorical_draw(probs, stream)];
  }
  return x;
}

// Stage loop run as NSMC: at stage d each of the M_outer particles runs importance
// sampling with M_inner draws from r_d; particles are resampled by those estimates and
// propagated by a weighted draw from the resampled candidates. Stage weights are set
// to one, so the result feeds backward_simulate / empirical_draw unchanged.
template <InnerTarget P>
void self_nested_smc_into(const P& target, std::size_t M_outer, std::size_t M_inner, Stream& stream, InnerState& st) {
  require(M_outer >= 1 && M_inner >= 1, "self-nested: M_outer and M_inner must be positive");
  const std::size_t n = target.stages(), M = M_outer, K = M_inner;
  st.allocate(n, M);
  std::vector<double> cand(M * K), cand_logw(M * K), stage_tau(M), probs(M), cdf(M), sub_probs(K);
  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t j = 0; j < M; ++j) {
      const double prev = d > 0 ? st.particles[(d - 1) * M + j] : 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double x = target.sample_proposal(d, prev, stream);
        cand[j * K + k] = x;
        cand_logw[j * K + k] = target.log_increment(d, prev, x) - target.log_proposal(d, prev, x);
      }
      stage_tau[j] = log_mean_exp(std::span<const double>(cand_logw.data() + j * K, K));
    }
    try {
      st.stage_log_norm[d] = normalize_logweights_into(stage_tau, probs);
    } catch (const WeightCollapse&) {
      throw InnerCollapse(d, "all stage estimates are zero");
    }
    st.log_tau += st.stage_log_norm[d];
    build_cdf(probs, cdf);
    std::vector<double> next(M);
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t a = draw_from_cdf(cdf, stream.uniform());
      normalize_logweights_into(std::span<const double>(cand_logw.data() + a * K, K), sub_probs);
      next[j] = cand[a * K + categorical_draw(sub_probs, stream)];
      st.ancestors[d * M + j] = static_cast<std::uint32_t>(a);
    }
    std::copy(next.begin(), next.end(), st.particles.begin() + static_cast<std::ptrdiff_t>(d * M));
  }
}

template <InnerTarget P>
InnerState self_nested_smc(const P& target, std::size_t M_outer, std::size_t M_inner, Stream& stream) {
  InnerState st;
  self_nested_smc_into(target, M_outer, M_inner, stream, st);
  return st;
}

// Importance sampling with M candidates of full dimension.
struct IsState {
  std::size_t M = 0;
  std::size_t dim = 0;
  std::vector<double> candidates;  // M x dim
  std::vector<double> logw;
  double log_tau = 0.0;
};

// draw(Stream&, span<double> out) samples the proposal; log_weight(span<const double>)
// returns log r(x) - log p(x) for the unnormalized target r and proposal p.
template <class Draw, class LogWeight>
IsState is_forward(Draw&& draw, LogWeight&& log_weight, std::size_t dim, std::size_t M, Stream& stream) {
  require(M >= 1, "is_inner: M must be positive");
  IsState st{M, dim, std::vector<double>(M * dim), std::vector<double>(M), 0.0};
  for (std::size_t j = 0; j < M; ++j) {
    std::span<double> x{st.candidates.data() + j * dim, dim};
    draw(stream, x);
    st.logw[j] = log_weight(std::span<const double>(x));
  }
  st.log_tau = log_mean_exp(st.logw);
  if (st.log_tau == kNegInf) throw InnerCollapse(0, "all importance weights are zero");
  return st;
}

inline std::vector<double> is_draw(const IsState& st, Stream& stream) {
  std::vector<double> probs(st.M);
  normalize_logweights_into(st.logw, probs);
  const std::size_t b = categorical_draw(probs, stream);
  return {st.candidates.begin() + static_cast<std::ptrdiff_t>(b * st.dim),
          st.candidates.begin() + static_cast<std::ptrdiff_t>((b + 1) * st.dim)};
}

struct IsResult {
  std::vector<double> x;
  double log_tau = 0.0;
};

template <class Draw, class LogWeight>
IsResult is_inner(Draw&& draw, LogWeight&& log_weight, std::size_t dim, std::size_t M, Stream& stream) {
  const IsState st = is_forward(std::forward<Draw>(draw), std::forward<LogWeight>(log_weight), dim, M, stream);
  return {is_draw(st, stream), st.log_tau};
}

// Proposal density p and unnormalized target r given separately.
template <class Draw, class LogProposal, class LogTarget>
IsResult is_inner(Draw&& draw, LogProposal&& log_p, LogTarget&& log_r, std::size_t dim, std::size_t M, Stream& stream) {
  return is_inner(std::forward<Draw>(draw), [&](std::span<const double> x) { return log_r(x) - log_p(x); }, dim, M,
                  stream);
}

enum class InnerKind { smc_backward, smc_empirical, importance, self_nested, exact_transition };
enum class IsProposal { transition, exact };

struct ProperWeightingProcedure {
  InnerKind kind = InnerKind::smc_backward;
  std::size_t M = 1;
  std::size_t M_inner = 1;  // self_nested only
  int recursion_depth = 0;  // 1 for self_nested
  StageProposal stage_proposal = StageProposal::prior;
  StageOrder order = StageOrder::natural;
  IsProposal is_proposal = IsProposal::transition;

  void validate() const {
    require(M >= 1, "procedure: M must be positive");
    if (kind == InnerKind::self_nested) {
      require(recursion_depth == 1, "procedure: self-nesting supports recursion depth 1 only");
      require(M_inner >= 1, "procedure: M_inner must be positive");
    } else {
      require(recursion_depth == 0, "procedure: recursion depth > 0 requires self_nested");
    }
  }
};

inline ProperWeightingProcedure self_nested_proc(std::size_t M_outer, std::size_t M_inner,
                                                 StageOrder order = StageOrder::natural) {
  ProperWeightingProcedure p;
  p.kind = InnerKind::self_nested;
  p.M = M_outer;
  p.M_inner = M_inner;
  p.recursion_depth = 1;
  p.order = order;
  p.validate();
  return p;
}

// Output of the forward half (eta) of an inner procedure for one outer particle.
struct InnerRun {
  GaussianChainTarget target;
  std::variant<std::monostate, InnerState, IsState> state;
  double log_tau = 0.0;
};

template <ChainStructured Model>
InnerRun inner_forward(const ProperWeightingProcedure& proc, const Model& model, std::span<const double> x_prev,
                       std::span<const double> y, std::size_t t, Stream& stream) {
  InnerRun run{model.chain_target(x_prev, y, t, proc.order, proc.stage_proposal), std::monostate{}, 0.0};
  switch (proc.kind) {
    case InnerKind::smc_backward:
    case InnerKind::smc_empirical: {
      InnerState st;
      inner_smc_into(run.target, proc.M, stream, st);
      run.log_tau = st.log_tau;
      run.state = std::move(st);
      break;
    }
    case InnerKind::self_nested: {
      InnerState st;
      self_nested_smc_into(run.target, proc.M, proc.M_inner, stream, st);
      run.log_tau = st.log_tau;
      run.state = std::move(st);
      break;
    }
    case InnerKind::importance: {
      const std::size_t n = model.state_dim();
      IsState st;
      if (proc.is_proposal == IsProposal::exact) {
        // Proposal is the normalized target itself, so every weight equals nu.
        const FfbsCache cache = ffbs_forward(model.chain_target(x_prev, y, t, StageOrder::natural, StageProposal::prior));
        st = is_forward(
            [&](Stream& s, std::span<double> out) {
              const auto x = cache.state_from(ffbs_backward(cache, s));
              std::copy(x.begin(), x.end(), out.begin());
            },
            [&](std::span<const double>) { return cache.log_nu; }, n, proc.M, stream);
      } else {
        // Proposal f, target f g: the weight is g.
        st = is_forward([&](Stream& s, std::span<double> out) { model.sample_transition(x_prev, t, s, out); },
                        [&](std::span<const double> x) { return model.log_observation(y, x); }, n, proc.M, stream);
      }
      run.log_tau = st.log_tau;
      run.state = std::move(st);
      break;
    }
    case InnerKind::exact_transition:
      run.log_tau = 0.0;
      break;
  }
  return run;
}

// kappa: draw x_t (component order) from a (possibly resampled) inner run.
template <ChainStructured Model>
void inner_draw(const ProperWeightingProcedure& proc, const Model& model, const InnerRun& run,
                std::span<const double> x_prev, std::size_t t, Stream& stream, std::span<double> x_out) {
  switch (proc.kind) {
    case InnerKind::smc_backward:
    case InnerKind::self_nested: {
      const auto z = backward_simulate(std::get<InnerState>(run.state), run.target, stream);
      run.target.to_state(z, x_out);
      break;
    }
    case InnerKind::smc_empirical: {
      const auto z = empirical_draw(std::get<InnerState>(run.state), stream);
      run.target.to_state(z, x_out);
      break;
    }
    case InnerKind::importance: {
      const auto x = is_draw(std::get<IsState>(run.state), stream);
      std::copy(x.begin(), x.end(), x_out.begin());
      break;
    }
    case InnerKind::exact_transition:
      model.sample_transition(x_prev, t, stream, x_out);
      break;
  }
}

// One properly weighted pair (x_t, log tau) for a fixed x_prev, with separate streams
// for the forward and drawing halves.
struct WeightedDraw {
  std::vector<double> x;
  double log_tau = 0.0;
};

template <ChainStructured Model>
WeightedDraw properly_weighted_draw(const ProperWeightingProcedure& proc, const Model& model,
                                    std::span<const double> x_prev, std::span<const double> y, std::size_t t,
                                    Stream& stream) {
  WeightedDraw out;
  out.x.resize(model.state_dim());
  std::optional<InnerRun> run;
  try {
    run.emplace(inner_forward(proc, model, x_prev, y, t, stream));
  } catch (const InnerCollapse&) {
    out.log_tau = kNegInf;
    return out;
  }
  out.log_tau = run->log_tau;
  inner_draw(proc, model, *run, x_prev, t, stream, out.x);
  return out;
}

namespace detail {
template <ChainStructured Model>
std::vector<InnerRun> forward_all(const ParticleSystem& sys, const Model& model, const ProperWeightingProcedure& proc,
                                  std::span<const double> y, std::size_t t, std::uint64_t seed,
                                  std::vector<double>& log_tau) {
  std::vector<InnerRun> runs;
  runs.reserve(sys.N);
  log_tau.resize(sys.N);
  for (std::size_t i = 0; i < sys.N; ++i) {
    Stream fs = substream(seed, {t, key(StreamTag::forward), i});
    try {
      runs.push_back(inner_forward(proc, model, sys.row(i), y, t, fs));
      log_tau[i] = runs.back().log_tau;
    } catch (const InnerCollapse&) {
      // tau = 0 is legal; such a particle is never selected.
      runs.push_back(InnerRun{model.chain_target(sys.row(i), y, t, proc.order, proc.stage_proposal), std::monostate{},
                              kNegInf});
      log_tau[i] = kNegInf;
    }
  }
  return runs;
}
}  // namespace detail

// One NSMC step approximating the fully adapted filter: resample by tau, propagate by
// kappa on the resampled inner state. Weights stay uniform.
template <ChainStructured Model>
void nsmc_step(ParticleSystem& sys, const Model& model, std::span<const double> y, const ProperWeightingProcedure& proc,
               std::uint64_t seed, FilterOutput* out = nullptr) {
  proc.validate();
  require(proc.kind != InnerKind::exact_transition, "nsmc_step: exact_transition is not properly weighted for the optimal proposal");
  const std::size_t t = sys.t + 1;
  const std::size_t N = sys.N, n = sys.n_x;
  std::vector<double> log_tau;
  const auto runs = detail::forward_all(sys, model, proc, y, t, seed, log_tau);
  std::vector<double> probs(N);
  double log_mean;
  try {
    log_mean = normalize_logweights_into(log_tau, probs);
  } catch (const WeightCollapse&) {
    throw WeightCollapse(t, "all inner estimates tau are zero");
  }
  Stream rs = substream(seed, {t, key(StreamTag::resample)});
  auto ancestors = multinomial_resample(probs, N, rs);
  std::vector<double> next(N * n);
  for (std::size_t i = 0; i < N; ++i) {
    Stream ks = substream(seed, {t, key(StreamTag::propagate), i});
    const std::size_t a = ancestors[i];
    inner_draw(proc, model, runs[a], sys.row(a), t, ks, std::span<double>(next.data() + i * n, n));
  }
  sys.commit(std::move(next), std::move(ancestors));
  std::fill(sys.logw.begin(), sys.logw.end(), 0.0);
  sys.log_z += log_mean;
  if (out) {
    record_moments(sys, *out);
    out->log_z_increment.push_back(log_mean);
    out->ess.push_back(ess(probs));
  }
}

template <ChainStructured Model>
FilterOutput nsmc_run(const Model& model, const Dataset& data, std::size_t N, const ProperWeightingProcedure& proc,
                      std::uint64_t seed) {
  data.validate();
  require(data.n_x == model.state_dim(), "nsmc_run: dataset width does not match model");
  FilterOutput out;
  out.method = "nsmc";
  out.n_x = data.n_x;
  auto sys = ParticleSystem::initial(N, data.n_x);
  for (std::size_t t = 1; t <= data.T; ++t) nsmc_step(sys, model, data.y(t), proc, seed, &out);
  return out;
}

// Proposal r_t of the general algorithm.
enum class GeneralProposal {
  transition,    // r_t = f; pair with exact_transition
  target_ratio,  // r_t = gamma_t / gamma_{t-1}; pair with any inner-SMC or IS procedure
};

// Adjustment multipliers nu-hat.
struct Adjustment {
  enum class Kind { unit, tau, custom };
  Kind kind = Kind::tau;
  // log nu-hat(x_prev, log tau); used when kind == custom.
  std::function<double(std::span<const double>, double)> custom;

  static Adjustment unit() { return {Kind::unit, {}}; }
  static Adjustment tau() { return {Kind::tau, {}}; }
};

// General NSMC step (auxiliary SMC with nested proposal): resample by nu-hat times the
// previous weights, propagate by kappa, and reweight by
//   w = [gamma_t / (gamma_{t-1} r_t)] * tau / nu-hat.
// Cancelling factors are dropped symbolically, so r_t = gamma_t/gamma_{t-1} with
// nu-hat = tau leaves the weights exactly uniform.
template <ChainStructured Model>
void general_nsmc_step(ParticleSystem& sys, const Model& model, std::span<const double> y,
                       const ProperWeightingProcedure& proc, GeneralProposal proposal, const Adjustment& adjustment,
                       std::uint64_t seed, FilterOutput* out = nullptr) {
  proc.validate();
  if (proposal == GeneralProposal::transition)
    require(proc.kind == InnerKind::exact_transition,
            "general_nsmc_step: transition proposal needs a procedure properly weighted for f (exact_transition)");
  else
    require(proc.kind != InnerKind::exact_transition,
            "general_nsmc_step: exact_transition is not properly weighted for the target ratio");
  require(adjustment.kind != Adjustment::Kind::custom || static_cast<bool>(adjustment.custom),
          "general_nsmc_step: custom adjustment without a function");
  const std::size_t t = sys.t + 1;
  const std::size_t N = sys.N, n = sys.n_x;
  std::vector<double> log_tau;
  const auto runs = detail::forward_all(sys, model, proc, y, t, seed, log_tau);

  std::vector<double> log_nu_hat(N, 0.0);
  if (adjustment.kind == Adjustment::Kind::tau) log_nu_hat = log_tau;
  if (adjustment.kind == Adjustment::Kind::custom)
    for (std::size_t i = 0; i < N; ++i) log_nu_hat[i] = adjustment.custom(sys.row(i), log_tau[i]);

  std::vector<double> logits(N), probs(N);
  for (std::size_t i = 0; i < N; ++i) logits[i] = sys.logw[i] + log_nu_hat[i];
  double resample_term = 0.0;
  try {
    const double a = normalize_logweights_into(logits, probs);
    if (adjustment.kind != Adjustment::Kind::unit) resample_term = a - log_mean_exp(sys.logw);
  } catch (const WeightCollapse&) {
    throw WeightCollapse(t, "all resampling weights are zero");
  }
  Stream rs = substream(seed, {t, key(StreamTag::resample)});
  auto ancestors = multinomial_resample(probs, N, rs);
  std::vector<double> next(N * n), logw(N);
  for (std::size_t i = 0; i < N; ++i) {
    Stream ks = substream(seed, {t, key(StreamTag::propagate), i});
    const std::size_t a = ancestors[i];
    std::span<double> x(next.data() + i * n, n);
    inner_draw(proc, model, runs[a], sys.row(a), t, ks, x);
    const double target_over_proposal =
        proposal == GeneralProposal::transition ? model.log_observation(y, std::span<const double>(x)) : 0.0;
    double tau_over_nu = 0.0;
    if (adjustment.kind == Adjustment::Kind::unit) tau_over_nu = log_tau[a];
    if (adjustment.kind == Adjustment::Kind::custom) tau_over_nu = log_tau[a] - log_nu_hat[a];
    logw[i] = target_over_proposal + tau_over_nu;
  }
  sys.commit(std::move(next), std::move(ancestors));
  sys.logw = std::move(logw);
  std::vector<double> w(N);
  double log_mean;
  try {
    log_mean = normalize_logweights_into(sys.logw, w);
  } catch (const WeightCollapse&) {
    throw WeightCollapse(t, "all propagated weights are zero");
  }
  sys.log_z += resample_term + log_mean;
  if (out) {
    record_moments(sys, *out);
    out->log_z_increment.push_back(resample_term + log_mean);
    out->ess.push_back(ess(w));
  }
}

template <ChainStructured Model>
FilterOutput general_nsmc_run(const Model& model, const Dataset& data, std::size_t N,
                              const ProperWeightingProcedure& proc, GeneralProposal proposal,
                              const Adjustment& adjustment, std::uint64_t seed) {
  data.validate();
  require(data.n_x == model.state_dim(), "general_nsmc_run: dataset width does not match model");
  FilterOutput out;
  out.method = "nsmc-general";
  out.n_x = data.n_x;
  auto sys = ParticleSystem::initial(N, data.n_x);
  for (std::size_t t = 1; t <= data.T; ++t) general_nsmc_step(sys, model, data.y(t), proc, proposal, adjustment, seed, &out);
  return out;
}

}  // namespace nsmc
