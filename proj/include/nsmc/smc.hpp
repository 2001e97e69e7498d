#pragma once

// Outer-level SMC machinery: log-domain weights, effective sample size,
// multinomial resampling, particle storage and the bootstrap particle filter.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nsmc/errors.hpp"
#include "nsmc/model.hpp"
#include "nsmc/random.hpp"

namespace nsmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct NormalizedWeights {
  std::vector<double> probabilities;
  double log_mean = 0.0;  // log((1/N) sum exp(logw))
};

// Max-shifted normalization. Returns log_mean; fills `probs`. Throws WeightCollapse
// (step 0) when no entry is finite.
inline double normalize_logweights_into(std::span<const double> logw, std::span<double> probs) {
  require(!logw.empty(), "normalize_logweights: empty weight vector");
  double max = kNegInf;
  for (double lw : logw) {
    if (std::isnan(lw)) throw NumericError("normalize_logweights: NaN log-weight");
    max = std::max(max, lw);
  }
  if (max == kNegInf) throw WeightCollapse(0, "all log-weights are -inf");
  if (max == std::numeric_limits<double>::infinity()) throw NumericError("normalize_logweights: +inf log-weight");
  double sum = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    probs[i] = std::exp(logw[i] - max);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return max + std::log(sum / static_cast<double>(logw.size()));
}

inline NormalizedWeights normalize_logweights(std::span<const double> logw) {
  NormalizedWeights out;
  out.probabilities.resize(logw.size());
  out.log_mean = normalize_logweights_into(logw, out.probabilities);
  return out;
}

// log((1/N) sum exp(logw)); -inf when every entry is -inf.
inline double log_mean_exp(std::span<const double> logw) {
  double max = kNegInf;
  for (double lw : logw) max = std::max(max, lw);
  if (max == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double lw : logw) sum += std::exp(lw - max);
  return max + std::log(sum / static_cast<double>(logw.size()));
}

// Carpenter et al. effective sample size, 1 / sum p_i^2.
inline double ess(std::span<const double> probabilities) {
  double s = 0.0;
  for (double p : probabilities) s += p * p;
  return 1.0 / s;
}

// Cumulative distribution with the last positive entry (and everything after it)
// pinned to exactly 1.0, so zero-probability indices are never selected.
inline void build_cdf(std::span<const double> probabilities, std::span<double> cdf) {
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    cdf[i] = acc;
    if (probabilities[i] > 0.0) last_positive = i;
  }
  for (std::size_t i = last_positive; i < cdf.size(); ++i) cdf[i] = 1.0;
}

// First index k with u < cdf[k].
inline std::size_t draw_from_cdf(std::span<const double> cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

inline std::size_t categorical_draw(std::span<const double> probabilities, Stream& stream) {
  std::vector<double> cdf(probabilities.size());
  build_cdf(probabilities, cdf);
  return draw_from_cdf(cdf, stream.uniform());
}

// `count` i.i.d. categorical draws by inverse CDF (0-based indices).
inline std::vector<std::size_t> multinomial_resample(std::span<const double> probabilities, std::size_t count,
                                                     Stream& stream) {
  require(!probabilities.empty(), "multinomial_resample: empty probabilities");
  std::vector<double> cdf(probabilities.size());
  build_cdf(probabilities, cdf);
  std::vector<std::size_t> out(count);
  for (auto& idx : out) idx = draw_from_cdf(cdf, stream.uniform());
  return out;
}

// Single uniform offset, stratified positions. Only offered for the bootstrap baseline.
inline std::vector<std::size_t> systematic_resample(std::span<const double> probabilities, std::size_t count,
                                                    Stream& stream) {
  require(!probabilities.empty() && count > 0, "systematic_resample: empty input");
  std::vector<double> cdf(probabilities.size());
  build_cdf(probabilities, cdf);
  std::vector<std::size_t> out(count);
  const double u0 = stream.uniform() / static_cast<double>(count);
  std::size_t k = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double u = u0 + static_cast<double>(i) / static_cast<double>(count);
    while (k + 1 < cdf.size() && !(u < cdf[k])) ++k;
    out[i] = k;
  }
  return out;
}

// Outer particle system. Current states plus per-step state snapshots and ancestor
// indices; full trajectories are reconstructed on demand.
struct ParticleSystem {
  std::size_t N = 0;
  std::size_t n_x = 0;
  std::size_t t = 0;
  std::vector<double> states;                     // N x n_x, row-major
  std::vector<std::vector<double>> history;       // history[k] = states at step k+1
  std::vector<std::vector<std::size_t>> ancestry;  // ancestry[k][i] indexes history[k-1]
  std::vector<double> logw;
  double log_z = 0.0;

  static ParticleSystem initial(std::size_t N, std::size_t n_x) {
    require(N >= 1, "particle system: N must be positive");
    ParticleSystem s;
    s.N = N;
    s.n_x = n_x;
    s.states.assign(N * n_x, 0.0);
    s.logw.assign(N, 0.0);
    return s;
  }

  std::span<const double> row(std::size_t i) const { return {states.data() + i * n_x, n_x}; }
  std::span<double> row(std::size_t i) { return {states.data() + i * n_x, n_x}; }

  void commit(std::vector<double> new_states, std::vector<std::size_t> ancestors) {
    states = std::move(new_states);
    history.push_back(states);
    ancestry.push_back(std::move(ancestors));
    ++t;
  }

  // x_{1:t} of particle i, t x n_x row-major.
  std::vector<double> trajectory(std::size_t i) const {
    std::vector<double> path(t * n_x);
    std::size_t idx = i;
    for (std::size_t k = t; k-- > 0;) {
      std::copy_n(history[k].begin() + static_cast<std::ptrdiff_t>(idx * n_x), n_x,
                  path.begin() + static_cast<std::ptrdiff_t>(k * n_x));
      idx = ancestry[k][idx];
    }
    return path;
  }

  void check_invariants() const {
    bool any_finite = false;
    for (double lw : logw) {
      if (std::isnan(lw)) throw NumericError("particle system: NaN log-weight");
      any_finite = any_finite || lw > kNegInf;
    }
    if (!any_finite) throw WeightCollapse(t, "all particle weights vanished");
    for (const auto& a : ancestry)
      for (auto idx : a)
        if (idx >= N) throw NumericError("particle system: ancestor index out of range");
  }
};

// Per-step filtering summaries.
struct FilterOutput {
  std::string method;
  std::size_t n_x = 0;
  std::vector<std::vector<double>> mean;  // [t-1][d]
  std::vector<std::vector<double>> var;   // [t-1][d]
  std::vector<double> log_z_increment;
  std::vector<double> ess;

  double log_z() const { return std::accumulate(log_z_increment.begin(), log_z_increment.end(), 0.0); }
  std::size_t steps() const { return mean.size(); }
};

// Appends weighted moments of the current states.
inline void record_moments(const ParticleSystem& sys, FilterOutput& out) {
  std::vector<double> w(sys.N);
  normalize_logweights_into(sys.logw, w);
  std::vector<double> m(sys.n_x, 0.0), v(sys.n_x, 0.0);
  for (std::size_t i = 0; i < sys.N; ++i) {
    const auto x = sys.row(i);
    for (std::size_t d = 0; d < sys.n_x; ++d) m[d] += w[i] * x[d];
  }
  for (std::size_t i = 0; i < sys.N; ++i) {
    const auto x = sys.row(i);
    for (std::size_t d = 0; d < sys.n_x; ++d) v[d] += w[i] * (x[d] - m[d]) * (x[d] - m[d]);
  }
  out.mean.push_back(std::move(m));
  out.var.push_back(std::move(v));
}

enum class ResamplingScheme { multinomial, systematic };

struct BootstrapOptions {
  ResamplingScheme resampling = ResamplingScheme::multinomial;
};

// One bootstrap step: resample by the previous weights, propagate through f, weight by g.
template <TargetSequence Model>
void bootstrap_step(ParticleSystem& sys, const Model& model, std::span<const double> y, std::uint64_t seed,
                    FilterOutput* out = nullptr, BootstrapOptions opts = {}) {
  const std::size_t t = sys.t + 1;
  const std::size_t N = sys.N, n = sys.n_x;
  std::vector<double> probs(N);
  normalize_logweights_into(sys.logw, probs);
  Stream rs = substream(seed, {t, key(StreamTag::resample)});
  auto ancestors = opts.resampling == ResamplingScheme::systematic ? systematic_resample(probs, N, rs)
                                                                    : multinomial_resample(probs, N, rs);
  std::vector<double> next(N * n);
  for (std::size_t i = 0; i < N; ++i) {
    Stream ps = substream(seed, {t, key(StreamTag::propagate), i});
    std::span<double> x{next.data() + i * n, n};
    model.sample_transition(sys.row(ancestors[i]), t, ps, x);
    sys.logw[i] = model.log_observation(y, x);
  }
  sys.commit(std::move(next), std::move(ancestors));
  std::vector<double> w(N);
  double log_mean;
  try {
    log_mean = normalize_logweights_into(sys.logw, w);
  } catch (const WeightCollapse&) {
    throw WeightCollapse(t, "bootstrap weights all zero");
  }
  sys.log_z += log_mean;
  if (out) {
    record_moments(sys, *out);
    out->log_z_increment.push_back(log_mean);
    out->ess.push_back(ess(w));
  }
}

template <TargetSequence Model>
FilterOutput bootstrap_pf(const Model& model, const Dataset& data, std::size_t N, std::uint64_t seed,
                          BootstrapOptions opts = {}) {
  data.validate();
  require(data.n_x == model.state_dim(), "bootstrap_pf: dataset width does not match model");
  FilterOutput out;
  out.method = "bpf";
  out.n_x = data.n_x;
  auto sys = ParticleSystem::initial(N, data.n_x);
  for (std::size_t t = 1; t <= data.T; ++t) bootstrap_step(sys, model, data.y(t), seed, &out, opts);
  return out;
}

}  // namespace nsmc
