#pragma once

// Exact inference for the linear-Gaussian models: the Kalman filter (ground truth)
// and the fully adapted particle filter built from forward filtering / backward
// sampling over the state components.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nsmc/chain.hpp"
#include "nsmc/errors.hpp"
#include "nsmc/model.hpp"
#include "nsmc/smc.hpp"

namespace nsmc {

struct KalmanBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double loglik = 0.0;  // log p(y_{1:t})
  std::size_t t = 0;    // number of observations absorbed

  // Belief before the first observation; the first step predicts from the model's initial law.
  static KalmanBelief initial(std::size_t n_x) {
    const auto n = static_cast<Eigen::Index>(n_x);
    return {Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n), 0.0, 0};
  }
};

inline KalmanBelief kalman_step(const KalmanBelief& belief, const LinearGaussianView& model, std::span<const double> y_t) {
  const auto n = belief.mean.size();
  require(static_cast<std::size_t>(n) == y_t.size(), "kalman_step: observation size mismatch");
  Eigen::VectorXd m;
  Eigen::MatrixXd p;
  if (belief.t == 0) {
    m = model.init_mean;
    p = model.init_cov;
  } else {
    m = model.a_coef * belief.mean;
    p = model.a_coef * model.a_coef * belief.cov + model.trans_cov;
  }
  const Eigen::Map<const Eigen::VectorXd> y(y_t.data(), n);
  const Eigen::VectorXd innovation = y - m;
  Eigen::MatrixXd s = p;
  s.diagonal().array() += model.obs_var;
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericError("kalman_step: innovation covariance is not SPD");
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const Eigen::VectorXd white = llt.solve(innovation);
  KalmanBelief next;
  next.loglik = belief.loglik - 0.5 * (static_cast<double>(n) * kLog2Pi + log_det + innovation.dot(white));
  // K = P S^{-1}
  const Eigen::MatrixXd gain = llt.solve(p).transpose();
  next.mean = m + gain * innovation;
  next.cov = p - gain * p;
  next.cov = 0.5 * (next.cov + next.cov.transpose());
  next.t = belief.t + 1;
  return next;
}

inline KalmanBelief kalman_step(const KalmanBelief& belief, const StssmSpec& spec, std::span<const double> y_t) {
  return kalman_step(belief, StssmModel(spec).linear_gaussian(), y_t);
}

template <ChainStructured Model>
FilterOutput kalman_filter(const Model& model, const Dataset& data) {
  data.validate();
  const auto view = model.linear_gaussian();
  FilterOutput out;
  out.method = "kalman";
  out.n_x = data.n_x;
  auto belief = KalmanBelief::initial(data.n_x);
  for (std::size_t t = 1; t <= data.T; ++t) {
    const double before = belief.loglik;
    belief = kalman_step(belief, view, data.y(t));
    out.mean.emplace_back(belief.mean.data(), belief.mean.data() + belief.mean.size());
    out.var.emplace_back(data.n_x);
    for (std::size_t d = 0; d < data.n_x; ++d) out.var.back()[d] = belief.cov(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    out.log_z_increment.push_back(belief.loglik - before);
    out.ess.push_back(1.0);
  }
  return out;
}

// Forward pass over the components of one time step's target. `log_nu` is the exact
// one-step normalizer: the sum of the per-component incremental log-normalizers.
struct FfbsCache {
  std::vector<GaussianMessage> messages;
  double log_nu = 0.0;
  GaussianChainTarget target;

  // x_t in component order from a backward draw v (stage order).
  std::vector<double> state_from(std::span<const double> v) const {
    const std::size_t n = v.size();
    std::vector<double> stage(n), x(n);
    for (std::size_t d = 0; d < n; ++d) stage[d] = target.offset(d) + v[d];
    target.to_state(stage, x);
    return x;
  }
};

inline FfbsCache ffbs_forward(const GaussianChainTarget& target) {
  const std::size_t n = target.stages();
  std::vector<double> ytil(n);
  for (std::size_t d = 0; d < n; ++d) ytil[d] = target.obs(d) - target.offset(d);
  FfbsCache cache{std::vector<GaussianMessage>(n), 0.0, target};
  chain_forward(target.prior().factor, ytil, target.obs_var(), cache.messages);
  for (const auto& msg : cache.messages) cache.log_nu += msg.log_scale;
  return cache;
}

template <ChainStructured Model>
FfbsCache ffbs_forward(const Model& model, std::span<const double> x_prev, std::span<const double> y_t, std::size_t t = 2) {
  return ffbs_forward(model.chain_target(x_prev, y_t, t, StageOrder::natural, StageProposal::prior));
}

inline FfbsCache ffbs_forward(const StssmSpec& spec, std::span<const double> x_prev, std::span<const double> y_t) {
  return ffbs_forward(StssmModel(spec), x_prev, y_t);
}

// Exact draw of the noise v (stage order) from the one-step optimal proposal.
inline std::vector<double> ffbs_backward(const FfbsCache& cache, Stream& stream) {
  std::vector<double> v(cache.messages.size());
  chain_backward(cache.target.prior().factor, cache.messages, stream, v);
  return v;
}

// One fully adapted step: resample by nu, propagate by the exact optimal proposal.
template <ChainStructured Model>
void fapf_step(ParticleSystem& sys, const Model& model, std::span<const double> y, std::uint64_t seed,
               FilterOutput* out = nullptr) {
  const std::size_t t = sys.t + 1;
  const std::size_t N = sys.N, n = sys.n_x;
  std::vector<FfbsCache> caches;
  caches.reserve(N);
  std::vector<double> log_nu(N);
  for (std::size_t i = 0; i < N; ++i) {
    caches.push_back(ffbs_forward(model, sys.row(i), y, t));
    log_nu[i] = caches.back().log_nu;
  }
  std::vector<double> probs(N);
  double log_mean;
  try {
    log_mean = normalize_logweights_into(log_nu, probs);
  } catch (const WeightCollapse&) {
    throw WeightCollapse(t, "all adjustment multipliers nu are zero");
  }
  Stream rs = substream(seed, {t, key(StreamTag::resample)});
  auto ancestors = multinomial_resample(probs, N, rs);
  std::vector<double> next(N * n);
  for (std::size_t i = 0; i < N; ++i) {
    Stream ps = substream(seed, {t, key(StreamTag::propagate), i});
    const auto& cache = caches[ancestors[i]];
    const auto x = cache.state_from(ffbs_backward(cache, ps));
    std::copy(x.begin(), x.end(), next.begin() + static_cast<std::ptrdiff_t>(i * n));
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
FilterOutput fapf_run(const Model& model, const Dataset& data, std::size_t N, std::uint64_t seed) {
  data.validate();
  require(data.n_x == model.state_dim(), "fapf_run: dataset width does not match model");
  FilterOutput out;
  out.method = "fapf";
  out.n_x = data.n_x;
  auto sys = ParticleSystem::initial(N, data.n_x);
  for (std::size_t t = 1; t <= data.T; ++t) fapf_step(sys, model, data.y(t), seed, &out);
  return out;
}

}  // namespace nsmc
