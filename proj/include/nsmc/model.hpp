#pragma once

// Sequential models. Every model here is a Markov state space model with identity
// observation map,
//   x_1 ~ mu,  x_t | x_{t-1} ~ f(. | x_{t-1}),  y_t | x_t ~ N(x_t, obs_var I),
// exposed through log-densities only. Filters pass x_prev = 0 at t = 1.

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsmc/chain.hpp"
#include "nsmc/errors.hpp"
#include "nsmc/random.hpp"

namespace nsmc {

// Linear-Gaussian spatio-temporal model: x_t = a x_{t-1} + v_t, v_t ~ N(0, Q^{-1}),
// with x_1 = v_1.
struct StssmSpec {
  std::size_t n_x = 1;
  double a_coef = 0.5;
  TridiagPrecision noise_precision;
  double obs_var = 1.0;

  void validate() const {
    require(n_x >= 1, "stssm: n_x must be positive");
    require(std::isfinite(a_coef), "stssm: a_coef must be finite");
    require(std::isfinite(obs_var) && obs_var > 0.0, "stssm: obs_var must be positive");
    noise_precision.validate();
    require(noise_precision.size() == n_x, "stssm: noise precision size must equal n_x");
  }
};

inline StssmSpec make_stssm(std::size_t n_x, double a_coef, double tau, double lambda, double obs_var) {
  StssmSpec s{n_x, a_coef, chain_precision(tau, lambda, n_x), obs_var};
  s.validate();
  return s;
}

// One-dimensional linear-Gaussian SSM.
struct ScalarLgss {
  double init_mean = 0.0;
  double init_var = 1.0;
  double a_coef = 0.5;
  double trans_var = 1.0;
  double obs_var = 1.0;

  void validate() const {
    require(std::isfinite(init_mean), "scalar model: init_mean must be finite");
    require(init_var > 0.0 && trans_var > 0.0 && obs_var > 0.0,
            "scalar model: variances must be positive");
    require(std::isfinite(a_coef), "scalar model: a_coef must be finite");
  }
};

// n_x independent copies of a scalar model.
struct IndependentSsmSpec {
  std::size_t n_x = 1;
  ScalarLgss scalar;

  void validate() const {
    require(n_x >= 1, "independent ssm: n_x must be positive");
    scalar.validate();
  }
};

struct Dataset {
  std::size_t T = 0;
  std::size_t n_x = 0;
  std::vector<double> observations;           // T x n_x, row-major
  std::optional<std::vector<double>> latent;  // T x n_x, row-major
  std::uint64_t seed = 0;

  // Row for time index t in 1..T.
  std::span<const double> y(std::size_t t) const { return {observations.data() + (t - 1) * n_x, n_x}; }
  std::span<const double> x(std::size_t t) const { return {latent->data() + (t - 1) * n_x, n_x}; }

  void validate() const {
    require(T >= 1 && n_x >= 1, "dataset: empty");
    require(observations.size() == T * n_x, "dataset: observations must be T x n_x");
    require(!latent || latent->size() == T * n_x, "dataset: latent must be T x n_x");
  }
};

// Dense description used by the Kalman filter.
struct LinearGaussianView {
  double a_coef = 0.0;
  Eigen::MatrixXd trans_cov;
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;
  double obs_var = 1.0;
};

inline double log_observation_density(std::span<const double> y, std::span<const double> x, double obs_var) {
  double acc = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) acc += log_normal_pdf(y[d], x[d], obs_var);
  return acc;
}

inline Eigen::MatrixXd chain_covariance(const TridiagPrecision& q) {
  const std::size_t n = q.size();
  Eigen::MatrixXd cov(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const auto col = tridiag_solve(q, e);
    for (std::size_t i = 0; i < n; ++i) cov(i, j) = col[i];
    e[j] = 0.0;
  }
  return 0.5 * (cov + cov.transpose());
}

class StssmModel {
 public:
  explicit StssmModel(StssmSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    prior_ = ChainPrior::make(spec_.noise_precision);
    prior_rev_ = ChainPrior::make(spec_.noise_precision.reversed());
  }

  const StssmSpec& spec() const { return spec_; }
  std::size_t state_dim() const { return spec_.n_x; }
  double obs_var() const { return spec_.obs_var; }
  const ChainPrior& noise_prior() const { return *prior_; }

  double log_transition(std::span<const double> x_prev, std::span<const double> x, std::size_t t) const {
    std::vector<double> v(x.begin(), x.end());
    if (t > 1)
      for (std::size_t d = 0; d < v.size(); ++d) v[d] -= spec_.a_coef * x_prev[d];
    return -prior_->log_normalizer - 0.5 * spec_.noise_precision.quadratic_form(v);
  }

  void sample_transition(std::span<const double> x_prev, std::size_t t, Stream& stream, std::span<double> out) const {
    sample_gmrf_chain(prior_->factor, stream, out);
    if (t > 1)
      for (std::size_t d = 0; d < out.size(); ++d) out[d] += spec_.a_coef * x_prev[d];
  }

  double log_observation(std::span<const double> y, std::span<const double> x) const {
    return log_observation_density(y, x, spec_.obs_var);
  }

  // Unnormalized f(x_t | x_prev) g(y_t | x_t) over x_t, in the requested stage order.
  GaussianChainTarget chain_target(std::span<const double> x_prev, std::span<const double> y, std::size_t t,
                                   StageOrder order = StageOrder::natural,
                                   StageProposal proposal = StageProposal::prior) const {
    std::vector<double> offset(spec_.n_x, 0.0);
    if (t > 1)
      for (std::size_t d = 0; d < spec_.n_x; ++d) offset[d] = spec_.a_coef * x_prev[d];
    const bool rev = order == StageOrder::reversed;
    return GaussianChainTarget(rev ? prior_rev_ : prior_, std::move(offset), std::vector<double>(y.begin(), y.end()),
                               spec_.obs_var, rev, proposal);
  }

  LinearGaussianView linear_gaussian() const {
    LinearGaussianView v;
    v.a_coef = spec_.a_coef;
    v.trans_cov = chain_covariance(spec_.noise_precision);
    v.init_mean = Eigen::VectorXd::Zero(spec_.n_x);
    v.init_cov = v.trans_cov;
    v.obs_var = spec_.obs_var;
    return v;
  }

 private:
  StssmSpec spec_;
  std::shared_ptr<const ChainPrior> prior_;
  std::shared_ptr<const ChainPrior> prior_rev_;
};

class IndependentSsmModel {
 public:
  explicit IndependentSsmModel(IndependentSsmSpec spec) : spec_(spec) {
    spec_.validate();
    const std::size_t n = spec_.n_x;
    init_prior_ = ChainPrior::make({std::vector<double>(n, 1.0 / spec_.scalar.init_var), std::vector<double>(n - 1, 0.0)});
    trans_prior_ = ChainPrior::make({std::vector<double>(n, 1.0 / spec_.scalar.trans_var), std::vector<double>(n - 1, 0.0)});
  }

  const IndependentSsmSpec& spec() const { return spec_; }
  std::size_t state_dim() const { return spec_.n_x; }
  double obs_var() const { return spec_.scalar.obs_var; }

  double log_transition(std::span<const double> x_prev, std::span<const double> x, std::size_t t) const {
    const auto& s = spec_.scalar;
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      acc += t == 1 ? log_normal_pdf(x[d], s.init_mean, s.init_var)
                    : log_normal_pdf(x[d], s.a_coef * x_prev[d], s.trans_var);
    }
    return acc;
  }

  void sample_transition(std::span<const double> x_prev, std::size_t t, Stream& stream, std::span<double> out) const {
    const auto& s = spec_.scalar;
    for (std::size_t d = 0; d < out.size(); ++d) {
      out[d] = t == 1 ? stream.normal(s.init_mean, std::sqrt(s.init_var))
                      : stream.normal(s.a_coef * x_prev[d], std::sqrt(s.trans_var));
    }
  }

  double log_observation(std::span<const double> y, std::span<const double> x) const {
    return log_observation_density(y, x, spec_.scalar.obs_var);
  }

  GaussianChainTarget chain_target(std::span<const double> x_prev, std::span<const double> y, std::size_t t,
                                   StageOrder order = StageOrder::natural,
                                   StageProposal proposal = StageProposal::prior) const {
    const auto& s = spec_.scalar;
    std::vector<double> offset(spec_.n_x, s.init_mean);
    if (t > 1)
      for (std::size_t d = 0; d < spec_.n_x; ++d) offset[d] = s.a_coef * x_prev[d];
    return GaussianChainTarget(t == 1 ? init_prior_ : trans_prior_, std::move(offset),
                               std::vector<double>(y.begin(), y.end()), s.obs_var, order == StageOrder::reversed,
                               proposal);
  }

  LinearGaussianView linear_gaussian() const {
    const auto& s = spec_.scalar;
    const auto n = static_cast<Eigen::Index>(spec_.n_x);
    LinearGaussianView v;
    v.a_coef = s.a_coef;
    v.trans_cov = s.trans_var * Eigen::MatrixXd::Identity(n, n);
    v.init_mean = Eigen::VectorXd::Constant(n, s.init_mean);
    v.init_cov = s.init_var * Eigen::MatrixXd::Identity(n, n);
    v.obs_var = s.obs_var;
    return v;
  }

  // Same model as an StssmSpec, when the initial law is the transition noise law.
  std::optional<StssmSpec> as_stssm() const {
    const auto& s = spec_.scalar;
    if (s.init_mean != 0.0 || s.init_var != s.trans_var) return std::nullopt;
    return make_stssm(spec_.n_x, s.a_coef, 1.0 / s.trans_var, 0.0, s.obs_var);
  }

 private:
  IndependentSsmSpec spec_;
  std::shared_ptr<const ChainPrior> init_prior_;
  std::shared_ptr<const ChainPrior> trans_prior_;
};

// What the generic outer filters need from a model.
template <class M>
concept TargetSequence = requires(const M& m, std::span<const double> xp, std::span<const double> x,
                                  std::span<const double> y, std::size_t t, Stream& s, std::span<double> out) {
  { m.state_dim() } -> std::convertible_to<std::size_t>;
  { m.log_transition(xp, x, t) } -> std::convertible_to<double>;
  m.sample_transition(xp, t, s, out);
  { m.log_observation(y, x) } -> std::convertible_to<double>;
};

// Models whose one-step target f(x_t|x_{t-1}) g(y_t|x_t) is a Gaussian chain over components.
template <class M>
concept ChainStructured = TargetSequence<M> && requires(const M& m, std::span<const double> xp,
                                                        std::span<const double> y, std::size_t t) {
  { m.chain_target(xp, y, t, StageOrder::natural, StageProposal::prior) } -> std::same_as<GaussianChainTarget>;
  { m.linear_gaussian() } -> std::same_as<LinearGaussianView>;
};

namespace detail {
template <TargetSequence M>
Dataset simulate_with(const M& model, std::size_t T, std::uint64_t seed, bool replicate_first) {
  require(T >= 1, "simulate: T must be positive");
  const std::size_t n = model.state_dim();
  Stream stream = substream(seed, {key(StreamTag::simulate)});
  Dataset data;
  data.T = T;
  data.n_x = n;
  data.seed = seed;
  data.observations.resize(T * n);
  data.latent = std::vector<double>(T * n);
  const double sd = std::sqrt(model.obs_var());
  std::vector<double> prev(n, 0.0), cur(n, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    model.sample_transition(prev, t, stream, cur);
    double* y = data.observations.data() + (t - 1) * n;
    double* x = data.latent->data() + (t - 1) * n;
    for (std::size_t d = 0; d < n; ++d) x[d] = cur[d];
    if (replicate_first) {
      const double shared = cur[0] + sd * stream.normal();
      for (std::size_t d = 0; d < n; ++d) y[d] = shared;
    } else {
      for (std::size_t d = 0; d < n; ++d) y[d] = cur[d] + sd * stream.normal();
    }
    std::swap(prev, cur);
  }
  return data;
}
}  // namespace detail

inline Dataset simulate(const StssmSpec& spec, std::size_t T, std::uint64_t seed) {
  return detail::simulate_with(StssmModel(spec), T, seed, false);
}

// Observations follow the replicated convention y_{t,d} = y_{t,1}.
inline Dataset simulate(const IndependentSsmSpec& spec, std::size_t T, std::uint64_t seed) {
  return detail::simulate_with(IndependentSsmModel(spec), T, seed, true);
}

}  // namespace nsmc
