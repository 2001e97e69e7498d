#pragma once

// Dense Gaussian reference computations. They share no code with the chain recursions
// or the Kalman filter: covariances come from dense inverses and every quantity from
// conditioning one joint Gaussian.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "nsmc/chain.hpp"
#include "nsmc/errors.hpp"
#include "nsmc/model.hpp"

namespace nsmc::oracle {

inline Eigen::MatrixXd dense_precision(const TridiagPrecision& q) {
  const auto n = static_cast<Eigen::Index>(q.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = q.diag[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = q.offdiag[static_cast<std::size_t>(i)];
  return m;
}

inline Eigen::MatrixXd dense_covariance(const TridiagPrecision& q) {
  return dense_precision(q).inverse();
}

inline double log_mvn_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const Eigen::VectorXd r = x - mean;
  const double quad = r.dot(ldlt.solve(r));
  const double log_det = ldlt.vectorD().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det + quad);
}

// x ~ N(prior_mean, prior_cov), y = x + e, e ~ N(0, obs_var I): evidence and posterior.
struct GaussianPosterior {
  double log_evidence = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline GaussianPosterior condition(const Eigen::VectorXd& prior_mean, const Eigen::MatrixXd& prior_cov,
                                   const Eigen::VectorXd& y, double obs_var) {
  const auto n = prior_mean.size();
  const Eigen::MatrixXd s = prior_cov + obs_var * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd s_inv = s.inverse();
  GaussianPosterior p;
  p.log_evidence = log_mvn_pdf(y, prior_mean, s);
  p.mean = prior_mean + prior_cov * s_inv * (y - prior_mean);
  p.cov = prior_cov - prior_cov * s_inv * prior_cov;
  p.cov = 0.5 * (p.cov + p.cov.transpose());
  return p;
}

// One-step target f(x | x_prev) g(y | x) of the chain model: nu and the optimal proposal.
inline GaussianPosterior one_step(const StssmSpec& spec, std::span<const double> x_prev, std::span<const double> y,
                                  std::size_t t = 2) {
  const auto n = static_cast<Eigen::Index>(spec.n_x);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  if (t > 1)
    for (Eigen::Index d = 0; d < n; ++d) mean(d) = spec.a_coef * x_prev[static_cast<std::size_t>(d)];
  const Eigen::VectorXd yy = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  return condition(mean, dense_covariance(spec.noise_precision), yy, spec.obs_var);
}

// Linear-Gaussian model in dense form: x_1 ~ N(m0, P0), x_t = a x_{t-1} + N(0, S).
struct DenseLgss {
  double a = 0.0;
  Eigen::VectorXd m0;
  Eigen::MatrixXd P0;
  Eigen::MatrixXd S;
  double obs_var = 1.0;

  static DenseLgss from(const StssmSpec& spec) {
    const Eigen::MatrixXd S = dense_covariance(spec.noise_precision);
    return {spec.a_coef, Eigen::VectorXd::Zero(S.rows()), S, S, spec.obs_var};
  }

  static DenseLgss from(const IndependentSsmSpec& spec) {
    const auto n = static_cast<Eigen::Index>(spec.n_x);
    const auto& s = spec.scalar;
    return {s.a_coef, Eigen::VectorXd::Constant(n, s.init_mean), s.init_var * Eigen::MatrixXd::Identity(n, n),
            s.trans_var * Eigen::MatrixXd::Identity(n, n), s.obs_var};
  }

  // Prior mean and covariance of the stacked x_{1:T}.
  void joint_prior(std::size_t T, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) const {
    const auto n = m0.size();
    const auto TT = static_cast<Eigen::Index>(T);
    // x = mean + L w, w = (w_1..w_T) independent with covariances P0, S, ..., S.
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(TT * n, TT * n);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(TT * n, TT * n);
    mean.resize(TT * n);
    for (Eigen::Index t = 0; t < TT; ++t) {
      mean.segment(t * n, n) = std::pow(a, static_cast<double>(t)) * m0;
      W.block(t * n, t * n, n, n) = t == 0 ? P0 : S;
      for (Eigen::Index s = 0; s <= t; ++s)
        L.block(t * n, s * n, n, n) = std::pow(a, static_cast<double>(t - s)) * Eigen::MatrixXd::Identity(n, n);
    }
    cov = L * W * L.transpose();
  }

  // Joint posterior of x_{1:T} and log p(y_{1:T}).
  GaussianPosterior posterior(const Dataset& data, std::size_t T) const {
    require(T <= data.T && data.n_x == static_cast<std::size_t>(m0.size()), "oracle: dataset mismatch");
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    joint_prior(T, mean, cov);
    Eigen::VectorXd y(static_cast<Eigen::Index>(T * data.n_x));
    for (std::size_t i = 0; i < T * data.n_x; ++i) y(static_cast<Eigen::Index>(i)) = data.observations[i];
    return condition(mean, cov, y, obs_var);
  }
};

}  // namespace nsmc::oracle
