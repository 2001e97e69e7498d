#pragma once

// Asymptotic variances of fully adapted SMC and NSMC for phi = sum_d x_{t,d} on n_x
// independent copies of a scalar linear-Gaussian model, with the prior transition as
// stage proposal.
//
// Every constant is an integral of the form
//   int pi_t(z)^2 / rho(z) h(z)^k dz
// over one scalar z (x_s for the plain constants, x_{s+1} for the tilde ones), where
// rho is the filtering law pi_s(x_s) or the predictive law of x_{s+1}, and
// h(z) = E_{pi_t}[x_t | z] - E_{pi_t}[x_t] is affine in z. Centring h makes the
// constants valid without assuming a zero posterior mean; with a zero-mean posterior
// they coincide with the uncentred definitions.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nsmc/chain.hpp"
#include "nsmc/errors.hpp"
#include "nsmc/model.hpp"

namespace nsmc {

struct VarianceConstants {
  std::size_t t = 0;
  double A_t = 0.0;
  // Indexed by s = 0..t-1.
  std::vector<double> A, A_tilde, B, B_tilde, C, C_tilde;
};

enum class QuadratureMethod { closed_form, gauss_hermite };

struct QuadratureSpec {
  QuadratureMethod method = QuadratureMethod::closed_form;
  double rel_tol = 1e-6;
  std::size_t max_order = 512;
};

// Marginal filtering, predictive and smoothing laws of a scalar model given y_{1:t}.
struct ScalarMarginals {
  // All indexed by s = 1..t (entry 0 unused).
  std::vector<double> pred_mean, pred_var;      // law of x_s given y_{1:s-1}; s = 1 is the initial law
  std::vector<double> filt_mean, filt_var;      // x_s given y_{1:s}
  std::vector<double> smooth_mean, smooth_var;  // x_s given y_{1:t}
  std::vector<double> beta;                     // Cov(x_s, x_t | y_{1:t}) / Var(x_s | y_{1:t})
};

inline ScalarMarginals scalar_marginals(const ScalarLgss& m, std::span<const double> y, std::size_t t) {
  m.validate();
  require(t >= 1 && y.size() >= t, "scalar_marginals: need t >= 1 observations");
  ScalarMarginals r;
  for (auto* v : {&r.pred_mean, &r.pred_var, &r.filt_mean, &r.filt_var, &r.smooth_mean, &r.smooth_var, &r.beta})
    v->assign(t + 1, 0.0);
  for (std::size_t s = 1; s <= t; ++s) {
    if (s == 1) {
      r.pred_mean[s] = m.init_mean;
      r.pred_var[s] = m.init_var;
    } else {
      r.pred_mean[s] = m.a_coef * r.filt_mean[s - 1];
      r.pred_var[s] = m.a_coef * m.a_coef * r.filt_var[s - 1] + m.trans_var;
    }
    const double gain = r.pred_var[s] / (r.pred_var[s] + m.obs_var);
    r.filt_mean[s] = r.pred_mean[s] + gain * (y[s - 1] - r.pred_mean[s]);
    r.filt_var[s] = r.pred_var[s] * m.obs_var / (r.pred_var[s] + m.obs_var);
  }
  r.smooth_mean[t] = r.filt_mean[t];
  r.smooth_var[t] = r.filt_var[t];
  r.beta[t] = 1.0;
  double cov_with_t = r.smooth_var[t];
  for (std::size_t s = t - 1; s >= 1; --s) {
    const double J = r.filt_var[s] * m.a_coef / r.pred_var[s + 1];
    r.smooth_mean[s] = r.filt_mean[s] + J * (r.smooth_mean[s + 1] - r.pred_mean[s + 1]);
    r.smooth_var[s] = r.filt_var[s] + J * J * (r.smooth_var[s + 1] - r.pred_var[s + 1]);
    cov_with_t *= J;
    r.beta[s] = cov_with_t / r.smooth_var[s];
  }
  return r;
}

// I_k = int N(z; mu1, v1)^2 / N(z; mu2, v2) (z - c)^k dz for k = 0, 1, 2.
struct RatioMoments {
  double i0 = 0.0, i1 = 0.0, i2 = 0.0;
};

inline RatioMoments ratio_moments_closed(double mu1, double v1, double mu2, double v2, double c,
                                         const std::string& name) {
  const double P = 2.0 / v1 - 1.0 / v2;
  if (!(P > 0.0)) throw DomainError(name + " diverges: the squared target has heavier tails than the reference law");
  const double mu_star = (2.0 * mu1 / v1 - mu2 / v2) / P;
  const double K = 2.0 * mu1 * mu1 / v1 - mu2 * mu2 / v2 - P * mu_star * mu_star;
  const double log_i0 = -std::log(2.0 * std::numbers::pi * v1) + 0.5 * std::log(2.0 * std::numbers::pi * v2) +
                        0.5 * std::log(2.0 * std::numbers::pi / P) - 0.5 * K;
  RatioMoments r;
  r.i0 = std::exp(log_i0);
  const double shift = mu_star - c;
  r.i1 = r.i0 * shift;
  r.i2 = r.i0 * (1.0 / P + shift * shift);
  return r;
}

// Probabilists' Gauss-Hermite rule (weight N(0,1)) by Golub-Welsch.
struct GaussHermiteRule {
  std::vector<double> nodes, weights;

  static GaussHermiteRule make(std::size_t n) {
    require(n >= 1, "gauss_hermite: order must be positive");
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index k = 1; k < m; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussHermiteRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (Eigen::Index k = 0; k < m; ++k) {
      r.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
      const double v0 = es.eigenvectors()(0, k);
      r.weights[static_cast<std::size_t>(k)] = v0 * v0;
    }
    return r;
  }
};

// Same integrals by quadrature against N(mu1, v1/2), the normalized shape of the squared
// numerator, doubling the order until every moment changes by less than rel_tol.
inline RatioMoments ratio_moments_quadrature(double mu1, double v1, double mu2, double v2, double c,
                                             const std::string& name, const QuadratureSpec& spec) {
  if (!(2.0 / v1 - 1.0 / v2 > 0.0))
    throw DomainError(name + " diverges: the squared target has heavier tails than the reference law");
  const double sd = std::sqrt(0.5 * v1);
  // N(z; mu1, v1)^2 = N(z; mu1, v1/2) / (2 sqrt(pi v1))
  const double log_scale = -std::log(2.0 * std::sqrt(std::numbers::pi * v1));
  const auto eval = [&](std::size_t n) {
    const auto rule = GaussHermiteRule::make(n);
    RatioMoments r;
    for (std::size_t k = 0; k < n; ++k) {
      const double z = mu1 + sd * rule.nodes[k];
      const double f = rule.weights[k] * std::exp(log_scale - log_normal_pdf(z, mu2, v2));
      r.i0 += f;
      r.i1 += f * (z - c);
      r.i2 += f * (z - c) * (z - c);
    }
    return r;
  };
  const auto close = [&](double a, double b) { return std::abs(a - b) <= spec.rel_tol * std::max(std::abs(b), 1e-300); };
  RatioMoments prev = eval(8);
  for (std::size_t n = 16; n <= spec.max_order; n *= 2) {
    const RatioMoments cur = eval(n);
    // i1 may vanish by symmetry; compare it on the scale of the other moments.
    const double i1_scale = std::max(std::abs(cur.i1), std::sqrt(std::abs(cur.i0 * cur.i2)));
    if (close(cur.i0, prev.i0) && close(cur.i2, prev.i2) && std::abs(cur.i1 - prev.i1) <= spec.rel_tol * i1_scale)
      return cur;
    prev = cur;
  }
  throw NumericError(name + ": Gauss-Hermite quadrature did not reach the requested tolerance");
}

inline RatioMoments ratio_moments(double mu1, double v1, double mu2, double v2, double c, const std::string& name,
                                  const QuadratureSpec& spec) {
  return spec.method == QuadratureMethod::closed_form ? ratio_moments_closed(mu1, v1, mu2, v2, c, name)
                                                      : ratio_moments_quadrature(mu1, v1, mu2, v2, c, name, spec);
}

// Constants for horizon t given observations y_1..y_t of one coordinate.
inline VarianceConstants compute_constants(const ScalarLgss& model, std::span<const double> y, std::size_t t,
                                           const QuadratureSpec& spec = {}) {
  const ScalarMarginals mg = scalar_marginals(model, y, t);
  VarianceConstants k;
  k.t = t;
  k.A_t = mg.filt_var[t];
  for (auto* v : {&k.A, &k.A_tilde, &k.B, &k.B_tilde, &k.C, &k.C_tilde}) v->assign(t, 0.0);
  k.B[0] = 1.0;
  for (std::size_t s = 0; s < t; ++s) {
    const std::string tag = "[s=" + std::to_string(s) + "]";
    if (s >= 1) {
      const auto r = ratio_moments(mg.smooth_mean[s], mg.smooth_var[s], mg.filt_mean[s], mg.filt_var[s],
                                   mg.smooth_mean[s], "B" + tag, spec);
      const double b = mg.beta[s];
      k.A[s] = b * b * r.i2;
      k.B[s] = r.i0;
      k.C[s] = b * r.i1;
    }
    const std::size_t u = s + 1;
    const auto r = ratio_moments(mg.smooth_mean[u], mg.smooth_var[u], mg.pred_mean[u], mg.pred_var[u],
                                 mg.smooth_mean[u], "B_tilde" + tag, spec);
    const double b = mg.beta[u];
    k.A_tilde[s] = b * b * r.i2;
    k.B_tilde[s] = r.i0;
    k.C_tilde[s] = b * r.i1;
  }
  return k;
}

inline double sigma_fa(const VarianceConstants& k, std::size_t n_x, std::size_t t) {
  require(n_x >= 1, "sigma_fa: n_x must be positive");
  require(t == k.t, "sigma_fa: constants were computed for a different horizon");
  const double n = static_cast<double>(n_x);
  double sigma = n * k.A_t;
  for (std::size_t s = 1; s < t; ++s) {
    sigma += n * std::pow(k.B[s], n - 1.0) * k.A[s];
    if (n_x >= 2) sigma += n * (n - 1.0) * std::pow(k.B[s], n - 2.0) * k.C[s] * k.C[s];
  }
  return sigma;
}

inline double sigma_nsmc(const VarianceConstants& k, std::size_t n_x, std::size_t t, double M) {
  require(n_x >= 1, "sigma_nsmc: n_x must be positive");
  require(t == k.t, "sigma_nsmc: constants were computed for a different horizon");
  if (!(M >= 2.0)) throw DomainError("sigma_nsmc: M must be at least 2 (the formula divides by M - 1)");
  const double n = static_cast<double>(n_x);
  const double shrink = 1.0 - 1.0 / M;
  double sigma = n * k.A_t;
  for (std::size_t s = 0; s < t; ++s) {
    const double inflate = 1.0 + k.B_tilde[s] / (k.B[s] * (M - 1.0));
    const double a = k.A[s] + (k.A_tilde[s] - k.A[s]) / M;
    sigma += n * std::pow(k.B[s], n - 1.0) * a * std::pow(shrink * inflate, n - 1.0);
    if (n_x >= 2) {
      const double c = k.C[s] + (k.C_tilde[s] - k.C[s]) / M;
      sigma += n * (n - 1.0) * std::pow(k.B[s], n - 2.0) * c * c * std::pow(shrink * inflate, n - 2.0);
    }
  }
  return sigma;
}

struct VarianceCurvePoint {
  double M = 0.0;
  double sigma_m = 0.0;
  double sigma_fa = 0.0;
};

inline std::vector<VarianceCurvePoint> variance_curve(const VarianceConstants& k, std::size_t n_x,
                                                      std::span<const double> M_grid) {
  std::vector<VarianceCurvePoint> out;
  const double fa = sigma_fa(k, n_x, k.t);
  for (double M : M_grid) out.push_back({M, sigma_nsmc(k, n_x, k.t, M), fa});
  return out;
}

inline void write_variance_curve(std::ostream& os, std::span<const VarianceCurvePoint> curve) {
  os << "M,sigma_nsmc,sigma_fa\n";
  const auto prec = os.precision(17);
  for (const auto& p : curve) os << p.M << ',' << p.sigma_m << ',' << p.sigma_fa << '\n';
  os.precision(prec);
}

}  // namespace nsmc
