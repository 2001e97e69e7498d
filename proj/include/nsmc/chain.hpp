#pragma once

// Gaussian chains: tridiagonal precisions, their directed factorization, scalar
// forward filtering / backward sampling over components, and the stage-wise
// target used by the inner samplers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nsmc/errors.hpp"
#include "nsmc/random.hpp"

namespace nsmc {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kVarianceFloor = 1e-300;

inline double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

// Symmetric tridiagonal precision matrix of a chain GMRF.
struct TridiagPrecision {
  std::vector<double> diag;
  std::vector<double> offdiag;  // entry i couples components i and i+1

  std::size_t size() const { return diag.size(); }

  void validate() const {
    require(!diag.empty(), "tridiagonal precision must have at least one component");
    require(offdiag.size() + 1 == diag.size(),
            "tridiagonal precision: offdiag must have length n-1 (got " +
                std::to_string(offdiag.size()) + " for n=" + std::to_string(diag.size()) + ")");
    for (double d : diag) require(std::isfinite(d) && d > 0.0, "tridiagonal precision: diagonal must be positive");
    for (double o : offdiag) require(std::isfinite(o), "tridiagonal precision: offdiag must be finite");
  }

  // v' Q v
  double quadratic_form(std::span<const double> v) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < diag.size(); ++i) acc += diag[i] * v[i] * v[i];
    for (std::size_t i = 0; i < offdiag.size(); ++i) acc += 2.0 * offdiag[i] * v[i] * v[i + 1];
    return acc;
  }

  TridiagPrecision reversed() const {
    return {std::vector<double>(diag.rbegin(), diag.rend()),
            std::vector<double>(offdiag.rbegin(), offdiag.rend())};
  }
};

// Precision of exp(-tau/2 sum v_d^2 - lambda/2 sum (v_d - v_{d-1})^2).
inline TridiagPrecision chain_precision(double tau, double lambda, std::size_t n) {
  require(std::isfinite(tau) && tau > 0.0, "chain_precision: tau must be positive");
  require(std::isfinite(lambda) && lambda >= 0.0, "chain_precision: lambda must be non-negative");
  require(n >= 1, "chain_precision: n must be positive");
  TridiagPrecision q;
  q.diag.assign(n, tau + 2.0 * lambda);
  if (n == 1) {
    q.diag[0] = tau;
  } else {
    q.diag.front() = tau + lambda;
    q.diag.back() = tau + lambda;
  }
  q.offdiag.assign(n - 1, -lambda);
  return q;
}

// Directed form of N(0, Q^{-1}):
//   v_0 ~ N(0, 1/cond_prec[0]),  v_d | v_{d-1} ~ N(coef[d] v_{d-1}, 1/cond_prec[d]).
// Obtained by eliminating components from the end; fails iff Q is not SPD.
struct ChainFactor {
  std::vector<double> coef;
  std::vector<double> cond_prec;
  double log_det = 0.0;  // log det Q

  static ChainFactor factor(const TridiagPrecision& q) {
    q.validate();
    const std::size_t n = q.size();
    ChainFactor f;
    f.coef.assign(n, 0.0);
    f.cond_prec.assign(n, 0.0);
    double next = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      double r = q.diag[k];
      if (k + 1 < n) r -= q.offdiag[k] * q.offdiag[k] / next;
      if (!(r > 0.0) || !std::isfinite(r))
        throw NumericError("tridiagonal precision is not positive definite (pivot " +
                           std::to_string(k) + ")");
      f.cond_prec[k] = r;
      f.log_det += std::log(r);
      next = r;
    }
    for (std::size_t k = 1; k < n; ++k) f.coef[k] = -q.offdiag[k - 1] / f.cond_prec[k];
    return f;
  }
};

// Solves Q x = b for symmetric tridiagonal Q (Thomas algorithm).
inline std::vector<double> tridiag_solve(const TridiagPrecision& q, std::span<const double> b) {
  const std::size_t n = q.size();
  require(b.size() == n, "tridiag_solve: size mismatch");
  std::vector<double> c(n, 0.0), d(n, 0.0), x(n, 0.0);
  double denom = q.diag[0];
  if (!(denom != 0.0)) throw NumericError("tridiag_solve: zero pivot");
  if (n > 1) c[0] = q.offdiag[0] / denom;
  d[0] = b[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = q.diag[i] - q.offdiag[i - 1] * c[i - 1];
    if (!(denom != 0.0)) throw NumericError("tridiag_solve: zero pivot");
    if (i + 1 < n) c[i] = q.offdiag[i] / denom;
    d[i] = (b[i] - q.offdiag[i - 1] * d[i - 1]) / denom;
  }
  x[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

// Filtering law of one component after seeing observations 0..d, plus the log of the
// incremental normalizer p(y_d | y_{0:d-1}).
struct GaussianMessage {
  double mean = 0.0;
  double var = 1.0;
  double log_scale = 0.0;
};

// Scalar Kalman filter along the directed chain, observing y_d = v_d + e_d with
// e_d ~ N(0, obs_var). An infinite obs_var means "no observation".
inline void chain_forward(const ChainFactor& factor, std::span<const double> y, double obs_var,
                          std::span<GaussianMessage> out) {
  const std::size_t n = factor.cond_prec.size();
  const bool observed = std::isfinite(obs_var);
  double m = 0.0, p = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const double a = factor.coef[d];
    double pm = a * m;
    double pv = a * a * p + 1.0 / factor.cond_prec[d];
    GaussianMessage msg;
    if (observed) {
      const double s = pv + obs_var;
      msg.log_scale = log_normal_pdf(y[d], pm, s);
      const double gain = pv / s;
      pm += gain * (y[d] - pm);
      pv = std::max(pv * obs_var / s, kVarianceFloor);
    }
    msg.mean = pm;
    msg.var = pv;
    out[d] = msg;
    m = pm;
    p = pv;
  }
}

// Exact joint draw given the forward messages, from the last component back to the first.
inline void chain_backward(const ChainFactor& factor, std::span<const GaussianMessage> msgs,
                           Stream& stream, std::span<double> v) {
  const std::size_t n = msgs.size();
  v[n - 1] = stream.normal(msgs[n - 1].mean, std::sqrt(msgs[n - 1].var));
  for (std::size_t d = n - 1; d-- > 0;) {
    const double a = factor.coef[d + 1];
    const double r = factor.cond_prec[d + 1];
    const double prec = 1.0 / msgs[d].var + a * a * r;
    const double mean = (msgs[d].mean / msgs[d].var + a * r * v[d + 1]) / prec;
    v[d] = stream.normal(mean, std::sqrt(1.0 / prec));
  }
}

// Draw from N(0, Q^{-1}) through the forward/backward machinery with no observations.
inline void sample_gmrf_chain(const ChainFactor& factor, Stream& stream, std::span<double> out) {
  std::vector<GaussianMessage> msgs(factor.cond_prec.size());
  chain_forward(factor, {}, std::numeric_limits<double>::infinity(), msgs);
  chain_backward(factor, msgs, stream, out);
}

inline std::vector<double> sample_gmrf_chain(const TridiagPrecision& q, Stream& stream) {
  const ChainFactor factor = ChainFactor::factor(q);
  std::vector<double> v(q.size());
  sample_gmrf_chain(factor, stream, v);
  return v;
}

// A chain GMRF prior prepared for stage-wise use. The quadratic form is split into
// unary and pairwise terms,
//   -1/2 v'Qv = -1/2 sum_d unary_d v_d^2 + 1/2 sum_d offdiag_d (v_{d+1} - v_d)^2,
// so that the partial products up to stage d keep only interactions (e-1, e), e <= d.
struct ChainPrior {
  TridiagPrecision precision;
  ChainFactor factor;
  std::vector<double> unary;
  std::vector<double> stage_prec;  // precision of the prior stage proposal
  double log_normalizer = 0.0;     // log of the integral of exp(-1/2 v'Qv)

  static std::shared_ptr<const ChainPrior> make(TridiagPrecision q) {
    auto p = std::make_shared<ChainPrior>();
    p->factor = ChainFactor::factor(q);
    const std::size_t n = q.size();
    p->unary.resize(n);
    p->stage_prec.resize(n);
    for (std::size_t d = 0; d < n; ++d) {
      const double left = d > 0 ? q.offdiag[d - 1] : 0.0;
      const double right = d + 1 < n ? q.offdiag[d] : 0.0;
      p->unary[d] = q.diag[d] + left + right;
      p->stage_prec[d] = p->unary[d] - left;
      require(p->stage_prec[d] > 0.0,
              "chain prior: stage conditional at d=" + std::to_string(d) + " is improper");
    }
    p->log_normalizer = 0.5 * (static_cast<double>(n) * kLog2Pi - p->factor.log_det);
    p->precision = std::move(q);
    return p;
  }
};

enum class StageProposal { prior, locally_optimal };
enum class StageOrder { natural, reversed };

// Unnormalized density over one time step's state, in stage order:
//   p(x) = N_Q(x - offset) * prod_d N(y_d; x_d, obs_var)
// Stage targets p_d are the partial products over components 0..d with interaction
// factors up to (d-1, d); the prior normalizer is attached to stage 0, so p_{n-1}
// integrates to the exact one-step normalizer.
class GaussianChainTarget {
 public:
  GaussianChainTarget(std::shared_ptr<const ChainPrior> prior, std::vector<double> offset,
                      std::vector<double> y, double obs_var, bool reversed = false,
                      StageProposal proposal = StageProposal::prior)
      : prior_(std::move(prior)),
        offset_(std::move(offset)),
        y_(std::move(y)),
        obs_var_(obs_var),
        reversed_(reversed),
        proposal_(proposal) {
    require(prior_ != nullptr, "chain target: missing prior");
    require(offset_.size() == prior_->unary.size() && y_.size() == offset_.size(),
            "chain target: dimension mismatch");
    require(obs_var_ > 0.0, "chain target: observation variance must be positive");
    if (reversed_) {
      std::reverse(offset_.begin(), offset_.end());
      std::reverse(y_.begin(), y_.end());
    }
  }

  std::size_t stages() const { return offset_.size(); }
  const ChainPrior& prior() const { return *prior_; }
  double offset(std::size_t d) const { return offset_[d]; }
  double obs(std::size_t d) const { return y_[d]; }
  double obs_var() const { return obs_var_; }
  bool reversed() const { return reversed_; }
  StageProposal proposal() const { return proposal_; }

  GaussianChainTarget with_proposal(StageProposal p) const {
    GaussianChainTarget copy = *this;
    copy.proposal_ = p;
    return copy;
  }

  // log p_d(x_{0:d}) - log p_{d-1}(x_{0:d-1}); depends on x_{d-1} (prev) and x_d (cur) only.
  double log_increment(std::size_t d, double prev, double cur) const {
    const double v = cur - offset_[d];
    double acc = -0.5 * prior_->unary[d] * v * v + log_normal_pdf(y_[d], cur, obs_var_);
    if (d > 0) {
      const double diff = v - (prev - offset_[d - 1]);
      acc += 0.5 * prior_->precision.offdiag[d - 1] * diff * diff;
    } else {
      acc -= prior_->log_normalizer;
    }
    return acc;
  }

  double sample_proposal(std::size_t d, double prev, Stream& stream) const {
    const auto [mean, var] = proposal_moments(d, prev);
    return stream.normal(mean, std::sqrt(var));
  }

  double log_proposal(std::size_t d, double prev, double cur) const {
    const auto [mean, var] = proposal_moments(d, prev);
    return log_normal_pdf(cur, mean, var);
  }

  // Maps a stage-ordered vector back to state-component order.
  void to_state(std::span<const double> stage_values, std::span<double> x) const {
    const std::size_t n = stages();
    for (std::size_t d = 0; d < n; ++d) x[reversed_ ? n - 1 - d : d] = stage_values[d];
  }

 private:
  struct Moments {
    double mean;
    double var;
  };

  Moments proposal_moments(std::size_t d, double prev) const {
    const double prec = prior_->stage_prec[d];
    double mean_v = 0.0;
    if (d > 0) mean_v = -prior_->precision.offdiag[d - 1] * (prev - offset_[d - 1]) / prec;
    if (proposal_ == StageProposal::prior) return {offset_[d] + mean_v, 1.0 / prec};
    const double post_prec = prec + 1.0 / obs_var_;
    const double ytil = y_[d] - offset_[d];
    const double post_mean = (prec * mean_v + ytil / obs_var_) / post_prec;
    return {offset_[d] + post_mean, 1.0 / post_prec};
  }

  std::shared_ptr<const ChainPrior> prior_;
  std::vector<double> offset_;
  std::vector<double> y_;
  double obs_var_;
  bool reversed_;
  StageProposal proposal_;
};

}  // namespace nsmc
