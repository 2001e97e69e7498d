#pragma once

// Proper-weighting oracle checks: for a fixed one-step LGSS target, the sample mean of
// tau * phi(x) over independent invocations of an inner procedure must match
// nu * E_q[phi] from the dense Gaussian oracle.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nsmc/diagnostics.hpp"
#include "nsmc/nested.hpp"
#include "nsmc/oracle.hpp"

namespace nsmc {

struct ProperWeightingCase {
  StssmSpec spec = make_stssm(2, 0.5, 1.0, 1.0, 1.0);
  std::vector<double> x_prev{0.3, -0.6};
  std::vector<double> y{0.8, -0.2};
  std::size_t t = 2;
};

struct ProperWeightingResult {
  std::string phi;
  double expected = 0.0;
  ZTest test;
};

inline const std::array<const char*, 4>& proper_weighting_functions() {
  static const std::array<const char*, 4> names{"1", "x1", "x1^2", "x1*x2"};
  return names;
}

inline std::string describe(const ProperWeightingProcedure& p) {
  std::string kind;
  switch (p.kind) {
    case InnerKind::smc_backward: kind = "smc+bs"; break;
    case InnerKind::smc_empirical: kind = "smc+empirical"; break;
    case InnerKind::importance: kind = p.is_proposal == IsProposal::exact ? "is(exact)" : "is"; break;
    case InnerKind::self_nested: kind = "self-nested"; break;
    case InnerKind::exact_transition: kind = "exact-transition"; break;
  }
  std::string out = kind + " M=" + std::to_string(p.M);
  if (p.kind == InnerKind::self_nested) out += " M_inner=" + std::to_string(p.M_inner);
  if (p.stage_proposal == StageProposal::locally_optimal) out += " locally-optimal";
  if (p.order == StageOrder::reversed) out += " reversed";
  return out;
}

// R independent invocations with streams (seed, r).
inline std::vector<ProperWeightingResult> proper_weighting_check(const ProperWeightingProcedure& proc,
                                                                 const ProperWeightingCase& c, std::size_t R,
                                                                 std::uint64_t seed) {
  const StssmModel model(c.spec);
  const auto ref = oracle::one_step(c.spec, c.x_prev, c.y, c.t);
  const double nu = std::exp(ref.log_evidence);
  const double m0 = ref.mean(0), m1 = ref.mean(1);
  const std::array<double, 4> expected{nu, nu * m0, nu * (ref.cov(0, 0) + m0 * m0), nu * (ref.cov(0, 1) + m0 * m1)};
  std::array<std::vector<double>, 4> samples;
  for (auto& s : samples) s.resize(R);
  for (std::size_t r = 0; r < R; ++r) {
    Stream stream = substream(seed, {r});
    const auto draw = properly_weighted_draw(proc, model, c.x_prev, c.y, c.t, stream);
    const double tau = std::exp(draw.log_tau);
    samples[0][r] = tau;
    samples[1][r] = tau * draw.x[0];
    samples[2][r] = tau * draw.x[0] * draw.x[0];
    samples[3][r] = tau * draw.x[0] * draw.x[1];
  }
  std::vector<ProperWeightingResult> out;
  for (std::size_t k = 0; k < 4; ++k)
    out.push_back({proper_weighting_functions()[k], expected[k], unbiasedness_test(samples[k], expected[k])});
  return out;
}

}  // namespace nsmc
