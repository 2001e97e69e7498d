#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "nsmc/diagnostics.hpp"
#include "nsmc/exact.hpp"
#include "nsmc/smc.hpp"

using namespace nsmc;

TEST(NormalizeLogweights, EqualWeights) {
  const std::vector<double> lw{0, 0, 0};
  const auto n = normalize_logweights(lw);
  for (double p : n.probabilities) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(n.log_mean, 0.0, 1e-15);
}

TEST(NormalizeLogweights, HandComputed) {
  const std::vector<double> lw{std::log(2.0), 0, 0};
  const auto n = normalize_logweights(lw);
  EXPECT_NEAR(n.probabilities[0], 0.5, 1e-15);
  EXPECT_NEAR(n.probabilities[1], 0.25, 1e-15);
  EXPECT_NEAR(n.probabilities[2], 0.25, 1e-15);
  EXPECT_NEAR(n.log_mean, std::log(4.0 / 3.0), 1e-15);
}

TEST(NormalizeLogweights, ShiftStable) {
  const std::vector<double> lw{-1000, 0};
  const auto n = normalize_logweights(lw);
  EXPECT_GE(n.probabilities[0], 0.0);
  EXPECT_LT(n.probabilities[0], 1e-300);
  EXPECT_NEAR(n.probabilities[1], 1.0, 1e-15);
  EXPECT_NEAR(n.log_mean, std::log(0.5), 1e-15);
}

TEST(NormalizeLogweights, AllNegativeInfinityCollapses) {
  const std::vector<double> lw{kNegInf, kNegInf};
  EXPECT_THROW(normalize_logweights(lw), WeightCollapse);
}

TEST(NormalizeLogweights, NanRejected) {
  const std::vector<double> lw{0, std::nan("")};
  EXPECT_THROW(normalize_logweights(lw), NumericError);
}

TEST(NormalizeLogweights, ShiftInvariance) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0, 5);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> lw(17);
    for (auto& x : lw) x = nd(gen);
    const double c = nd(gen) * 100;
    std::vector<double> shifted(lw);
    for (auto& x : shifted) x += c;
    const auto a = normalize_logweights(lw), b = normalize_logweights(shifted);
    double sum = 0;
    for (std::size_t i = 0; i < lw.size(); ++i) {
      EXPECT_NEAR(a.probabilities[i], b.probabilities[i], 1e-12);
      sum += a.probabilities[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(b.log_mean - a.log_mean, c, 1e-9);
  }
}

TEST(Ess, Examples) {
  EXPECT_DOUBLE_EQ(ess(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 4.0);
  EXPECT_DOUBLE_EQ(ess(std::vector<double>{0, 1, 0}), 1.0);
  EXPECT_NEAR(ess(std::vector<double>{0.5, 0.25, 0.25}), 8.0 / 3.0, 1e-15);
}

TEST(Ess, Bounds) {
  std::mt19937_64 gen(2);
  std::exponential_distribution<double> ex(1.0);
  for (int k = 0; k < 200; ++k) {
    const std::size_t N = 1 + gen() % 50;
    std::vector<double> w(N);
    for (auto& x : w) x = ex(gen);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= s;
    const double e = ess(w);
    EXPECT_GE(e, 1.0 - 1e-12);
    EXPECT_LE(e, static_cast<double>(N) + 1e-9);
  }
}

TEST(MultinomialResample, Deterministic) {
  const std::vector<double> p{0.1, 0.2, 0.7};
  Stream a = substream(4, {1}), b = substream(4, {1});
  EXPECT_EQ(multinomial_resample(p, 50, a), multinomial_resample(p, 50, b));
}

TEST(MultinomialResample, OneHot) {
  const std::vector<double> p{0, 0, 1, 0};
  Stream s = substream(1, {0});
  for (auto i : multinomial_resample(p, 100, s)) EXPECT_EQ(i, 2u);
}

TEST(MultinomialResample, ZeroProbabilityNeverSelected) {
  const std::vector<double> p{0.5, 0.0, 0.5, 0.0};
  Stream s = substream(2, {0});
  for (auto i : multinomial_resample(p, 100000, s)) EXPECT_TRUE(i == 0 || i == 2);
}

TEST(MultinomialResample, InverseCdfTieBreak) {
  const std::vector<double> cdf{0.25, 0.5, 1.0};
  EXPECT_EQ(draw_from_cdf(cdf, 0.0), 0u);
  EXPECT_EQ(draw_from_cdf(cdf, 0.25), 1u);
  EXPECT_EQ(draw_from_cdf(cdf, 0.2499999), 0u);
  EXPECT_EQ(draw_from_cdf(cdf, 0.9999999999), 2u);
}

TEST(MultinomialResample, FrequenciesMatchChiSquare) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  Stream s = substream(3, {0});
  const std::size_t R = 100000;
  std::vector<double> counts(4);
  for (auto i : multinomial_resample(p, R, s)) counts[i] += 1;
  double chi2 = 0;
  for (std::size_t k = 0; k < 4; ++k) chi2 += std::pow(counts[k] - R * p[k], 2) / (R * p[k]);
  EXPECT_LT(chi2, 11.345);  // chi-square(3) at alpha = 0.01
}

TEST(MultinomialResample, PreservesExpectations) {
  const std::vector<double> p{0.05, 0.15, 0.3, 0.5};
  const std::vector<double> phi{3.0, -1.0, 2.0, 0.5};
  double target = 0;
  for (std::size_t i = 0; i < 4; ++i) target += p[i] * phi[i];
  Stream s = substream(5, {0});
  const std::size_t R = 100000;
  std::vector<double> means(R);
  for (auto& m : means) {
    double acc = 0;
    for (auto i : multinomial_resample(p, 4, s)) acc += phi[i];
    m = acc / 4;
  }
  EXPECT_TRUE(unbiasedness_test(means, target).pass);
}

TEST(SystematicResample, PreservesExpectations) {
  const std::vector<double> p{0.05, 0.15, 0.3, 0.5};
  const std::vector<double> phi{3.0, -1.0, 2.0, 0.5};
  double target = 0;
  for (std::size_t i = 0; i < 4; ++i) target += p[i] * phi[i];
  Stream s = substream(6, {0});
  std::vector<double> means(100000);
  for (auto& m : means) {
    double acc = 0;
    for (auto i : systematic_resample(p, 4, s)) acc += phi[i];
    m = acc / 4;
  }
  EXPECT_TRUE(unbiasedness_test(means, target).pass);
}

TEST(ParticleSystem, TrajectoryReconstruction) {
  auto sys = ParticleSystem::initial(2, 1);
  sys.commit({1.0, 2.0}, {0, 0});
  sys.commit({3.0, 4.0}, {1, 0});
  EXPECT_EQ(sys.trajectory(0), (std::vector<double>{2.0, 3.0}));
  EXPECT_EQ(sys.trajectory(1), (std::vector<double>{1.0, 4.0}));
  EXPECT_NO_THROW(sys.check_invariants());
  sys.logw = {kNegInf, kNegInf};
  EXPECT_THROW(sys.check_invariants(), WeightCollapse);
}

TEST(Bootstrap, UninformativeLikelihoodKeepsFullEss) {
  const auto spec = make_stssm(3, 0.5, 1, 1, 1e12);
  const StssmModel model(spec);
  const auto data = simulate(spec, 5, 4);
  const auto out = bootstrap_pf(model, data, 200, 1);
  for (double e : out.ess) EXPECT_NEAR(e, 200.0, 1e-6);
}

TEST(Bootstrap, NormalizerUnbiased) {
  const auto spec = make_stssm(2, 0.5, 1, 1, 0.5);
  const StssmModel model(spec);
  const auto data = simulate(spec, 5, 17);
  const double ll = kalman_filter(model, data).log_z();
  const std::size_t R = 200;
  std::vector<double> ratio(R);
  for (std::size_t r = 0; r < R; ++r) ratio[r] = std::exp(bootstrap_pf(model, data, 10000, 500 + r).log_z() - ll);
  const auto z = unbiasedness_test(ratio, 1.0);
  EXPECT_TRUE(z.pass) << "z = " << z.z;
}

TEST(Bootstrap, Deterministic) {
  const auto spec = make_stssm(3, 0.5, 1, 1, 0.3);
  const StssmModel model(spec);
  const auto data = simulate(spec, 5, 4);
  const auto a = bootstrap_pf(model, data, 100, 9), b = bootstrap_pf(model, data, 100, 9);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.var, b.var);
  EXPECT_EQ(a.log_z_increment, b.log_z_increment);
  EXPECT_EQ(a.ess, b.ess);
}

TEST(Bootstrap, SystematicOptionRuns) {
  const auto spec = make_stssm(3, 0.5, 1, 1, 0.3);
  const StssmModel model(spec);
  const auto data = simulate(spec, 5, 4);
  const auto out = bootstrap_pf(model, data, 500, 9, {ResamplingScheme::systematic});
  const auto kf = kalman_filter(model, data);
  EXPECT_NEAR(out.log_z(), kf.log_z(), 1.0);
}
