#pragma once

// Replicate statistics: squared errors, quantile summaries and z-tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nsmc/errors.hpp"

namespace nsmc {

inline double squared_error(double estimate, double truth) {
  const double e = estimate - truth;
  return e * e;
}

inline std::vector<double> squared_error(std::span<const double> estimate, std::span<const double> truth) {
  require(estimate.size() == truth.size(), "squared_error: size mismatch");
  std::vector<double> out(estimate.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = squared_error(estimate[i], truth[i]);
  return out;
}

// Accumulated relative to the first value, so constant input gives that value exactly.
inline double sample_mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x - v[0];
  return v[0] + s / static_cast<double>(v.size());
}

// Unbiased sample variance; 0 for a single value.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Linear interpolation between closest ranks (R's type 7).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  require(!sorted.empty(), "quantile: empty input");
  require(p >= 0.0 && p <= 1.0, "quantile: p must lie in [0, 1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> values, double p) {
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, p);
}

struct ReplicateSummary {
  std::string estimator;
  std::vector<double> values;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline ReplicateSummary aggregate(std::span<const double> values, std::string estimator = {}) {
  require(!values.empty(), "aggregate: need at least one value");
  ReplicateSummary s;
  s.estimator = std::move(estimator);
  s.values.assign(values.begin(), values.end());
  std::vector<double> sorted = s.values;
  std::sort(sorted.begin(), sorted.end());
  s.median = quantile_sorted(sorted, 0.5);
  s.q25 = quantile_sorted(sorted, 0.25);
  s.q75 = quantile_sorted(sorted, 0.75);
  // Summation in sorted order keeps the summary permutation-invariant bit for bit.
  s.mean = sample_mean(sorted);
  s.stderr_ = std::sqrt(sample_variance(sorted) / static_cast<double>(sorted.size()));
  return s;
}

struct ZTest {
  double z = 0.0;
  double mean = 0.0;
  double stderr_ = 0.0;
  bool degenerate = false;  // stderr == 0
  bool pass = false;
};

// z = (mean - target) / stderr; passes when |z| <= 3. A zero stderr passes only if
// the mean hits the target exactly.
inline ZTest unbiasedness_test(std::span<const double> samples, double target, std::size_t min_replicates = 30) {
  require(samples.size() >= min_replicates,
          "unbiasedness_test: need at least " + std::to_string(min_replicates) + " samples");
  ZTest r;
  r.mean = sample_mean(samples);
  r.stderr_ = std::sqrt(sample_variance(samples) / static_cast<double>(samples.size()));
  if (r.stderr_ == 0.0) {
    r.degenerate = true;
    r.z = r.mean == target ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.mean - target);
  } else {
    r.z = (r.mean - target) / r.stderr_;
  }
  r.pass = std::abs(r.z) <= 3.0;
  return r;
}

// Summary CSV rows: experiment,estimator,stat,value
inline void write_summary_header(std::ostream& os) { os << "experiment,estimator,stat,value\n"; }

inline void write_summary_rows(std::ostream& os, const std::string& experiment, const ReplicateSummary& s) {
  const auto row = [&](const char* stat, double v) { os << experiment << ',' << s.estimator << ',' << stat << ',' << v << '\n'; };
  row("n", static_cast<double>(s.values.size()));
  row("mean", s.mean);
  row("stderr", s.stderr_);
  row("q25", s.q25);
  row("median", s.median);
  row("q75", s.q75);
}

}  // namespace nsmc
