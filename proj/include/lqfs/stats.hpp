#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "lqfs/error.hpp"

namespace lqfs {

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Mean with a batch-means standard error. Trailing samples that do not fill
// a batch are excluded from the error estimate only.
inline Estimate batch_means(const std::vector<double>& x, std::size_t batches = 20) {
  Estimate est;
  est.mean = mean_of(x);
  if (batches < 2 || x.size() < batches) return est;
  const std::size_t len = x.size() / batches;
  std::vector<double> bm(batches);
  for (std::size_t b = 0; b < batches; ++b)
    bm[b] = std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(b * len),
                            x.begin() + static_cast<std::ptrdiff_t>((b + 1) * len), 0.0) /
            static_cast<double>(len);
  est.se = std::sqrt(variance_of(bm) / static_cast<double>(batches));
  return est;
}

// Mean across independent replications with the usual standard error.
inline Estimate across(const std::vector<double>& x) {
  Estimate est;
  est.mean = mean_of(x);
  if (x.size() > 1) est.se = std::sqrt(variance_of(x) / static_cast<double>(x.size()));
  return est;
}

// sup |F_n - F| for a continuous reference distribution function.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidInput("ks_statistic needs a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double F = cdf(sample[k]);
    d = std::max({d, static_cast<double>(k + 1) / n - F, F - static_cast<double>(k) / n});
  }
  return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidInput("ks_two_sample needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Asymptotic Kolmogorov tail P(K > x).
inline double kolmogorov_tail(double x) {
  if (x <= 0.0) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

inline double ks_two_sample_pvalue(double d, std::size_t n, std::size_t m) {
  const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
  const double sq = std::sqrt(ne);
  return kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d);
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  const std::size_t n = std::max(p.size(), q.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = k < p.size() ? p[k] : 0.0;
    const double b = k < q.size() ? q[k] : 0.0;
    s += std::abs(a - b);
  }
  return 0.5 * s;
}

}  // namespace lqfs
