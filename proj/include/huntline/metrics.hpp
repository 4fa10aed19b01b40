// Copyright 2026 the huntline authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "huntline/util.hpp"

namespace huntline {

// Acklam's rational approximation of the standard normal quantile; relative
// error below 1.2e-9 everywhere we use it.
inline double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw Error("OutOfRange", "quantile probability must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_ci(std::int64_t successes, std::int64_t total,
                                           double confidence = 0.95) {
  if (total <= 0) throw Error("EmptyTotal", "wilson_ci over zero trials");
  if (successes < 0 || successes > total) {
    throw Error("OutOfRange", "successes outside [0, total]");
  }
  const double z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = p + z2 / (2.0 * n);
  const double radius = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, (center - radius) / denom), std::min(1.0, (center + radius) / denom)};
}

// Interval for the unweighted mean of per-phase proportions: normal
// approximation with variance sum p_i(1-p_i)/n_i / k^2.
inline std::pair<double, double> macro_proportion_ci(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& phase_counts,
    double confidence = 0.95) {
  if (phase_counts.empty()) throw Error("EmptyTotal", "macro interval over zero phases");
  const double z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
  double mean = 0.0, var = 0.0;
  const double k = static_cast<double>(phase_counts.size());
  for (const auto& [s, n] : phase_counts) {
    if (n <= 0) throw Error("EmptyTotal", "macro interval with an empty phase");
    const double p = static_cast<double>(s) / static_cast<double>(n);
    mean += p / k;
    var += p * (1.0 - p) / static_cast<double>(n) / (k * k);
  }
  const double radius = z * std::sqrt(var);
  return {std::max(0.0, mean - radius), std::min(1.0, mean + radius)};
}

// Display rounding used by the report tables: percent with one decimal.
inline double round_percent(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

// ---------------------------------------------------------------------------
// descriptive statistics

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation (n-1 denominator); a single sample reports 0.
inline double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

// Median with averaged middles for even sizes.
inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 == 1 ? xs[mid] : (xs[mid - 1] + xs[mid]) / 2.0;
}

// Nearest-rank percentile (p in (0, 100]).
inline double percentile_of(std::vector<double> xs, double p) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(p / 100.0 * static_cast<double>(xs.size())));
  rank = std::max<std::size_t>(1, std::min(rank, xs.size()));
  return xs[rank - 1];
}

// ---------------------------------------------------------------------------
// precision / recall / F1

struct PrfCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  void merge(const PrfCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
  }

  // Undefined when no positives were emitted but positives existed; a run
  // with nothing to find and nothing emitted is vacuously perfect.
  std::optional<double> precision() const {
    if (tp + fp > 0) return static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (fn == 0) return 1.0;
    return std::nullopt;
  }

  double recall() const {
    if (tp + fn == 0) return 1.0;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
  }

  double f1() const {
    auto p = precision();
    if (!p) return 0.0;
    const double r = recall();
    if (*p + r == 0.0) return 0.0;
    return 2.0 * *p * r / (*p + r);
  }

  Json to_json() const { return Json{{"tp", tp}, {"fp", fp}, {"fn", fn}}; }
};

}  // namespace huntline
