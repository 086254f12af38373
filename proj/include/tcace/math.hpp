#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "tcace/error.hpp"

namespace tcace {

// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Probabilities that enter weight denominators are kept away from 0 and 1.
inline constexpr double prob_clamp_eps = 1e-12;

// Clamps p into [eps, 1-eps]; bumps *clamped when the clamp was active.
inline double clamp_prob(double p, int* clamped = nullptr,
                         double eps = prob_clamp_eps) {
  if (p < eps) {
    if (clamped) ++*clamped;
    return eps;
  }
  if (p > 1.0 - eps) {
    if (clamped) ++*clamped;
    return 1.0 - eps;
  }
  return p;
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Inverse standard normal CDF.  Rational approximation refined with one
// Halley step against erfc, giving errors far below 1e-9 over (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(errc::invalid_argument,
                "normal_quantile requires p in (0,1), got " + std::to_string(p));
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement: e = CDF(x) - p, u = e / pdf(x).
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) {
    throw Error(errc::invalid_argument, "mean of empty vector");
  }
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (denominator n-1).
inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) {
    throw Error(errc::invalid_argument, "sample_sd needs at least 2 values");
  }
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Linear-interpolation percentile (the common "type 7" definition):
// rank h = (n-1)*p on the sorted values, interpolating between neighbours.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) {
    throw Error(errc::invalid_argument, "percentile of empty vector");
  }
  if (p < 0.0 || p > 1.0) {
    throw Error(errc::invalid_argument, "percentile level must be in [0,1]");
  }
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

// ---------------------------------------------------------------------------
// Thread budget + deterministic parallel loop
// ---------------------------------------------------------------------------

// Worker count: TCACE_THREADS caps/overrides hardware concurrency.
inline int thread_budget() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("TCACE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = static_cast<int>(v);
  }
  return n;
}

// Runs body(i) for i in [0, count).  Work is striped over the workers and
// every result must be written to a caller-owned slot indexed by i, so the
// outcome is identical for any worker count.
template <class Body>
void parallel_for(long count, Body&& body, int threads = 0) {
  if (count <= 0) return;
  if (threads <= 0) threads = thread_budget();
  if (threads > count) threads = static_cast<int>(count);
  if (threads == 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (long i = t; i < count; i += threads) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tcace
