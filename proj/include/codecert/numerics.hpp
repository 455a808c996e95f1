// SPDX-License-Identifier: Apache-2.0
#pragma once

// Regularized incomplete beta function and its inverse. These back the
// Beta-quantile confidence bounds on the smoothed score.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "codecert/error.hpp"

namespace codecert::math {

namespace detail {

// Stirling-series remainder: lgamma(x) - ((x - 0.5) log x - x + log sqrt(2 pi)).
// Accurate to ~1e-14 for x >= 10.
inline double lgamma_correction(double x) {
  const double z = 1.0 / (x * x);
  return (1.0 / 12.0 -
          z * (1.0 / 360.0 - z * (1.0 / 1260.0 - z * (1.0 / 1680.0 - z * (1.0 / 1188.0))))) /
         x;
}

inline constexpr double kLnSqrt2Pi = 0.918938533204672741780329736406;

// log B(a, b), with the large-argument cases arranged to avoid cancelling
// two huge lgamma values.
inline double log_beta(double a, double b) {
  const double p = std::min(a, b);
  const double q = std::max(a, b);
  if (p >= 10.0) {
    const double corr = lgamma_correction(p) + lgamma_correction(q) - lgamma_correction(p + q);
    return -0.5 * std::log(q) + kLnSqrt2Pi + corr + (p - 0.5) * std::log(p / (p + q)) +
           q * std::log1p(-p / (p + q));
  }
  if (q >= 10.0) {
    const double corr = lgamma_correction(q) - lgamma_correction(p + q);
    return std::lgamma(p) + corr + p - p * std::log(p + q) + (q - 0.5) * std::log1p(-p / (p + q));
  }
  return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q);
}

// log(x^a (1-x)^b / B(a, b)).
inline double log_front(double x, double a, double b) {
  if (a >= 10.0 && b >= 10.0) {
    const double s = a + b;
    const double d = s * x - a;
    const double corr = lgamma_correction(a) + lgamma_correction(b) - lgamma_correction(s);
    return a * std::log1p(d / a) + b * std::log1p(-d / b) + 0.5 * std::log(a * b / s) -
           kLnSqrt2Pi - corr;
  }
  return a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
}

// Continued fraction for I_x(a, b), modified Lentz evaluation. Converges
// fast for x < (a + 1) / (a + b + 2).
inline double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIterations = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw NumericsError("incomplete beta continued fraction did not converge (a=" +
                      std::to_string(a) + ", b=" + std::to_string(b) + ")");
}

inline void check_shape(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw NumericsError("beta shape parameters must be positive and finite");
}

}  // namespace detail

/// I_x(a, b), the regularized incomplete beta function (the Beta(a, b) CDF).
inline double regularized_incomplete_beta(double x, double a, double b) {
  detail::check_shape(a, b);
  if (!(x >= 0.0 && x <= 1.0)) throw NumericsError("incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(detail::log_front(x, a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * detail::beta_continued_fraction(1.0 - x, b, a) / b;
}

/// Beta(a, b) density.
inline double beta_density(double x, double a, double b) {
  detail::check_shape(a, b);
  if (x <= 0.0 || x >= 1.0) {
    if (x == 0.0 && a == 1.0) return b;
    if (x == 1.0 && b == 1.0) return a;
    if ((x == 0.0 && a < 1.0) || (x == 1.0 && b < 1.0))
      return std::numeric_limits<double>::infinity();
    return 0.0;
  }
  return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
                  detail::log_beta(a, b));
}

/// The p-quantile of Beta(a, b): x with I_x(a, b) = p. Newton steps kept
/// inside a shrinking bisection bracket.
inline double beta_quantile(double p, double a, double b) {
  detail::check_shape(a, b);
  if (!(p > 0.0 && p < 1.0)) throw NumericsError("beta quantile probability must lie in (0, 1)");
  constexpr int kMaxIterations = 400;
  constexpr double kTolerance = 1e-14;

  double lo = 0.0;
  double hi = 1.0;
  double x = a / (a + b);
  double best_x = x;
  double best_err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kMaxIterations; ++it) {
    const double f = regularized_incomplete_beta(x, a, b) - p;
    if (std::fabs(f) < best_err) {
      best_err = std::fabs(f);
      best_x = x;
    }
    if (std::fabs(f) <= kTolerance) return x;
    if (f < 0.0)
      lo = x;
    else
      hi = x;
    if (std::nextafter(lo, 1.0) >= hi) return best_x;  // bracket is one ulp wide

    double next = std::numeric_limits<double>::quiet_NaN();
    const double density = beta_density(x, a, b);
    if (density > 0.0 && std::isfinite(density)) next = x - f / density;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    // Newton stalling near a flat tail: force a bisection every few steps.
    if (it % 8 == 7) next = 0.5 * (lo + hi);
    x = next;
  }
  if (best_err <= 1e-12) return best_x;
  throw NumericsError("beta quantile did not converge (p=" + std::to_string(p) +
                      ", a=" + std::to_string(a) + ", b=" + std::to_string(b) + ")");
}

}  // namespace codecert::math
