// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent verifiers for every certified quantity. Nothing here reuses
// the numeric routes it checks: subsets are enumerated or sampled instead
// of using the product formula, and Beta quantiles come from quadrature
// instead of the continued fraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "codecert/adapters.hpp"
#include "codecert/certification.hpp"
#include "codecert/code_model.hpp"
#include "codecert/error.hpp"
#include "codecert/perturbation.hpp"
#include "codecert/rng.hpp"

namespace codecert::oracle {

struct OracleReport {
  std::string quantity;
  double analytic_value = 0.0;
  double oracle_value = 0.0;
  std::uint64_t trials_or_enumerated = 0;
  double abs_error = 0.0;
};

inline OracleReport make_report(std::string quantity, double analytic, double oracle,
                                std::uint64_t count) {
  return {std::move(quantity), analytic, oracle, count, std::fabs(analytic - oracle)};
}

inline constexpr std::size_t kMaxEnumerationSize = 20;

/// Calls visit(mask) for every k-subset of {0..h-1}, encoded as a bitmask.
template <typename Visit>
void for_each_subset(std::size_t h, std::size_t k, Visit&& visit) {
  if (h > kMaxEnumerationSize)
    throw UsageError("enumeration supports at most " + std::to_string(kMaxEnumerationSize) +
                     " identifiers");
  if (k > h) throw UsageError("subset size exceeds set size");
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    std::uint32_t mask = 0;
    for (std::size_t i : idx) mask |= 1u << i;
    visit(mask);
    // Advance to the next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == h - k + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

struct ExactFraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;
  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
};

/// Fraction of all k-subsets of {0..h-1} that intersect {0..r-1}.
inline ExactFraction enumerate_beta(std::size_t h, std::size_t k, std::size_t r) {
  if (r > h) throw UsageError("r exceeds h");
  const std::uint32_t changed = r == 0 ? 0u : ((1u << r) - 1u);
  ExactFraction f{0, 0};
  for_each_subset(h, k, [&](std::uint32_t mask) {
    ++f.denominator;
    if (mask & changed) ++f.numerator;
  });
  return f;
}

/// Monte-Carlo estimate of the same fraction. Subsets are drawn with
/// sequential selection sampling, not the partial shuffle used by the
/// perturbation module.
inline double mc_beta_estimate(std::size_t h, std::size_t k, std::size_t r, std::uint64_t trials,
                               std::uint64_t seed) {
  if (k > h || r > h) throw UsageError("mc_beta_estimate needs k <= h and r <= h");
  if (trials == 0) throw UsageError("trials must be positive");
  if (r == 0 || k == 0) return 0.0;
  RandomStream rng(seed);
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::size_t needed = k;
    bool hit = false;
    for (std::size_t i = 0; i < h && needed > 0; ++i) {
      // Keep element i with probability needed / remaining.
      if (rng.below(h - i) < needed) {
        --needed;
        if (i < r) {
          hit = true;
          break;
        }
      }
    }
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

/// Exact probability that the identifier-presence classifier returns
/// `label` on a mask-mode sample that retains k of the snippet's h
/// identifiers. Each of the C(h, k) retained sets is masked for real and
/// classified.
inline double exact_smoothed_score(const CodeSnippet& snippet, Label label, std::size_t k,
                                   const IdentifierPresenceClassifier& classifier) {
  const std::size_t h = snippet.identifier_count();
  if (h > kMaxEnumerationSize)
    throw UsageError("exact smoothed score supports at most " +
                     std::to_string(kMaxEnumerationSize) + " identifiers (got " +
                     std::to_string(h) + ")");
  std::uint64_t total = 0;
  std::uint64_t matches = 0;
  for_each_subset(h, k, [&](std::uint32_t retained) {
    WordSet taken;
    for (const auto& t : snippet.tokens()) {
      if (t.kind != TokenKind::identifier) continue;
      auto entry = snippet.identifiers().find(t.text);
      if (!entry || (retained >> *entry) & 1u) taken.insert(t.text);
    }
    std::vector<std::pair<std::size_t, std::string>> renames;
    for (std::size_t i = 0; i < h; ++i) {
      if ((retained >> i) & 1u) continue;
      renames.emplace_back(i, mask_identifier(i, taken));
      taken.insert(renames.back().second);
    }
    ++total;
    if (classifier.classify(rename_entries(snippet, renames)) == label) ++matches;
  });
  return static_cast<double>(matches) / static_cast<double>(total);
}

/// Score of the hit label when only watch membership matters: the share of
/// retained k-sets that contain a watched entry.
inline double membership_hit_score(std::size_t h, std::size_t k, std::uint32_t watched) {
  std::uint64_t total = 0;
  std::uint64_t hits = 0;
  for_each_subset(h, k, [&](std::uint32_t retained) {
    ++total;
    if (retained & watched) ++hits;
  });
  return static_cast<double>(hits) / static_cast<double>(total);
}

struct SweepResult {
  std::size_t violations = 0;
  std::size_t ties = 0;  // violations where the adversarial score sits exactly at 0.5
  std::size_t adversaries = 0;
  Certificate certificate;
};

/// Certifies the identifier-presence classifier's smoothed prediction from
/// exact tallies, then checks every adversary that flips the watch
/// membership of at most `radius` identifiers. A violation is an adversary
/// under which the exact smoothed prediction changes.
inline SweepResult soundness_sweep(const CodeSnippet& snippet, const SmoothingConfig& config,
                                   const IdentifierPresenceClassifier& classifier,
                                   const BetaFunction& beta = beta_factor) {
  config.validate();
  const std::size_t h = snippet.identifier_count();
  const std::size_t k = config.retained_count(h);
  const std::size_t n = config.n_samples;
  const Label hit = classifier.hit_label();
  const Label miss = classifier.miss_label();

  const double hit_score = exact_smoothed_score(snippet, hit, k, classifier);
  const auto hit_votes = static_cast<std::size_t>(std::llround(hit_score * static_cast<double>(n)));
  std::vector<Label> votes(hit_votes, hit);
  votes.insert(votes.end(), n - hit_votes, miss);
  const VoteTally tally = tally_votes(votes);
  const Label predicted = tally.top_label;

  SweepResult result;
  result.certificate = certify_counts(predicted, tally.top_count, n, predicted, h, k, config.alpha, beta);
  const std::size_t radius = result.certificate.radius.value_or(0);
  if (radius == 0 || result.certificate.uncertified) return result;

  std::uint32_t watched = 0;
  for (std::size_t i = 0; i < h; ++i)
    if (classifier.watch().contains(snippet.identifiers()[i].name)) watched |= 1u << i;

  bool tied = false;
  auto smoothed_label = [&](std::uint32_t watch_mask) {
    const double g_hit = membership_hit_score(h, k, watch_mask);
    const double g_miss = 1.0 - g_hit;
    tied = g_hit == g_miss;
    if (tied) return std::min(hit, miss);
    return g_hit > g_miss ? hit : miss;
  };

  // Adversaries depend only on which entries change, so every flip set of
  // size 1..radius is checked.
  for (std::size_t size = 1; size <= radius; ++size) {
    for_each_subset(h, size, [&](std::uint32_t flipped) {
      ++result.adversaries;
      if (smoothed_label(watched ^ flipped) != predicted) {
        ++result.violations;
        result.ties += tied;
      }
    });
  }
  return result;
}

namespace detail {

// Unnormalized Beta density scaled to 1 at its mode.
struct ScaledBetaDensity {
  double a;
  double b;
  double log_peak;

  ScaledBetaDensity(double a_, double b_) : a(a_), b(b_) {
    const double m = mode();
    log_peak = (a > 1.0 ? (a - 1.0) * std::log(m) : 0.0) +
               (b > 1.0 ? (b - 1.0) * std::log(1.0 - m) : 0.0);
  }

  double mode() const {
    if (a > 1.0 && b > 1.0) return (a - 1.0) / (a + b - 2.0);
    if (a == 1.0 && b == 1.0) return 0.5;
    return a == 1.0 ? 0.0 : 1.0;
  }

  double operator()(double x) const {
    if (x <= 0.0) return a == 1.0 ? std::exp(-log_peak) : 0.0;
    if (x >= 1.0) return b == 1.0 ? std::exp(-log_peak) : 0.0;
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_peak);
  }
};

template <typename F>
double simpson_recurse(const F& f, double lo, double hi, double f_lo, double f_mid, double f_hi,
                       double whole, double tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lm = 0.5 * (lo + mid);
  const double rm = 0.5 * (mid + hi);
  const double f_lm = f(lm);
  const double f_rm = f(rm);
  const double left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid);
  const double right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rm + f_hi);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recurse(f, lo, mid, f_lo, f_lm, f_mid, left, 0.5 * tol, depth - 1) +
         simpson_recurse(f, mid, hi, f_mid, f_rm, f_hi, right, 0.5 * tol, depth - 1);
}

template <typename F>
double adaptive_simpson(const F& f, double lo, double hi, double tol) {
  if (hi <= lo) return 0.0;
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  const double f_mid = f(0.5 * (lo + hi));
  const double whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
  return simpson_recurse(f, lo, hi, f_lo, f_mid, f_hi, whole, tol, 50);
}

}  // namespace detail

/// Beta(a, b) quantile by bisection on a CDF obtained from adaptive Simpson
/// quadrature of the density. Requires a, b >= 1 (bounded density).
inline double beta_quantile_oracle(double p, double a, double b) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("p must lie in (0, 1)");
  if (!(a >= 1.0 && b >= 1.0)) throw UsageError("the quadrature oracle needs a, b >= 1");
  const detail::ScaledBetaDensity f(a, b);
  const double m = f.mode();
  const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));

  std::vector<double> knots{0.0, 1.0};
  for (int j = -60; j <= 60; ++j) {
    const double x = m + 0.5 * j * sd;
    if (x > 0.0 && x < 1.0) knots.push_back(x);
  }
  for (int j = 1; j < 32; ++j) knots.push_back(j / 32.0);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  // Panel boundaries cluster around the mode so narrow peaks are never
  // stepped over. Left and right tails are accumulated separately so the
  // CDF keeps full relative precision on both sides.
  const std::size_t panels = knots.size() - 1;
  const double tol = 1e-14 * std::sqrt(2.0 * std::numbers::pi) * sd;
  std::vector<double> mass(panels);
  for (std::size_t i = 0; i < panels; ++i)
    mass[i] = detail::adaptive_simpson(f, knots[i], knots[i + 1], tol);
  std::vector<double> prefix(panels + 1, 0.0);  // mass of [0, knots[i]]
  std::vector<double> suffix(panels + 1, 0.0);  // mass of [knots[i], 1]
  for (std::size_t i = 0; i < panels; ++i) prefix[i + 1] = prefix[i] + mass[i];
  for (std::size_t i = panels; i-- > 0;) suffix[i] = suffix[i + 1] + mass[i];
  const double total = prefix[panels];

  auto cdf = [&](double x) {
    const auto j = static_cast<std::size_t>(
        std::upper_bound(knots.begin(), knots.end(), x) - knots.begin() - 1);
    if (j >= panels) return 1.0;
    if (x <= m) return (prefix[j] + detail::adaptive_simpson(f, knots[j], x, tol)) / total;
    return 1.0 - (suffix[j + 1] + detail::adaptive_simpson(f, x, knots[j + 1], tol)) / total;
  };
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// P(lower <= p_true <= upper) summed exactly over the binomial outcomes.
/// An outcome of zero successes yields the degenerate interval [0, 0].
inline double exact_coverage(double p_true, std::size_t n, double alpha) {
  double coverage = 0.0;
  for (std::size_t x = 0; x <= n; ++x) {
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) +
                           (x == 0 ? 0.0 : x * std::log(p_true)) +
                           (x == n ? 0.0 : (n - x) * std::log1p(-p_true));
    const double pmf = std::exp(log_pmf);
    if (pmf < 1e-300) continue;
    bool covered = false;
    if (x > 0) {
      const auto b = estimate_bounds(x, n, alpha);
      covered = b.lower <= p_true && p_true <= b.upper;
    } else {
      covered = p_true == 0.0;
    }
    if (covered) coverage += pmf;
  }
  return coverage;
}

/// Simulated coverage of the confidence bounds for a known success
/// probability: the fraction of binomial(n, p_true) draws whose interval
/// contains p_true.
inline double coverage_experiment(double p_true, std::size_t n, double alpha, std::uint64_t trials,
                                  std::uint64_t seed) {
  if (!(p_true >= 0.0 && p_true <= 1.0)) throw UsageError("p_true must lie in [0, 1]");
  if (n == 0 || trials == 0) throw UsageError("n and trials must be positive");
  RandomStream rng(seed);
  std::map<std::size_t, bool> covered_by_count;
  std::uint64_t covered = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::size_t successes = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (rng.bernoulli(p_true)) ++successes;
    auto it = covered_by_count.find(successes);
    if (it == covered_by_count.end()) {
      bool c = p_true == 0.0;
      if (successes > 0) {
        const auto b = estimate_bounds(successes, n, alpha);
        c = b.lower <= p_true && p_true <= b.upper;
      }
      it = covered_by_count.emplace(successes, c).first;
    }
    if (it->second) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(trials);
}

}  // namespace codecert::oracle
