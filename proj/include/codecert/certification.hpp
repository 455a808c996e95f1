// SPDX-License-Identifier: Apache-2.0
#pragma once

// Vote aggregation, Beta-quantile bounds on the smoothed score, and the
// certified identifier radius.
//
// For a snippet with h identifiers of which k are retained per sample, an
// adversary renaming r identifiers changes the masked input only when the
// retained set hits one of them, which happens with probability
//   beta(h, k, r) = 1 - C(h - r, k) / C(h, k).
// The smoothed prediction is certified at radius r while
//   lower - beta(h, k, r) * upper > 1/2.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codecert/adapters.hpp"
#include "codecert/code_model.hpp"
#include "codecert/error.hpp"
#include "codecert/numerics.hpp"
#include "codecert/perturbation.hpp"

namespace codecert {

struct VoteTally {
  std::map<Label, std::size_t> counts;
  std::size_t total = 0;
  Label top_label = 0;
  std::size_t top_count = 0;

  std::size_t count(Label label) const {
    auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
  }
};

/// Majority vote; ties go to the smallest label id.
inline VoteTally tally_votes(std::span<const Label> labels) {
  if (labels.empty()) throw UsageError("cannot tally an empty vote");
  VoteTally tally;
  for (Label l : labels) ++tally.counts[l];
  tally.total = labels.size();
  // std::map iterates in ascending label order, so strict '>' keeps the
  // smallest label among maximal counts.
  for (const auto& [label, count] : tally.counts) {
    if (count > tally.top_count) {
      tally.top_label = label;
      tally.top_count = count;
    }
  }
  return tally;
}

struct ConfidenceBounds {
  double lower = 0.0;
  double upper = 1.0;
  double alpha = 0.0;
};

/// Lower and upper bounds on the smoothed score from n_c of n votes: the
/// alpha and (1 - alpha) quantiles of Beta(n_c, n - n_c + 1).
inline ConfidenceBounds estimate_bounds(std::size_t n_c, std::size_t n, double alpha) {
  if (n_c == 0 || n_c > n)
    throw UsageError("bounds need 1 <= n_c <= n (n_c=" + std::to_string(n_c) +
                     ", n=" + std::to_string(n) + ")");
  if (!(alpha > 0.0 && alpha <= 0.5)) throw UsageError("alpha must lie in (0, 0.5]");
  const double a = static_cast<double>(n_c);
  const double b = static_cast<double>(n - n_c + 1);
  return {math::beta_quantile(alpha, a, b), math::beta_quantile(1.0 - alpha, a, b), alpha};
}

/// 1 - C(h - r, k) / C(h, k) as a running product of ratios, so large h
/// never overflows.
inline double beta_factor(std::size_t h, std::size_t k, std::size_t r) {
  if (k > h || r > h)
    throw UsageError("beta factor needs k <= h and r <= h (h=" + std::to_string(h) +
                     ", k=" + std::to_string(k) + ", r=" + std::to_string(r) + ")");
  if (k == 0 || r == 0) return 0.0;
  if (r > h - k) return 1.0;
  double ratio = 1.0;
  for (std::size_t i = 0; i < k; ++i)
    ratio *= static_cast<double>(h - r - i) / static_cast<double>(h - i);
  return 1.0 - ratio;
}

using BetaFunction = std::function<double(std::size_t, std::size_t, std::size_t)>;

struct Certificate {
  Label predicted = 0;
  Label truth = 0;
  bool abstained = false;
  std::optional<std::size_t> radius;  // empty when abstained
  std::size_t h = 0;
  std::size_t k = 0;
  std::size_t n_c = 0;  // votes for the ground-truth label
  std::size_t n = 0;
  std::optional<ConfidenceBounds> bounds;
  double beta_at_radius = 0.0;
  bool uncertified = false;  // prediction correct but the r = 0 condition fails
};

/// Largest r in [0, h] with lower - beta(h, k, r) * upper > 0.5, or an
/// abstention when the vote winner is not the ground truth. `n_c` counts
/// votes for `predicted`.
inline Certificate certify_counts(Label predicted, std::size_t n_c, std::size_t n, Label truth,
                                  std::size_t h, std::size_t k, double alpha,
                                  const BetaFunction& beta = beta_factor) {
  if (n == 0) throw UsageError("certification needs at least one vote");
  Certificate cert;
  cert.predicted = predicted;
  cert.truth = truth;
  cert.h = h;
  cert.k = k;
  cert.n = n;
  if (predicted != truth) {
    cert.abstained = true;
    return cert;
  }
  cert.n_c = n_c;
  if (n_c == 0) {
    cert.radius = 0;
    cert.uncertified = true;
    return cert;
  }
  const ConfidenceBounds bounds = estimate_bounds(n_c, n, alpha);
  cert.bounds = bounds;
  auto holds = [&](std::size_t r) { return bounds.lower - beta(h, k, r) * bounds.upper > 0.5; };
  if (!holds(0)) {
    cert.radius = 0;
    cert.uncertified = true;
    cert.beta_at_radius = beta(h, k, 0);
    return cert;
  }
  // beta is nondecreasing in r, so the first failure ends the scan.
  std::size_t r = 0;
  while (r < h && holds(r + 1)) ++r;
  cert.radius = r;
  cert.beta_at_radius = beta(h, k, r);
  return cert;
}

inline Certificate certified_radius(const VoteTally& tally, Label truth, std::size_t h,
                                    std::size_t k, double alpha) {
  if (tally.total == 0) throw UsageError("certification needs at least one vote");
  Certificate cert = certify_counts(tally.top_label, tally.top_count, tally.total, truth, h, k, alpha);
  if (cert.abstained) cert.n_c = tally.count(truth);
  return cert;
}

struct SmoothedPrediction {
  Label label = 0;
  VoteTally tally;
};

namespace detail {

template <typename Error>
[[noreturn]] void rethrow_with_context(const Error& e, std::size_t first, std::size_t count) {
  throw Error("samples [" + std::to_string(first) + ", " + std::to_string(first + count) +
              "): " + e.what());
}

inline std::vector<Label> classify_samples(std::span<const SmoothedSample> samples,
                                           ClassifierAdapter& adapter) {
  std::vector<ClassifyItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples)
    items.push_back({std::to_string(s.sample_index), s.snippet.source(),
                     std::string(to_string(s.snippet.language()))});
  const std::size_t first = samples.empty() ? 0 : samples.front().sample_index;
  std::vector<ClassifyResult> results;
  try {
    results = classify_batch(adapter, items);
  } catch (const TransportError& e) {
    rethrow_with_context(e, first, samples.size());
  } catch (const MalformedResponseError& e) {
    rethrow_with_context(e, first, samples.size());
  } catch (const LabelSpaceError& e) {
    rethrow_with_context(e, first, samples.size());
  } catch (const AdapterError& e) {
    rethrow_with_context(e, first, samples.size());
  }
  std::vector<Label> labels;
  labels.reserve(results.size());
  for (const auto& r : results) labels.push_back(r.label);
  return labels;
}

}  // namespace detail

struct ExecutionOptions {
  std::string snippet_id;  // keys the per-snippet random streams
  std::size_t threads = 1;
};

/// Majority vote of the classifier over N smoothed samples.
inline SmoothedPrediction smoothed_predict(const CodeSnippet& snippet, const SmoothingConfig& config,
                                           ClassifierAdapter& adapter,
                                           const ExecutionOptions& exec = {}) {
  auto batch = generate_batch(snippet, config, exec.snippet_id, exec.threads);
  auto labels = detail::classify_samples(batch, adapter);
  SmoothedPrediction out{0, tally_votes(labels)};
  out.label = out.tally.top_label;
  return out;
}

struct CertifyOptions {
  /// Estimate n_c on a second, independent batch (sample indices N..2N-1)
  /// instead of reusing the prediction batch.
  bool split_batches = false;
  /// Edit-mode samples depend on the original identifier text, so the
  /// radius is not a proven guarantee there. Refused unless set.
  bool allow_edit_mode = false;
};

inline Certificate certify(const CodeSnippet& snippet, Label truth, const SmoothingConfig& config,
                           ClassifierAdapter& adapter, const ExecutionOptions& exec = {},
                           const CertifyOptions& options = {}) {
  if (config.mode == SmoothingMode::edit && !options.allow_edit_mode)
    throw UsageError("certificates are only sound in mask mode; edit mode needs an explicit override");
  const std::size_t h = snippet.identifier_count();
  const std::size_t k = config.retained_count(h);
  auto selection = generate_batch(snippet, config, exec.snippet_id, exec.threads);
  const VoteTally tally = tally_votes(detail::classify_samples(selection, adapter));
  if (!options.split_batches) return certified_radius(tally, truth, h, k, config.alpha);

  auto estimation =
      generate_batch(snippet, config, exec.snippet_id, exec.threads, config.n_samples);
  const VoteTally second = tally_votes(detail::classify_samples(estimation, adapter));
  Certificate cert =
      certify_counts(tally.top_label, second.count(tally.top_label), second.total, truth, h, k,
                     config.alpha);
  if (cert.abstained) cert.n_c = second.count(truth);
  return cert;
}

}  // namespace codecert
