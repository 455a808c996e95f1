// SPDX-License-Identifier: Apache-2.0
#pragma once

// Smoothed-sample generation. A sample perturbs a random subset of the
// identifier entries, either with character edits (edit mode) or with
// positional mask names (mask mode, the mode certificates are sound for).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codecert/code_model.hpp"
#include "codecert/error.hpp"
#include "codecert/parallel.hpp"
#include "codecert/rng.hpp"

namespace codecert {

enum class EditOp { Insert, Replace, Delete };

inline std::string_view to_string(EditOp op) noexcept {
  switch (op) {
    case EditOp::Insert: return "insert";
    case EditOp::Replace: return "replace";
    case EditOp::Delete: return "delete";
  }
  return "insert";
}

inline EditOp edit_op_from_string(std::string_view name) {
  if (name == "insert") return EditOp::Insert;
  if (name == "replace") return EditOp::Replace;
  if (name == "delete") return EditOp::Delete;
  throw UsageError("unknown edit operation '" + std::string(name) + "'");
}

struct EditStep {
  EditOp op = EditOp::Insert;
  std::size_t position = 0;
  char character = '\0';  // unused for Delete

  friend bool operator==(const EditStep&, const EditStep&) = default;
};

/// Ordered character edits applied to one identifier.
struct PerturbationPath {
  std::vector<EditStep> steps;

  std::size_t count(EditOp op) const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [op](const EditStep& s) { return s.op == op; }));
  }
  friend bool operator==(const PerturbationPath&, const PerturbationPath&) = default;
};

enum class SmoothingMode { edit, mask };

inline std::string_view to_string(SmoothingMode mode) noexcept {
  return mode == SmoothingMode::edit ? "edit" : "mask";
}

inline SmoothingMode smoothing_mode_from_string(std::string_view name) {
  if (name == "edit") return SmoothingMode::edit;
  if (name == "mask") return SmoothingMode::mask;
  throw UsageError("unknown smoothing mode '" + std::string(name) + "'");
}

inline constexpr std::string_view kDefaultAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_";

inline std::size_t round_half_up(double value) {
  // The epsilon absorbs representation error in products like 0.3 * 5.
  return static_cast<std::size_t>(std::floor(value + 0.5 + 1e-9));
}

struct SmoothingConfig {
  std::size_t n_samples = 100;
  double perturb_fraction = 0.9;
  double eta = 0.6;
  SmoothingMode mode = SmoothingMode::edit;
  std::vector<EditOp> op_set{EditOp::Insert, EditOp::Replace, EditOp::Delete};
  std::string alphabet{kDefaultAlphabet};
  double alpha = 0.001;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 64;

  void validate() const {
    if (n_samples == 0) throw UsageError("n_samples must be positive");
    if (!(perturb_fraction >= 0.0 && perturb_fraction <= 1.0))
      throw UsageError("perturb_fraction must lie in [0, 1]");
    if (!(eta > 0.0 && eta <= 1.0)) throw UsageError("eta must lie in (0, 1]");
    if (op_set.empty()) throw UsageError("operation set must not be empty");
    if (alphabet.empty()) throw UsageError("alphabet must not be empty");
    for (char c : alphabet)
      if (!detail::is_ident_char(c))
        throw UsageError(std::string("alphabet character '") + c + "' is not an identifier character");
    if (!(alpha > 0.0 && alpha < 0.5)) throw UsageError("alpha must lie in (0, 0.5)");
    if (max_attempts == 0) throw UsageError("max_attempts must be positive");
  }

  /// Number of identifier entries perturbed (edit) or masked (mask) per sample.
  std::size_t perturbed_count(std::size_t h) const {
    return std::min(h, round_half_up(perturb_fraction * static_cast<double>(h)));
  }
  /// k: entries left untouched per sample.
  std::size_t retained_count(std::size_t h) const { return h - perturbed_count(h); }
};

struct SmoothedSample {
  CodeSnippet snippet;
  std::vector<std::size_t> perturbed_indices;  // ascending entry indices
  std::vector<PerturbationPath> paths;         // edit mode, aligned with perturbed_indices
  std::size_t sample_index = 0;
};

/// Uniform `size`-subset of {0, ..., h-1}, returned sorted.
inline std::vector<std::size_t> select_subset(std::size_t h, std::size_t size, RandomStream& rng) {
  if (size > h)
    throw UsageError("cannot select " + std::to_string(size) + " of " + std::to_string(h) +
                     " identifiers");
  std::vector<std::size_t> pool(h);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(h - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Number of character edits for an identifier of the given length.
inline std::size_t edit_budget(std::size_t name_length, double eta) {
  if (name_length == 0) throw UsageError("identifier length must be positive");
  return std::max<std::size_t>(1, round_half_up(eta * static_cast<double>(name_length)));
}

struct IdentifierEdit {
  std::string name;
  PerturbationPath path;
};

/// Applies `budget` random edits to `name`, resampling the whole path until
/// the result is a fresh, valid, non-keyword name outside `existing`.
inline IdentifierEdit perturb_identifier(std::string_view name, std::size_t budget,
                                         std::span<const EditOp> op_set, std::string_view alphabet,
                                         const WordSet& existing, Language lang, RandomStream& rng,
                                         std::size_t max_attempts = 64) {
  if (!is_identifier_name(name))
    throw PerturbationError("'" + std::string(name) + "' is not a valid identifier");
  if (budget == 0) throw PerturbationError("edit budget must be at least 1");
  if (op_set.empty() || alphabet.empty())
    throw PerturbationError("operation set and alphabet must not be empty");

  std::string starters;
  for (char c : alphabet)
    if (detail::is_ident_start(c)) starters.push_back(c);

  auto draw = [&rng](std::string_view from, char avoid) -> char {
    std::string pool;
    for (char c : from)
      if (c != avoid) pool.push_back(c);
    if (pool.empty()) return '\0';
    return pool[static_cast<std::size_t>(rng.below(pool.size()))];
  };

  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::string s(name);
    PerturbationPath path;
    for (std::size_t step = 0; step < budget; ++step) {
      const EditOp op = op_set[static_cast<std::size_t>(rng.below(op_set.size()))];
      switch (op) {
        case EditOp::Insert: {
          const std::size_t lowest = starters.empty() ? 1 : 0;
          const std::size_t pos = lowest + static_cast<std::size_t>(rng.below(s.size() + 1 - lowest));
          const char ch = draw(pos == 0 ? std::string_view(starters) : alphabet, '\0');
          s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), ch);
          path.steps.push_back({op, pos, ch});
          break;
        }
        case EditOp::Replace: {
          const std::size_t pos = static_cast<std::size_t>(rng.below(s.size()));
          const char ch = draw(pos == 0 ? std::string_view(starters) : alphabet, s[pos]);
          if (ch == '\0') break;  // no replacement character available here
          s[pos] = ch;
          path.steps.push_back({op, pos, ch});
          break;
        }
        case EditOp::Delete: {
          if (s.size() == 1) break;
          const std::size_t pos = static_cast<std::size_t>(rng.below(s.size()));
          s.erase(pos, 1);
          path.steps.push_back({op, pos, '\0'});
          break;
        }
      }
    }
    if (s != name && is_identifier_name(s) && !is_keyword(s, lang) && !existing.contains(s))
      return {std::move(s), std::move(path)};
  }
  throw PerturbationError("no valid perturbation of '" + std::string(name) + "' after " +
                          std::to_string(max_attempts) + " attempts");
}

/// Positional mask name for an identifier entry. Depends only on the entry
/// index; '_' is appended while the name would collide with `taken`.
inline std::string mask_identifier(std::size_t entry_index, const WordSet& taken = {}) {
  std::string name = "vmask" + std::to_string(entry_index);
  while (taken.contains(name)) name.push_back('_');
  return name;
}

inline std::uint64_t snippet_key(std::string_view snippet_id) { return fnv1a64(snippet_id); }

/// One smoothed variant. The random stream is derived from
/// (config.seed, snippet id, sample_index) alone.
inline SmoothedSample generate_smoothed_sample(const CodeSnippet& snippet,
                                               const SmoothingConfig& config,
                                               std::size_t sample_index,
                                               std::string_view snippet_id = {}) {
  RandomStream rng(config.seed, snippet_key(snippet_id), sample_index);
  const auto& table = snippet.identifiers();
  const std::size_t h = table.size();
  SmoothedSample sample{snippet, select_subset(h, config.perturbed_count(h), rng), {}, sample_index};
  if (sample.perturbed_indices.empty()) return sample;

  std::vector<bool> selected(h, false);
  for (std::size_t i : sample.perturbed_indices) selected[i] = true;

  std::vector<std::pair<std::size_t, std::string>> renames;
  renames.reserve(sample.perturbed_indices.size());

  if (config.mode == SmoothingMode::mask) {
    // Only names that survive masking can collide: retained entries and
    // words outside the table. Masked originals never influence the output.
    WordSet taken;
    for (const auto& t : snippet.tokens())
      if (t.kind == TokenKind::identifier) {
        auto entry = table.find(t.text);
        if (!entry || !selected[*entry]) taken.insert(t.text);
      }
    for (std::size_t i : sample.perturbed_indices) {
      std::string name = mask_identifier(i, taken);
      taken.insert(name);
      renames.emplace_back(i, std::move(name));
    }
  } else {
    WordSet taken = snippet.word_names();
    taken.insert(snippet.denylist().begin(), snippet.denylist().end());
    for (std::size_t i : sample.perturbed_indices) {
      const std::string& name = table[i].name;
      auto edit = perturb_identifier(name, edit_budget(name.size(), config.eta), config.op_set,
                                     config.alphabet, taken, snippet.language(), rng,
                                     config.max_attempts);
      taken.insert(edit.name);
      sample.paths.push_back(std::move(edit.path));
      renames.emplace_back(i, std::move(edit.name));
    }
  }
  sample.snippet = rename_entries(snippet, renames);
  return sample;
}

/// N smoothed samples with sample indices [first_index, first_index + N).
inline std::vector<SmoothedSample> generate_batch(const CodeSnippet& snippet,
                                                  const SmoothingConfig& config,
                                                  std::string_view snippet_id = {},
                                                  std::size_t threads = 1,
                                                  std::size_t first_index = 0) {
  config.validate();
  std::vector<std::optional<SmoothedSample>> slots(config.n_samples);
  parallel_for(config.n_samples, threads, [&](std::size_t i) {
    slots[i].emplace(generate_smoothed_sample(snippet, config, first_index + i, snippet_id));
  });
  std::vector<SmoothedSample> batch;
  batch.reserve(slots.size());
  for (auto& s : slots) batch.push_back(std::move(*s));
  return batch;
}

}  // namespace codecert
