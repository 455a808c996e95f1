// SPDX-License-Identifier: Apache-2.0
#pragma once

// Black-box classifier interface. The defense only ever sees hard labels
// for code text, so every model (builtin toy, child process, HTTP service)
// hides behind ClassifierAdapter.

#include <algorithm>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codecert/code_model.hpp"
#include "codecert/error.hpp"
#include "codecert/rng.hpp"

namespace codecert {

using Label = int;

struct ClassifyItem {
  std::string id;
  std::string code;
  std::string language;
};

struct ClassifyResult {
  std::string id;
  Label label = 0;

  friend bool operator==(const ClassifyResult&, const ClassifyResult&) = default;
};

enum class AdapterKind { builtin, subprocess, http };

struct LabelSpace {
  std::vector<Label> ids;
  std::vector<std::string> names;  // optional, aligned with ids

  bool contains(Label label) const {
    return std::find(ids.begin(), ids.end(), label) != ids.end();
  }
};

class ClassifierAdapter {
 public:
  virtual ~ClassifierAdapter() = default;

  virtual AdapterKind kind() const noexcept = 0;
  virtual std::string describe() const = 0;
  virtual const LabelSpace& label_space() const noexcept = 0;
  virtual std::size_t batch_limit() const noexcept { return 256; }

  /// Classifies one chunk of at most batch_limit() items. Results may come
  /// back in any order; classify_batch matches them by id.
  virtual std::vector<ClassifyResult> classify_chunk(std::span<const ClassifyItem> items) = 0;

  /// Classifies several chunks. Transports that can keep requests in flight
  /// concurrently override this; the default is sequential.
  virtual std::vector<std::vector<ClassifyResult>> classify_chunks(
      std::span<const std::span<const ClassifyItem>> chunks) {
    std::vector<std::vector<ClassifyResult>> out;
    out.reserve(chunks.size());
    for (auto chunk : chunks) out.push_back(classify_chunk(chunk));
    return out;
  }
};

/// One result per item, order-aligned with `items`. Checks that the
/// adapter echoed every id exactly once and stayed inside its label space.
inline std::vector<ClassifyResult> classify_batch(ClassifierAdapter& adapter,
                                                  std::span<const ClassifyItem> items) {
  if (items.empty()) throw UsageError("classify_batch needs at least one item");
  std::map<std::string_view, std::size_t> position;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!position.emplace(items[i].id, i).second)
      throw UsageError("duplicate request id '" + items[i].id + "'");

  const std::size_t limit = std::max<std::size_t>(1, adapter.batch_limit());
  std::vector<std::span<const ClassifyItem>> chunks;
  for (std::size_t first = 0; first < items.size(); first += limit)
    chunks.push_back(items.subspan(first, std::min(limit, items.size() - first)));
  auto answers = adapter.classify_chunks(chunks);
  if (answers.size() != chunks.size())
    throw MalformedResponseError("adapter returned " + std::to_string(answers.size()) +
                                 " chunk results for " + std::to_string(chunks.size()) + " chunks");

  std::vector<ClassifyResult> results(items.size());
  std::vector<bool> seen(items.size(), false);
  std::size_t answered = 0;
  for (const auto& chunk : answers) {
    for (const auto& r : chunk) {
      auto it = position.find(r.id);
      if (it == position.end())
        throw MalformedResponseError("response carries unknown id '" + r.id + "'");
      if (seen[it->second]) throw MalformedResponseError("response repeats id '" + r.id + "'");
      if (!adapter.label_space().contains(r.label))
        throw LabelSpaceError("label " + std::to_string(r.label) + " for id '" + r.id +
                              "' is outside the label space");
      seen[it->second] = true;
      results[it->second] = r;
      ++answered;
    }
  }
  if (answered != items.size())
    throw MalformedResponseError("adapter answered " + std::to_string(answered) + " of " +
                                 std::to_string(items.size()) + " items");
  return results;
}

/// Deterministic in-process classifiers. classify() is a pure function of
/// the code text.
class BuiltinClassifier : public ClassifierAdapter {
 public:
  AdapterKind kind() const noexcept override { return AdapterKind::builtin; }
  const LabelSpace& label_space() const noexcept override { return labels_; }

  virtual Label classify(const CodeSnippet& snippet) const = 0;

  std::vector<ClassifyResult> classify_chunk(std::span<const ClassifyItem> items) override {
    std::vector<ClassifyResult> out;
    out.reserve(items.size());
    for (const auto& item : items) {
      Language lang = Language::generic;
      try {
        lang = language_from_string(item.language.empty() ? "generic" : item.language);
        out.push_back({item.id, classify(CodeSnippet::parse(item.code, lang))});
      } catch (const DataError& e) {
        throw AdapterError("builtin " + describe() + " rejected item '" + item.id + "': " + e.what());
      }
    }
    return out;
  }

 protected:
  explicit BuiltinClassifier(LabelSpace labels) : labels_(std::move(labels)) {}

 private:
  LabelSpace labels_;
};

class ConstantClassifier final : public BuiltinClassifier {
 public:
  explicit ConstantClassifier(Label label) : BuiltinClassifier({{label}, {}}), label_(label) {}
  std::string describe() const override { return "builtin:constant?label=" + std::to_string(label_); }
  Label classify(const CodeSnippet&) const override { return label_; }

 private:
  Label label_;
};

/// hit_label iff some identifier-table name is in the watch set. Under mask
/// mode its output depends only on which watched entries were retained,
/// which makes the smoothed score exactly computable.
class IdentifierPresenceClassifier final : public BuiltinClassifier {
 public:
  IdentifierPresenceClassifier(WordSet watch, Label hit_label = 1, Label miss_label = 0)
      : BuiltinClassifier({hit_label == miss_label ? std::vector<Label>{hit_label}
                                                   : std::vector<Label>{std::min(hit_label, miss_label),
                                                                        std::max(hit_label, miss_label)},
                           {}}),
        watch_(std::move(watch)),
        hit_(hit_label),
        miss_(miss_label) {}

  std::string describe() const override {
    std::string watch;
    for (const auto& w : watch_) watch += (watch.empty() ? "" : ",") + w;
    return "builtin:identifier_presence?watch=" + watch + "&hit=" + std::to_string(hit_) +
           "&miss=" + std::to_string(miss_);
  }

  Label classify(const CodeSnippet& snippet) const override {
    for (const auto& e : snippet.identifiers())
      if (watch_.contains(e.name)) return hit_;
    return miss_;
  }

  const WordSet& watch() const noexcept { return watch_; }
  Label hit_label() const noexcept { return hit_; }
  Label miss_label() const noexcept { return miss_; }

 private:
  WordSet watch_;
  Label hit_;
  Label miss_;
};

/// 1 iff the share of non-whitespace tokens whose text is a trigger exceeds
/// the threshold (strictly). Identifier edits never change it unless a
/// trigger is itself an identifier.
class KeywordDensityClassifier final : public BuiltinClassifier {
 public:
  KeywordDensityClassifier(WordSet triggers, double threshold)
      : BuiltinClassifier({{0, 1}, {}}), triggers_(std::move(triggers)), threshold_(threshold) {}

  std::string describe() const override {
    std::string t;
    for (const auto& w : triggers_) t += (t.empty() ? "" : ",") + w;
    return "builtin:keyword_density?triggers=" + t + "&threshold=" + std::to_string(threshold_);
  }

  Label classify(const CodeSnippet& snippet) const override {
    std::size_t total = 0;
    std::size_t hits = 0;
    for (const auto& t : snippet.tokens()) {
      if (t.kind == TokenKind::whitespace) continue;
      ++total;
      if (triggers_.contains(t.text)) ++hits;
    }
    if (total == 0) return 0;
    return static_cast<double>(hits) / static_cast<double>(total) > threshold_ ? 1 : 0;
  }

 private:
  WordSet triggers_;
  double threshold_;
};

/// Stable hash of the non-whitespace token texts modulo num_labels. Any
/// identifier edit may flip it, which makes it the brittle stress model.
class TokenHashClassifier final : public BuiltinClassifier {
 public:
  explicit TokenHashClassifier(std::size_t num_labels)
      : BuiltinClassifier({make_ids(num_labels), {}}), num_labels_(num_labels) {}

  std::string describe() const override {
    return "builtin:token_hash?labels=" + std::to_string(num_labels_);
  }

  Label classify(const CodeSnippet& snippet) const override {
    std::uint64_t h = fnv1a64("");
    for (const auto& t : snippet.tokens())
      if (t.kind != TokenKind::whitespace) h = fnv1a64(t.text, h);
    return static_cast<Label>(splitmix64(h) % num_labels_);
  }

 private:
  static std::vector<Label> make_ids(std::size_t n) {
    if (n == 0) throw UsageError("token_hash needs at least one label");
    std::vector<Label> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<Label>(i);
    return ids;
  }

  std::size_t num_labels_;
};

}  // namespace codecert
