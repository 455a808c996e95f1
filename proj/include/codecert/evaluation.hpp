// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dataset ingestion, dataset-level metrics (ACC, ASR, NCRR, mean radius),
// a naive random-rename attack, certificate JSONL and report emission.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "codecert/adapters.hpp"
#include "codecert/certification.hpp"
#include "codecert/code_model.hpp"
#include "codecert/error.hpp"
#include "codecert/parallel.hpp"
#include "codecert/perturbation.hpp"
#include "codecert/rng.hpp"
#include "json.hpp"

namespace codecert {

struct DatasetRecord {
  std::string id;
  std::string code;
  std::string language = "c";
  Label label = 0;
  std::optional<std::vector<std::string>> identifiers;  // overrides lexical extraction
};

struct AdvPair {
  std::string id;
  std::string orig_id;
  std::string code;
  Label label = 0;
  std::optional<std::vector<std::string>> identifiers;  // renamed annotation, if the original had one
};

namespace detail {

/// Rethrows the active exception with a prefix, keeping its category.
[[noreturn]] inline void rethrow_with_prefix(const std::string& prefix) {
  try {
    throw;
  } catch (const UsageError& e) {
    throw UsageError(prefix + e.what());
  } catch (const IdentifierError& e) {
    throw IdentifierError(prefix + e.what());
  } catch (const AlignmentError& e) {
    throw AlignmentError(prefix + e.what());
  } catch (const PerturbationError& e) {
    throw PerturbationError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const TransportError& e) {
    throw TransportError(prefix + e.what());
  } catch (const MalformedResponseError& e) {
    throw MalformedResponseError(prefix + e.what());
  } catch (const LabelSpaceError& e) {
    throw LabelSpaceError(prefix + e.what());
  } catch (const AdapterError& e) {
    throw AdapterError(prefix + e.what());
  } catch (const NumericsError& e) {
    throw NumericsError(prefix + e.what());
  }
}

template <typename Parse>
auto load_jsonl(const std::filesystem::path& path, Parse&& parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<decltype(parse(nlohmann::json{}))> out;
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      auto value = parse(nlohmann::json::parse(line));
      if (!seen.insert(value.id).second) throw DataError("duplicate id '" + value.id + "'");
      out.push_back(std::move(value));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    } catch (const Error&) {
      rethrow_with_prefix(where);
    }
  }
  return out;
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
  return *it;
}

inline std::string string_field(const nlohmann::json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) throw DataError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

inline Label label_field(const nlohmann::json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number_integer()) throw DataError(std::string("field '") + name + "' must be an integer");
  return v.get<Label>();
}

}  // namespace detail

inline DatasetRecord parse_dataset_record(const nlohmann::json& j) {
  DatasetRecord r;
  r.id = detail::string_field(j, "id");
  r.code = detail::string_field(j, "code");
  if (j.contains("language")) r.language = detail::string_field(j, "language");
  (void)language_from_string(r.language);
  r.label = detail::label_field(j, "label");
  if (auto it = j.find("identifiers"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("field 'identifiers' must be a list of names");
    std::vector<std::string> names;
    for (const auto& n : *it) {
      if (!n.is_string()) throw DataError("field 'identifiers' must be a list of names");
      names.push_back(n.get<std::string>());
    }
    r.identifiers = std::move(names);
  }
  return r;
}

inline AdvPair parse_adv_pair(const nlohmann::json& j) {
  AdvPair p{detail::string_field(j, "id"), detail::string_field(j, "orig_id"),
            detail::string_field(j, "code"), detail::label_field(j, "label"), std::nullopt};
  if (auto it = j.find("identifiers"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("field 'identifiers' must be an array of strings");
    p.identifiers = it->get<std::vector<std::string>>();
  }
  return p;
}

inline std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  return detail::load_jsonl(path, parse_dataset_record);
}

inline std::vector<AdvPair> load_adv(const std::filesystem::path& path) {
  return detail::load_jsonl(path, parse_adv_pair);
}

inline nlohmann::json to_json(const DatasetRecord& r) {
  nlohmann::json j{{"id", r.id}, {"code", r.code}, {"language", r.language}, {"label", r.label}};
  if (r.identifiers) j["identifiers"] = *r.identifiers;
  return j;
}

inline nlohmann::json to_json(const AdvPair& p) {
  nlohmann::json j{{"id", p.id}, {"orig_id", p.orig_id}, {"code", p.code}, {"label", p.label}};
  if (p.identifiers) j["identifiers"] = *p.identifiers;
  return j;
}

/// Parses `code` for a record. With an identifier annotation, exactly the
/// listed names form the table: every other word is denylisted.
inline CodeSnippet make_snippet(std::string code, std::string_view language,
                                const std::optional<std::vector<std::string>>& identifiers = {}) {
  const Language lang = language_from_string(language);
  if (!identifiers) return CodeSnippet::parse(std::move(code), lang);
  const WordSet listed(identifiers->begin(), identifiers->end());
  auto deny = std::make_shared<WordSet>();
  for (const auto& t : tokenize(code, lang))
    if (t.kind == TokenKind::identifier && !listed.contains(t.text)) deny->insert(t.text);
  auto snippet = CodeSnippet::parse(std::move(code), lang, std::move(deny));
  for (const auto& name : listed)
    if (!snippet.identifiers().find(name))
      throw IdentifierError("annotated identifier '" + name + "' does not occur in the code");
  return snippet;
}

inline CodeSnippet make_snippet(const DatasetRecord& r) {
  return make_snippet(r.code, r.language, r.identifiers);
}

// ---------------------------------------------------------------------------
// Predictors

/// Labels one snippet. `key` names the record so smoothed predictions draw
/// the same random subsets for an original and its adversarial variants.
using Predictor = std::function<Label(const CodeSnippet&, std::string_view key)>;

inline Predictor raw_predictor(ClassifierAdapter& adapter) {
  return [&adapter](const CodeSnippet& s, std::string_view key) {
    const ClassifyItem item{std::string(key), s.source(), std::string(to_string(s.language()))};
    return classify_batch(adapter, std::span(&item, 1)).front().label;
  };
}

inline Predictor smoothed_predictor(ClassifierAdapter& adapter, SmoothingConfig config) {
  config.validate();
  return [&adapter, config = std::move(config)](const CodeSnippet& s, std::string_view key) {
    return smoothed_predict(s, config, adapter, {std::string(key), 1}).label;
  };
}

/// predictor(record) for every record, in record order, `threads` at a time.
inline std::vector<Label> predict_all(const Predictor& predictor,
                                      std::span<const DatasetRecord> records,
                                      std::size_t threads = 1) {
  std::vector<Label> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    try {
      out[i] = predictor(make_snippet(records[i]), records[i].id);
    } catch (const Error&) {
      detail::rethrow_with_prefix("record '" + records[i].id + "': ");
    }
  });
  return out;
}

inline double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.empty()) throw UsageError("accuracy of an empty dataset is undefined");
  if (predicted.size() != truth.size()) throw UsageError("prediction and label counts differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

inline double accuracy(const Predictor& predictor, std::span<const DatasetRecord> records,
                       std::size_t threads = 1) {
  if (records.empty()) throw UsageError("accuracy of an empty dataset is undefined");
  const auto predicted = predict_all(predictor, records, threads);
  std::vector<Label> truth;
  for (const auto& r : records) truth.push_back(r.label);
  return accuracy(predicted, truth);
}

/// Fraction of adversarial pairs whose prediction differs from the label.
/// Each pair is parsed with its original record's language and annotation.
inline double attack_success_rate(const Predictor& predictor, std::span<const AdvPair> pairs,
                                  std::span<const DatasetRecord> originals,
                                  std::size_t threads = 1) {
  if (pairs.empty()) throw UsageError("attack success rate of an empty pair set is undefined");
  std::map<std::string, const DatasetRecord*, std::less<>> by_id;
  for (const auto& r : originals) by_id.emplace(r.id, &r);
  std::vector<char> flipped(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const AdvPair& p = pairs[i];
    try {
      auto it = by_id.find(p.orig_id);
      if (it == by_id.end()) throw DataError("unknown orig_id '" + p.orig_id + "'");
      const auto snippet = make_snippet(p.code, it->second->language,
                                        p.identifiers ? p.identifiers : it->second->identifiers);
      flipped[i] = predictor(snippet, p.orig_id) != p.label;
    } catch (const Error&) {
      detail::rethrow_with_prefix("adversarial pair '" + p.id + "': ");
    }
  });
  return static_cast<double>(std::count(flipped.begin(), flipped.end(), 1)) /
         static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Certificates

struct CertificateRecord {
  std::string id;
  Certificate cert;
};

inline nlohmann::json to_json(const CertificateRecord& r) {
  const Certificate& c = r.cert;
  nlohmann::json j{{"id", r.id},
                   {"predicted", c.predicted},
                   {"truth", c.truth},
                   {"abstained", c.abstained},
                   {"radius", c.radius ? static_cast<long long>(*c.radius) : -1LL},
                   {"h", c.h},
                   {"k", c.k},
                   {"n_c", c.n_c},
                   {"n", c.n},
                   {"uncertified", c.uncertified}};
  j["lower"] = c.bounds ? nlohmann::json(c.bounds->lower) : nlohmann::json(nullptr);
  j["upper"] = c.bounds ? nlohmann::json(c.bounds->upper) : nlohmann::json(nullptr);
  return j;
}

inline CertificateRecord parse_certificate(const nlohmann::json& j) {
  CertificateRecord r;
  r.id = detail::string_field(j, "id");
  Certificate& c = r.cert;
  c.predicted = detail::label_field(j, "predicted");
  c.truth = detail::label_field(j, "truth");
  c.abstained = detail::field(j, "abstained").get<bool>();
  const long long radius = detail::field(j, "radius").get<long long>();
  if (c.abstained != (radius < 0)) throw DataError("radius must be -1 exactly when abstained");
  if (radius >= 0) c.radius = static_cast<std::size_t>(radius);
  c.h = detail::field(j, "h").get<std::size_t>();
  c.k = detail::field(j, "k").get<std::size_t>();
  c.n_c = detail::field(j, "n_c").get<std::size_t>();
  c.n = detail::field(j, "n").get<std::size_t>();
  c.uncertified = detail::field(j, "uncertified").get<bool>();
  const auto& lower = detail::field(j, "lower");
  const auto& upper = detail::field(j, "upper");
  if (!lower.is_null() && !upper.is_null()) c.bounds = ConfidenceBounds{lower.get<double>(), upper.get<double>(), 0.0};
  return r;
}

inline std::vector<CertificateRecord> load_certificates(const std::filesystem::path& path) {
  return detail::load_jsonl(path, parse_certificate);
}

inline std::string certificates_jsonl(std::span<const CertificateRecord> certs) {
  std::string out;
  for (const auto& c : certs) {
    out += to_json(c).dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<CertificateRecord> certify_records(std::span<const DatasetRecord> records,
                                                      const SmoothingConfig& config,
                                                      ClassifierAdapter& adapter,
                                                      std::size_t threads = 1,
                                                      const CertifyOptions& options = {}) {
  config.validate();
  std::vector<CertificateRecord> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const DatasetRecord& r = records[i];
    try {
      out[i] = {r.id, certify(make_snippet(r), r.label, config, adapter, {r.id, 1}, options)};
    } catch (const Error&) {
      detail::rethrow_with_prefix("record '" + r.id + "': ");
    }
  });
  return out;
}

struct RadiusSummary {
  double ncrr = 0.0;
  double mean_radius = 0.0;
  double abstain_rate = 0.0;
  std::size_t count = 0;
  std::size_t abstained = 0;
  std::size_t zero_h_excluded = 0;  // records left out of NCRR (r/h undefined)
};

/// NCRR averages r/h with abstentions as 0 and h = 0 records excluded;
/// mean radius averages non-abstained certificates only.
inline RadiusSummary summarize_certificates(std::span<const CertificateRecord> certs) {
  if (certs.empty()) throw UsageError("no certificates to summarize");
  RadiusSummary s;
  s.count = certs.size();
  double ratio_sum = 0.0;
  double radius_sum = 0.0;
  std::size_t ratio_n = 0;
  for (const auto& [id, c] : certs) {
    if (c.abstained) ++s.abstained;
    else radius_sum += static_cast<double>(c.radius.value_or(0));
    if (c.h == 0) {
      ++s.zero_h_excluded;
      continue;
    }
    ++ratio_n;
    if (!c.abstained) ratio_sum += static_cast<double>(c.radius.value_or(0)) / static_cast<double>(c.h);
  }
  s.ncrr = ratio_n ? ratio_sum / static_cast<double>(ratio_n) : 0.0;
  const std::size_t answered = s.count - s.abstained;
  s.mean_radius = answered ? radius_sum / static_cast<double>(answered) : 0.0;
  s.abstain_rate = static_cast<double>(s.abstained) / static_cast<double>(s.count);
  return s;
}

inline double ncrr(std::span<const CertificateRecord> certs) {
  return summarize_certificates(certs).ncrr;
}

// ---------------------------------------------------------------------------
// Naive attack

namespace detail {

inline std::string random_name(RandomStream& rng, std::string_view alphabet) {
  std::string starters;
  for (char c : alphabet)
    if (is_ident_start(c)) starters.push_back(c);
  const std::size_t length = 1 + static_cast<std::size_t>(rng.below(8));
  std::string name(1, starters[static_cast<std::size_t>(rng.below(starters.size()))]);
  while (name.size() < length) name.push_back(alphabet[static_cast<std::size_t>(rng.below(alphabet.size()))]);
  return name;
}

}  // namespace detail

struct AttackOptions {
  std::size_t max_changes = 3;
  std::size_t max_queries = 50;
  std::uint64_t seed = 0;
};

/// Tries up to max_queries random renamings of 1..max_changes identifiers
/// and returns the first one the adapter labels differently from `label`.
/// The pair lists the renamed identifier table; attack_record drops it for
/// records without an annotation.
inline std::optional<AdvPair> naive_random_rename_attack(const CodeSnippet& snippet,
                                                         std::string_view id, Label label,
                                                         ClassifierAdapter& adapter,
                                                         const AttackOptions& options) {
  const std::size_t h = snippet.identifier_count();
  if (h == 0 || options.max_changes == 0) return std::nullopt;
  RandomStream rng(options.seed, fnv1a64(id), 0);
  const std::string language(to_string(snippet.language()));
  WordSet taken = snippet.word_names();
  taken.insert(snippet.denylist().begin(), snippet.denylist().end());

  for (std::size_t q = 0; q < options.max_queries; ++q) {
    const std::size_t changes = 1 + static_cast<std::size_t>(rng.below(std::min(h, options.max_changes)));
    std::vector<std::pair<std::size_t, std::string>> renames;
    WordSet used = taken;
    for (std::size_t entry : select_subset(h, changes, rng)) {
      std::string name;
      do name = detail::random_name(rng, kDefaultAlphabet);
      while (used.contains(name) || is_keyword(name, snippet.language()));
      used.insert(name);
      renames.emplace_back(entry, std::move(name));
    }
    CodeSnippet variant = rename_entries(snippet, renames);
    const ClassifyItem item{std::string(id) + "#q" + std::to_string(q), variant.source(), language};
    if (classify_batch(adapter, std::span(&item, 1)).front().label != label) {
      std::vector<std::string> names;
      for (const auto& e : variant.identifiers()) names.push_back(e.name);
      return AdvPair{std::string(id) + "#adv", std::string(id), variant.source(), label, std::move(names)};
    }
  }
  return std::nullopt;
}

inline std::optional<AdvPair> attack_record(const DatasetRecord& record, ClassifierAdapter& adapter,
                                            const AttackOptions& options) {
  auto pair = naive_random_rename_attack(make_snippet(record), record.id, record.label, adapter, options);
  if (pair && !record.identifiers) pair->identifiers.reset();
  return pair;
}

// ---------------------------------------------------------------------------
// Reports

struct SampleRow {
  std::string id;
  Label predicted = 0;
  Label truth = 0;
  long long radius = -1;  // -1 when abstained
  std::size_t h = 0;
  double score = 0.0;  // fraction of smoothed votes for the ground truth
};

struct EvalReport {
  std::optional<double> acc;
  std::optional<double> asr;
  double ncrr = 0.0;
  double mean_radius = 0.0;
  double abstain_rate = 0.0;
  std::size_t zero_h_excluded = 0;
  std::size_t n_records = 0;
  std::size_t n_adv = 0;
  std::string model;
  SmoothingConfig config;
  std::vector<SampleRow> per_sample;
};

inline std::vector<SampleRow> sample_rows(std::span<const CertificateRecord> certs) {
  std::vector<SampleRow> rows;
  rows.reserve(certs.size());
  for (const auto& [id, c] : certs)
    rows.push_back({id, c.predicted, c.truth, c.radius ? static_cast<long long>(*c.radius) : -1LL,
                    c.h, c.n ? static_cast<double>(c.n_c) / static_cast<double>(c.n) : 0.0});
  std::sort(rows.begin(), rows.end(), [](const SampleRow& a, const SampleRow& b) { return a.id < b.id; });
  return rows;
}

inline void apply_summary(EvalReport& report, std::span<const CertificateRecord> certs) {
  const RadiusSummary s = summarize_certificates(certs);
  report.ncrr = s.ncrr;
  report.mean_radius = s.mean_radius;
  report.abstain_rate = s.abstain_rate;
  report.zero_h_excluded = s.zero_h_excluded;
  report.per_sample = sample_rows(certs);
}

/// Rounds to 6 decimals so serialized reports are bit-stable.
inline double fixed6(double v) { return std::round(v * 1e6) / 1e6; }

inline nlohmann::json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(fixed6(*v)) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.per_sample)
    rows.push_back({{"id", s.id}, {"predicted", s.predicted}, {"truth", s.truth}, {"radius", s.radius},
                    {"h", s.h}, {"score", fixed6(s.score)}});
  std::vector<std::string> ops;
  for (EditOp op : r.config.op_set) ops.emplace_back(to_string(op));
  return {{"acc", opt(r.acc)},
          {"asr", opt(r.asr)},
          {"ncrr", fixed6(r.ncrr)},
          {"mean_radius", fixed6(r.mean_radius)},
          {"abstain_rate", fixed6(r.abstain_rate)},
          {"zero_h_excluded", r.zero_h_excluded},
          {"n_records", r.n_records},
          {"n_adv", r.n_adv},
          {"model", r.model},
          {"config",
           {{"n_samples", r.config.n_samples},
            {"perturb_fraction", fixed6(r.config.perturb_fraction)},
            {"eta", fixed6(r.config.eta)},
            {"mode", to_string(r.config.mode)},
            {"ops", ops},
            {"alpha", r.config.alpha},
            {"seed", r.config.seed}}},
          {"per_sample", rows}};
}

inline std::string report_json(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

inline std::string report_csv(const EvalReport& r) {
  std::string out = "id,predicted,truth,radius,h,score\n";
  char buf[64];
  for (const auto& s : r.per_sample) {
    std::string id = s.id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : id) {
        if (c == '"') quoted.push_back('"');
        quoted.push_back(c);
      }
      id = quoted + "\"";
    }
    std::snprintf(buf, sizeof buf, "%.6f", fixed6(s.score));
    out += id + "," + std::to_string(s.predicted) + "," + std::to_string(s.truth) + "," +
           std::to_string(s.radius) + "," + std::to_string(s.h) + "," + buf + "\n";
  }
  return out;
}

enum class ReportFormat { json, csv };

inline ReportFormat report_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json") return ReportFormat::json;
  if (ext == ".csv") return ReportFormat::csv;
  throw UsageError("report path must end in .json or .csv: " + path.string());
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("short write to " + path.string());
}

inline void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  write_text(path, format == ReportFormat::json ? report_json(report) : report_csv(report));
}

}  // namespace codecert
