// SPDX-License-Identifier: Apache-2.0
// codecert: smoothing, certification and evaluation front end.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "codecert/certification.hpp"
#include "codecert/code_model.hpp"
#include "codecert/error.hpp"
#include "codecert/evaluation.hpp"
#include "codecert/model_spec.hpp"
#include "codecert/oracle.hpp"
#include "codecert/perturbation.hpp"
#include "json.hpp"

namespace cc = codecert;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cc::DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text << std::flush;
  else
    cc::write_text(path, text);
}

struct SmoothingFlags {
  std::size_t n = 100;
  double perturb_fraction = 0.9;
  double eta = 0.6;
  std::string mode;
  std::string ops = "insert,replace,delete";
  std::string alphabet{cc::kDefaultAlphabet};
  double alpha = 0.001;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 64;

  void add_to(CLI::App* cmd, bool with_alpha) {
    cmd->add_option("--n", n, "Smoothed samples per snippet")->capture_default_str();
    cmd->add_option("--perturb-fraction", perturb_fraction, "Fraction of identifiers perturbed")
        ->capture_default_str();
    cmd->add_option("--eta", eta, "Perturbation rate (edits per identifier character)")
        ->capture_default_str();
    cmd->add_option("--mode", mode, "edit or mask");
    cmd->add_option("--ops", ops, "Comma-separated edit operations")->capture_default_str();
    cmd->add_option("--alphabet", alphabet, "Characters for inserted/replaced positions");
    if (with_alpha) cmd->add_option("--alpha", alpha, "Confidence level")->capture_default_str();
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_option("--max-attempts", max_attempts, "Resampling attempts per identifier")
        ->capture_default_str();
  }

  cc::SmoothingConfig build(cc::SmoothingMode default_mode) const {
    cc::SmoothingConfig c;
    c.n_samples = n;
    c.perturb_fraction = perturb_fraction;
    c.eta = eta;
    c.mode = mode.empty() ? default_mode : cc::smoothing_mode_from_string(mode);
    c.op_set.clear();
    // Keep the given order: the op list is indexed by the sampler.
    std::stringstream list(ops);
    for (std::string op; std::getline(list, op, ',');) {
      if (op.empty()) continue;
      const auto parsed = cc::edit_op_from_string(op);
      if (std::find(c.op_set.begin(), c.op_set.end(), parsed) == c.op_set.end()) c.op_set.push_back(parsed);
    }
    c.alphabet = alphabet;
    c.alpha = alpha;
    c.seed = seed;
    c.max_attempts = max_attempts;
    c.validate();
    return c;
  }
};

struct ModelFlags {
  std::string model;
  std::string labels;
  std::size_t batch_limit = 64;
  double timeout_s = 30.0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--model", model,
                    "builtin:NAME[?k=v&...], subprocess:CMD or http:URL (default: $CODECERT_MODEL)");
    cmd->add_option("--labels", labels, "Comma-separated label ids for transport models");
    cmd->add_option("--batch-limit", batch_limit, "Items per transport request")->capture_default_str();
    cmd->add_option("--timeout", timeout_s, "Transport timeout in seconds")->capture_default_str();
  }

  std::unique_ptr<cc::ClassifierAdapter> build() const {
    std::string spec = model;
    if (spec.empty())
      if (const char* env = std::getenv("CODECERT_MODEL")) spec = env;
    if (spec.empty()) throw cc::UsageError("no model given: pass --model or set CODECERT_MODEL");
    cc::AdapterSettings settings;
    if (!labels.empty()) settings.labels = cc::parse_label_list(labels);
    if (batch_limit == 0) throw cc::UsageError("--batch-limit must be positive");
    settings.batch_limit = batch_limit;
    if (!(timeout_s > 0)) throw cc::UsageError("--timeout must be positive");
    settings.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    return cc::make_adapter(spec, settings);
  }
};

json oracle_json(const cc::oracle::OracleReport& r) {
  return {{"quantity", r.quantity},
          {"analytic_value", r.analytic_value},
          {"oracle_value", r.oracle_value},
          {"trials_or_enumerated", r.trials_or_enumerated},
          {"abs_error", r.abs_error}};
}

int run(int argc, char** argv) {
  CLI::App app{"Randomized identifier smoothing and certified radii for code classifiers"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Print tokens and the identifier table of a source file");
  std::string tok_lang = "c", tok_file, tok_deny;
  tok->add_option("--lang", tok_lang, "c, java or generic")->capture_default_str();
  tok->add_option("--denylist", tok_deny, "Word list replacing the default denylist");
  tok->add_option("file", tok_file, "Source file")->required();

  // perturb
  auto* per = app.add_subcommand("perturb", "Print smoothed samples of a source file as JSONL");
  SmoothingFlags per_flags;
  per_flags.add_to(per, false);
  std::string per_lang = "c", per_file, per_id;
  per->add_option("--lang", per_lang, "c, java or generic")->capture_default_str();
  per->add_option("--id", per_id, "Snippet id keying the random streams");
  per->add_option("file", per_file, "Source file")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "Label every dataset record (smoothed unless --raw)");
  SmoothingFlags pred_flags;
  ModelFlags pred_model;
  pred_flags.add_to(pred, false);
  pred_model.add_to(pred);
  bool pred_raw = false;
  std::string pred_out, pred_data;
  pred->add_flag("--raw", pred_raw, "Query the model directly without smoothing");
  pred->add_option("--out", pred_out, "Output JSONL (default stdout)");
  pred->add_option("dataset", pred_data, "Dataset JSONL")->required();

  // certify
  auto* cert = app.add_subcommand("certify", "Write certificates for every dataset record");
  SmoothingFlags cert_flags;
  ModelFlags cert_model;
  cert_flags.add_to(cert, true);
  cert_model.add_to(cert);
  bool cert_unsound = false, cert_split = false;
  std::string cert_out, cert_data;
  cert->add_flag("--unsound-edit-certificates", cert_unsound,
                 "Allow --mode edit; the radius is then not a proven guarantee");
  cert->add_flag("--split-batches", cert_split, "Estimate the bound on a second, independent batch");
  cert->add_option("--out", cert_out, "Certificate JSONL (default stdout)");
  cert->add_option("dataset", cert_data, "Dataset JSONL")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Compute ACC, ASR, NCRR and mean radius");
  SmoothingFlags eval_flags;
  ModelFlags eval_model;
  eval_flags.add_to(eval, true);
  eval_model.add_to(eval);
  bool eval_raw = false, eval_unsound = false;
  std::string eval_adv, eval_certs, eval_report, eval_data;
  eval->add_option("--adv", eval_adv, "Adversarial pairs JSONL");
  eval->add_option("--certs", eval_certs, "Certificates JSONL (computed in mask mode when absent)");
  eval->add_option("--report", eval_report, "Report path ending in .json or .csv (default: JSON to stdout)");
  eval->add_flag("--raw", eval_raw, "Measure ACC and ASR of the undefended model");
  eval->add_flag("--unsound-edit-certificates", eval_unsound, "Compute certificates with the edit-mode config");
  eval->add_option("dataset", eval_data, "Dataset JSONL")->required();

  // attack
  auto* atk = app.add_subcommand("attack", "Run the naive random-rename attack against the raw model");
  ModelFlags atk_model;
  atk_model.add_to(atk);
  cc::AttackOptions atk_opts;
  std::string atk_out, atk_data;
  atk->add_option("--max-changes", atk_opts.max_changes, "Identifiers renamed per query")->capture_default_str();
  atk->add_option("--max-queries", atk_opts.max_queries, "Queries per record")->capture_default_str();
  atk->add_option("--seed", atk_opts.seed, "Random seed")->capture_default_str();
  atk->add_option("--out", atk_out, "Adversarial pairs JSONL (default stdout)");
  atk->add_option("dataset", atk_data, "Dataset JSONL")->required();

  // oracle
  auto* orc = app.add_subcommand("oracle", "Cross-check a certified quantity against an independent oracle");
  orc->require_subcommand(1);
  auto* o_beta = orc->add_subcommand("beta", "Product formula vs enumeration (or Monte Carlo with --trials)");
  o_beta->set_help_flag("--help", "Print this help message and exit");
  std::size_t ob_h = 10, ob_k = 3, ob_r = 2;
  std::uint64_t ob_trials = 0, ob_seed = 0;
  o_beta->add_option("--h", ob_h)->capture_default_str();
  o_beta->add_option("--k", ob_k)->capture_default_str();
  o_beta->add_option("--r", ob_r)->capture_default_str();
  o_beta->add_option("--trials", ob_trials, "Monte-Carlo trials; 0 enumerates")->capture_default_str();
  o_beta->add_option("--seed", ob_seed)->capture_default_str();

  auto* o_q = orc->add_subcommand("quantile", "Continued-fraction quantile vs quadrature");
  double oq_p = 0.001, oq_a = 100, oq_b = 1;
  o_q->add_option("--p", oq_p)->capture_default_str();
  o_q->add_option("--a", oq_a)->capture_default_str();
  o_q->add_option("--b", oq_b)->capture_default_str();

  auto* o_cov = orc->add_subcommand("coverage", "Exact binomial coverage vs simulation");
  double oc_p = 0.9, oc_alpha = 0.001;
  std::size_t oc_n = 1000;
  std::uint64_t oc_trials = 10000, oc_seed = 0;
  o_cov->add_option("--p", oc_p)->capture_default_str();
  o_cov->add_option("--n", oc_n)->capture_default_str();
  o_cov->add_option("--alpha", oc_alpha)->capture_default_str();
  o_cov->add_option("--trials", oc_trials)->capture_default_str();
  o_cov->add_option("--seed", oc_seed)->capture_default_str();

  auto* o_s = orc->add_subcommand("soundness", "Enumerate watch-membership adversaries within the radius");
  std::string os_lang = "c", os_file, os_watch;
  double os_pf = 0.9, os_alpha = 0.001;
  std::size_t os_n = 100;
  cc::Label os_hit = 1, os_miss = 0;
  o_s->add_option("--lang", os_lang)->capture_default_str();
  o_s->add_option("--watch", os_watch, "Comma-separated watched identifiers")->required();
  o_s->add_option("--hit", os_hit)->capture_default_str();
  o_s->add_option("--miss", os_miss)->capture_default_str();
  o_s->add_option("--n", os_n)->capture_default_str();
  o_s->add_option("--perturb-fraction", os_pf)->capture_default_str();
  o_s->add_option("--alpha", os_alpha)->capture_default_str();
  o_s->add_option("file", os_file, "Source file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (threads == 0) throw cc::UsageError("--threads must be positive");

  if (*tok) {
    std::shared_ptr<const cc::WordSet> deny;
    if (!tok_deny.empty()) deny = std::make_shared<const cc::WordSet>(cc::load_word_list(tok_deny));
    auto snippet = cc::CodeSnippet::parse(read_file(tok_file), cc::language_from_string(tok_lang), deny);
    json tokens = json::array();
    for (const auto& t : snippet.tokens())
      tokens.push_back({{"kind", cc::to_string(t.kind)}, {"text", t.text}, {"start", t.start}, {"end", t.end}});
    json table = json::array();
    for (const auto& e : snippet.identifiers()) table.push_back({{"name", e.name}, {"occurrences", e.occurrences}});
    std::cout << json{{"language", tok_lang}, {"tokens", tokens}, {"identifiers", table}}.dump() << "\n";
    return 0;
  }

  if (*per) {
    const auto config = per_flags.build(cc::SmoothingMode::edit);
    auto snippet = cc::CodeSnippet::parse(read_file(per_file), cc::language_from_string(per_lang));
    const auto batch = cc::generate_batch(snippet, config, per_id, threads);
    std::string out;
    for (const auto& s : batch) {
      json paths = json::array();
      for (const auto& p : s.paths) {
        json steps = json::array();
        for (const auto& st : p.steps) {
          json step{{"op", cc::to_string(st.op)}, {"position", st.position}};
          if (st.op != cc::EditOp::Delete) step["character"] = std::string(1, st.character);
          steps.push_back(step);
        }
        paths.push_back(steps);
      }
      json row{{"sample_index", s.sample_index}, {"perturbed", s.perturbed_indices}, {"code", s.snippet.source()}};
      if (config.mode == cc::SmoothingMode::edit) row["paths"] = paths;
      out += row.dump() + "\n";
    }
    std::cout << out;
    return 0;
  }

  if (*pred) {
    const auto records = cc::load_dataset(pred_data);
    auto adapter = pred_model.build();
    const auto config = pred_flags.build(cc::SmoothingMode::edit);
    std::vector<cc::Label> labels(records.size());
    std::vector<std::size_t> votes(records.size(), 1);
    cc::parallel_for(records.size(), threads, [&](std::size_t i) {
      try {
        const auto snippet = cc::make_snippet(records[i]);
        if (pred_raw) {
          labels[i] = cc::raw_predictor(*adapter)(snippet, records[i].id);
        } else {
          const auto p = cc::smoothed_predict(snippet, config, *adapter, {records[i].id, 1});
          labels[i] = p.label;
          votes[i] = p.tally.top_count;
        }
      } catch (const cc::Error&) {
        cc::detail::rethrow_with_prefix("record '" + records[i].id + "': ");
      }
    });
    std::string out;
    for (std::size_t i = 0; i < records.size(); ++i)
      out += json{{"id", records[i].id},
                  {"predicted", labels[i]},
                  {"truth", records[i].label},
                  {"votes", votes[i]},
                  {"n", pred_raw ? std::size_t{1} : config.n_samples}}
                 .dump() +
             "\n";
    write_output(pred_out, out);
    return 0;
  }

  if (*cert) {
    const auto config = cert_flags.build(cc::SmoothingMode::mask);
    if (config.mode == cc::SmoothingMode::edit && !cert_unsound)
      throw cc::UsageError("certify runs in mask mode; pass --unsound-edit-certificates to use edit mode");
    const auto records = cc::load_dataset(cert_data);
    auto adapter = cert_model.build();
    const auto certs = cc::certify_records(records, config, *adapter, threads, {cert_split, cert_unsound});
    write_output(cert_out, cc::certificates_jsonl(certs));
    return 0;
  }

  if (*eval) {
    const auto records = cc::load_dataset(eval_data);
    if (records.empty()) throw cc::DataError("dataset " + eval_data + " is empty");
    auto adapter = eval_model.build();
    const auto config = eval_flags.build(cc::SmoothingMode::edit);
    const auto predictor = eval_raw ? cc::raw_predictor(*adapter) : cc::smoothed_predictor(*adapter, config);

    cc::EvalReport report;
    report.model = eval_raw ? adapter->describe() + " (raw)" : adapter->describe();
    report.config = config;
    report.n_records = records.size();
    report.acc = cc::accuracy(predictor, records, threads);
    if (!eval_adv.empty()) {
      const auto pairs = cc::load_adv(eval_adv);
      report.n_adv = pairs.size();
      if (!pairs.empty()) report.asr = cc::attack_success_rate(predictor, pairs, records, threads);
    }
    std::vector<cc::CertificateRecord> certs;
    if (!eval_certs.empty()) {
      certs = cc::load_certificates(eval_certs);
    } else {
      auto cert_config = config;
      if (!eval_unsound) cert_config.mode = cc::SmoothingMode::mask;
      certs = cc::certify_records(records, cert_config, *adapter, threads, {false, eval_unsound});
    }
    cc::apply_summary(report, certs);
    if (report.zero_h_excluded)
      std::cerr << "warning: " << report.zero_h_excluded
                << " record(s) without identifiers excluded from NCRR\n";
    if (eval_report.empty())
      std::cout << cc::report_json(report);
    else
      cc::emit_report(report, eval_report, cc::report_format_for(eval_report));
    return 0;
  }

  if (*atk) {
    const auto records = cc::load_dataset(atk_data);
    auto adapter = atk_model.build();
    std::vector<std::optional<cc::AdvPair>> found(records.size());
    cc::parallel_for(records.size(), threads, [&](std::size_t i) {
      try {
        found[i] = cc::attack_record(records[i], *adapter, atk_opts);
      } catch (const cc::Error&) {
        cc::detail::rethrow_with_prefix("record '" + records[i].id + "': ");
      }
    });
    std::string out;
    std::size_t hits = 0;
    for (const auto& f : found)
      if (f) {
        out += cc::to_json(*f).dump() + "\n";
        ++hits;
      }
    write_output(atk_out, out);
    std::cerr << hits << " of " << records.size() << " records flipped\n";
    return 0;
  }

  if (*orc) {
    cc::oracle::OracleReport r;
    json extra = json::object();
    if (*o_beta) {
      const double analytic = cc::beta_factor(ob_h, ob_k, ob_r);
      if (ob_trials == 0) {
        const auto f = cc::oracle::enumerate_beta(ob_h, ob_k, ob_r);
        r = cc::oracle::make_report("beta", analytic, f.value(), f.denominator);
      } else {
        r = cc::oracle::make_report("beta", analytic,
                                    cc::oracle::mc_beta_estimate(ob_h, ob_k, ob_r, ob_trials, ob_seed), ob_trials);
      }
    } else if (*o_q) {
      const double analytic = cc::math::beta_quantile(oq_p, oq_a, oq_b);  // numerics errors first
      r = cc::oracle::make_report("quantile", analytic, cc::oracle::beta_quantile_oracle(oq_p, oq_a, oq_b), 0);
    } else if (*o_cov) {
      const double analytic = cc::oracle::exact_coverage(oc_p, oc_n, oc_alpha);
      r = cc::oracle::make_report("coverage", analytic,
                                  cc::oracle::coverage_experiment(oc_p, oc_n, oc_alpha, oc_trials, oc_seed),
                                  oc_trials);
    } else if (*o_s) {
      auto snippet = cc::CodeSnippet::parse(read_file(os_file), cc::language_from_string(os_lang));
      cc::SmoothingConfig config;
      config.mode = cc::SmoothingMode::mask;
      config.n_samples = os_n;
      config.perturb_fraction = os_pf;
      config.alpha = os_alpha;
      const cc::IdentifierPresenceClassifier classifier(cc::detail::split_words(os_watch), os_hit, os_miss);
      const auto sweep = cc::oracle::soundness_sweep(snippet, config, classifier);
      r = cc::oracle::make_report("soundness_violations", 0.0, static_cast<double>(sweep.violations),
                                  sweep.adversaries);
      extra["radius"] = sweep.certificate.radius.value_or(0);
      extra["uncertified"] = sweep.certificate.uncertified;
      extra["h"] = sweep.certificate.h;
      extra["k"] = sweep.certificate.k;
    }
    json j = oracle_json(r);
    j.update(extra);
    std::cout << j.dump() << "\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cc::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
