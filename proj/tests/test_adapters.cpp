// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "codecert/adapters.hpp"
#include "codecert/evaluation.hpp"
#include "codecert/http_adapter.hpp"
#include "codecert/model_spec.hpp"
#include "codecert/subprocess_adapter.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace codecert;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = fs::path(CODECERT_FIXTURE_DIR) / "golden_presence.jsonl";

std::vector<ClassifyItem> items_of(const std::vector<DatasetRecord>& records) {
  std::vector<ClassifyItem> items;
  for (const auto& r : records) items.push_back({r.id, r.code, r.language});
  return items;
}

std::vector<Label> labels_of(const std::vector<ClassifyResult>& results) {
  std::vector<Label> out;
  for (const auto& r : results) out.push_back(r.label);
  return out;
}

std::vector<Label> expected_labels(const std::vector<DatasetRecord>& records) {
  std::vector<Label> out;
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("codecert_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string child_command(const std::string& flags = "") {
  return std::string(CODECERT_MAPPING_CHILD) + " '" + kGolden.string() + "' " + flags;
}

SubprocessOptions child_options(const std::string& flags = "") {
  SubprocessOptions o;
  o.command = child_command(flags);
  o.batch_limit = 5;
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

// --- builtins ---------------------------------------------------------------

TEST(Builtin, ConstantOnThreeItems) {
  ConstantClassifier model(0);
  const std::vector<ClassifyItem> items{{"a", "int x;", "c"}, {"b", "", "c"}, {"c", "y", "generic"}};
  EXPECT_EQ(labels_of(classify_batch(model, items)), (std::vector<Label>{0, 0, 0}));
}

TEST(Builtin, IdentifierPresenceHandExamples) {
  IdentifierPresenceClassifier model(WordSet{"env"});
  const std::vector<ClassifyItem> items{{"a", "int f(void *env){}", "c"}, {"b", "int f(void *vmask0){}", "c"}};
  EXPECT_EQ(labels_of(classify_batch(model, items)), (std::vector<Label>{1, 0}));
  IdentifierPresenceClassifier empty(WordSet{});
  EXPECT_EQ(classify_batch(empty, std::span(items.data(), 1)).front().label, 0);
  IdentifierPresenceClassifier all(WordSet{"f", "env"}, 7, 3);
  EXPECT_EQ(classify_batch(all, std::span(items.data(), 1)).front().label, 7);
  EXPECT_EQ(all.label_space().ids, (std::vector<Label>{3, 7}));
}

TEST(Builtin, IdentifierPresenceGoldenFixtures) {
  const auto records = load_dataset(kGolden);
  IdentifierPresenceClassifier model(WordSet{"env", "buf"});
  EXPECT_EQ(labels_of(classify_batch(model, items_of(records))), expected_labels(records));
}

TEST(Builtin, KeywordDensity) {
  KeywordDensityClassifier model(WordSet{"goto"}, 0.25);
  const std::vector<ClassifyItem> items{
      {"none", "int x;", "c"},
      {"all", "goto goto", "c"},
      {"exact", "goto a ; b", "c"},  // 1 of 4 tokens: not strictly above
      {"above", "goto a ;", "c"},
      {"empty", "", "c"},
  };
  EXPECT_EQ(labels_of(classify_batch(model, items)), (std::vector<Label>{0, 1, 0, 1, 0}));
}

TEST(Builtin, KeywordDensityIgnoresIdentifierEdits) {
  KeywordDensityClassifier model(WordSet{"while", "goto"}, 0.1);
  const auto s = CodeSnippet::parse("while (a) goto b; int c = a;", Language::c);
  const auto r = rename_identifier(rename_identifier(s, "a", "zz"), "b", "q1");
  EXPECT_EQ(model.classify(s), model.classify(r));
}

TEST(Builtin, TokenHash) {
  TokenHashClassifier model(2);
  const auto a = CodeSnippet::parse("int f(int x) { return x; }", Language::c);
  EXPECT_EQ(model.classify(a), model.classify(a));
  // Whitespace never matters.
  EXPECT_EQ(model.classify(a), model.classify(CodeSnippet::parse("int f(int x){return x;}", Language::c)));
  TokenHashClassifier one(1);
  EXPECT_EQ(one.classify(a), 0);
  // Some single-identifier renames flip the hash.
  int flips = 0;
  for (char c = 'a'; c <= 'z'; ++c) flips += model.classify(rename_identifier(a, "x", std::string("x") + c)) != model.classify(a);
  EXPECT_GT(flips, 0);
  EXPECT_THROW(TokenHashClassifier(0), UsageError);
}

TEST(Builtin, ReferentiallyTransparent) {
  const auto records = load_dataset(kGolden);
  TokenHashClassifier model(3);
  EXPECT_EQ(labels_of(classify_batch(model, items_of(records))), labels_of(classify_batch(model, items_of(records))));
}

TEST(Builtin, BadSourceIsAdapterError) {
  ConstantClassifier model(0);
  const std::vector<ClassifyItem> items{{"a", "\"open", "c"}};
  EXPECT_THROW(classify_batch(model, items), AdapterError);
}

TEST(ClassifyBatch, RejectsEmptyAndDuplicateIds) {
  ConstantClassifier model(0);
  EXPECT_THROW(classify_batch(model, std::vector<ClassifyItem>{}), UsageError);
  const std::vector<ClassifyItem> dup{{"a", "x", "c"}, {"a", "y", "c"}};
  EXPECT_THROW(classify_batch(model, dup), UsageError);
}

namespace {

// Answers with a scripted transformation of the correct results.
class ScriptedAdapter final : public ClassifierAdapter {
 public:
  enum class Fault { none, reverse, drop, extra, unknown_id, repeat_id, bad_label };
  explicit ScriptedAdapter(Fault f) : fault_(f) {}
  AdapterKind kind() const noexcept override { return AdapterKind::builtin; }
  std::string describe() const override { return "scripted"; }
  const LabelSpace& label_space() const noexcept override { return labels_; }
  std::size_t batch_limit() const noexcept override { return 2; }
  std::vector<ClassifyResult> classify_chunk(std::span<const ClassifyItem> items) override {
    std::vector<ClassifyResult> out;
    for (const auto& i : items) out.push_back({i.id, static_cast<Label>(i.code.size() % 2)});
    switch (fault_) {
      case Fault::none: break;
      case Fault::reverse: std::reverse(out.begin(), out.end()); break;
      case Fault::drop: out.pop_back(); break;
      case Fault::extra: out.push_back(out.front()); break;
      case Fault::unknown_id: out.front().id = "zzz"; break;
      case Fault::repeat_id: out.back().id = out.front().id; break;
      case Fault::bad_label: out.front().label = 5; break;
    }
    return out;
  }

 private:
  Fault fault_;
  LabelSpace labels_{{0, 1}, {}};
};

}  // namespace

TEST(ClassifyBatch, ValidatesResponses) {
  using F = ScriptedAdapter::Fault;
  const std::vector<ClassifyItem> items{{"a", "x", "c"}, {"b", "yy", "c"}, {"c", "zzz", "c"}};
  const std::vector<Label> expected{1, 0, 1};
  ScriptedAdapter ok(F::none), rev(F::reverse);
  EXPECT_EQ(labels_of(classify_batch(ok, items)), expected);
  EXPECT_EQ(labels_of(classify_batch(rev, items)), expected);
  for (F f : {F::drop, F::extra, F::unknown_id, F::repeat_id}) {
    ScriptedAdapter bad(f);
    EXPECT_THROW(classify_batch(bad, items), MalformedResponseError);
  }
  ScriptedAdapter label(F::bad_label);
  EXPECT_THROW(classify_batch(label, items), LabelSpaceError);
}

// --- model strings ----------------------------------------------------------

TEST(ModelSpec, Builtins) {
  EXPECT_EQ(make_adapter("builtin:constant?label=4")->describe(), "builtin:constant?label=4");
  EXPECT_EQ(make_adapter("builtin:identifier_presence?watch=env,buf&hit=2&miss=1")->describe(),
            "builtin:identifier_presence?watch=buf,env&hit=2&miss=1");
  EXPECT_EQ(make_adapter("builtin:token_hash?labels=5")->label_space().ids.size(), 5u);
  EXPECT_NE(make_adapter("builtin:keyword_density?triggers=goto&threshold=0.1"), nullptr);
  EXPECT_THROW(make_adapter("builtin:nope"), UsageError);
  EXPECT_THROW(make_adapter("builtin:constant?label=x"), UsageError);
  EXPECT_THROW(make_adapter("builtin:constant?label"), UsageError);
  EXPECT_THROW(make_adapter("ftp://x"), UsageError);
  EXPECT_THROW(parse_label_list(""), UsageError);
  EXPECT_EQ(parse_label_list("2,0,1").ids, (std::vector<Label>{0, 1, 2}));
}

// --- subprocess -------------------------------------------------------------

TEST(Subprocess, MappedLabelsDespiteReversedAnswers) {
  const auto records = load_dataset(kGolden);
  SubprocessAdapter adapter(child_options());
  EXPECT_EQ(labels_of(classify_batch(adapter, items_of(records))), expected_labels(records));
  // The same child serves a second call.
  EXPECT_EQ(labels_of(classify_batch(adapter, items_of(records))), expected_labels(records));
}

TEST(Subprocess, ThroughModelString) {
  const auto records = load_dataset(kGolden);
  AdapterSettings settings;
  settings.batch_limit = 4;
  auto adapter = make_adapter("subprocess:" + child_command(), settings);
  EXPECT_EQ(adapter->kind(), AdapterKind::subprocess);
  EXPECT_EQ(labels_of(classify_batch(*adapter, items_of(records))), expected_labels(records));
}

TEST(Subprocess, ConcurrentCallersStayAligned) {
  const auto records = load_dataset(kGolden);
  SubprocessAdapter adapter(child_options());
  std::atomic<int> mismatches{0};
  std::vector<std::jthread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 5; ++i)
        if (labels_of(classify_batch(adapter, items_of(records))) != expected_labels(records)) ++mismatches;
    });
  threads.clear();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Subprocess, LargePayloadDoesNotDeadlock) {
  // Requests far larger than a pipe buffer.
  std::vector<ClassifyItem> items;
  for (int i = 0; i < 64; ++i) items.push_back({std::to_string(i), std::string(20000, 'x'), "c"});
  auto options = child_options();
  options.batch_limit = 64;
  SubprocessAdapter adapter(options);
  EXPECT_EQ(classify_batch(adapter, items).size(), 64u);
}

TEST(Subprocess, MalformedAnswerIsNotRetried) {
  const auto log = temp_path("malformed.log");
  fs::remove(log);
  SubprocessAdapter adapter(child_options("--malformed --log '" + log.string() + "'"));
  const std::vector<ClassifyItem> items{{"a", "int x;", "c"}};
  EXPECT_THROW(classify_batch(adapter, items), MalformedResponseError);
  std::ifstream in(log);
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 1);
}

TEST(Subprocess, LabelOutsideSpace) {
  SubprocessAdapter adapter(child_options("--bad-label"));
  const std::vector<ClassifyItem> items{{"a", "int x;", "c"}};
  EXPECT_THROW(classify_batch(adapter, items), LabelSpaceError);
}

TEST(Subprocess, TimeoutAfterRetries) {
  auto options = child_options("--hang");
  options.timeout = std::chrono::milliseconds(150);
  SubprocessAdapter adapter(options);
  const std::vector<ClassifyItem> items{{"a", "int x;", "c"}};
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(classify_batch(adapter, items), TransportError);
  EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(3 * 150));
}

TEST(Subprocess, RestartsAfterCrash) {
  const auto marker = temp_path("crash.marker");
  fs::remove(marker);
  SubprocessAdapter adapter(child_options("--crash-once '" + marker.string() + "'"));
  const auto records = load_dataset(kGolden);
  EXPECT_EQ(labels_of(classify_batch(adapter, items_of(records))), expected_labels(records));
  EXPECT_TRUE(fs::exists(marker));
}

TEST(Subprocess, MissingProgramIsTransportError) {
  SubprocessOptions o;
  o.command = "/nonexistent/classifier-binary";
  o.backoff = std::chrono::milliseconds(1);
  SubprocessAdapter adapter(o);
  const std::vector<ClassifyItem> items{{"a", "int x;", "c"}};
  EXPECT_THROW(classify_batch(adapter, items), TransportError);
}

TEST(Subprocess, ResultLineParsing) {
  EXPECT_EQ(detail::parse_result_line(R"({"id":"a","label":3})").label, 3);
  EXPECT_THROW(detail::parse_result_line("nope"), MalformedResponseError);
  EXPECT_THROW(detail::parse_result_line(R"({"id":1,"label":3})"), MalformedResponseError);
  EXPECT_THROW(detail::parse_result_line(R"({"id":"a","label":"3"})"), MalformedResponseError);
}

// --- HTTP -------------------------------------------------------------------

namespace {

// In-process service speaking the wire protocol with the presence rule.
class ToyService {
 public:
  ToyService() {
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","labels":[0,1]})", "application/json");
    });
    server_.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (fail_next_ > 0) {
        --fail_next_;
        res.status = 503;
        return;
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      if (bad_request_) {
        res.status = 400;
        return;
      }
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : body.at("items")) {
        const auto snippet = CodeSnippet::parse(item.at("code").get<std::string>(),
                                                language_from_string(item.at("language").get<std::string>()));
        items.push_back({{"id", item.at("id")}, {"label", model_.classify(snippet)}});
      }
      std::reverse(items.begin(), items.end());
      if (garbage_) {
        res.set_content("{\"items\": [", "application/json");
        return;
      }
      res.set_content(nlohmann::json{{"items", items}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ToyService() { server_.stop(); }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> requests_{0};
  std::atomic<int> fail_next_{0};
  std::atomic<bool> bad_request_{false};
  std::atomic<bool> garbage_{false};
  std::chrono::milliseconds delay_{0};

 private:
  IdentifierPresenceClassifier model_{WordSet{"env", "buf"}};
  httplib::Server server_;
  int port_ = 0;
  std::jthread thread_;
};

HttpOptions http_options(const std::string& url) {
  HttpOptions o;
  o.base_url = url;
  o.batch_limit = 3;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::milliseconds(2000);
  return o;
}

}  // namespace

TEST(Http, MatchesBuiltinOnGoldenFixtures) {
  ToyService service;
  HttpAdapter adapter(http_options(service.url()));
  EXPECT_EQ(adapter.label_space().ids, (std::vector<Label>{0, 1}));
  const auto records = load_dataset(kGolden);
  IdentifierPresenceClassifier builtin(WordSet{"env", "buf"});
  const auto items = items_of(records);
  EXPECT_EQ(labels_of(classify_batch(adapter, items)), labels_of(classify_batch(builtin, items)));
  EXPECT_EQ(labels_of(classify_batch(adapter, items)), expected_labels(records));
  EXPECT_EQ(service.requests_.load(), 2 * 4);  // 12 items in chunks of 3, twice
}

TEST(Http, ConcurrentChunksStayAligned) {
  ToyService service;
  service.delay_ = std::chrono::milliseconds(5);
  auto options = http_options(service.url());
  options.batch_limit = 1;
  options.max_in_flight = 4;
  HttpAdapter adapter(options);
  const auto records = load_dataset(kGolden);
  EXPECT_EQ(labels_of(classify_batch(adapter, items_of(records))), expected_labels(records));
}

TEST(Http, RetriesServerErrors) {
  ToyService service;
  service.fail_next_ = 2;
  HttpAdapter adapter(http_options(service.url()));
  const std::vector<ClassifyItem> items{{"a", "int env;", "c"}};
  EXPECT_EQ(classify_batch(adapter, items).front().label, 1);
  EXPECT_EQ(service.requests_.load(), 3);
  service.fail_next_ = 3;
  EXPECT_THROW(classify_batch(adapter, items), TransportError);
}

TEST(Http, ClientErrorsAndGarbageAreMalformed) {
  ToyService service;
  HttpAdapter adapter(http_options(service.url()));
  const std::vector<ClassifyItem> items{{"a", "int env;", "c"}};
  service.bad_request_ = true;
  EXPECT_THROW(classify_batch(adapter, items), MalformedResponseError);
  EXPECT_EQ(service.requests_.load(), 1);
  service.bad_request_ = false;
  service.garbage_ = true;
  EXPECT_THROW(classify_batch(adapter, items), MalformedResponseError);
}

TEST(Http, LabelsOutsideAdvertisedSpace) {
  ToyService service;
  auto options = http_options(service.url());
  options.labels = LabelSpace{{0}, {}};
  HttpAdapter adapter(options);
  const std::vector<ClassifyItem> items{{"a", "int env;", "c"}};
  EXPECT_THROW(classify_batch(adapter, items), LabelSpaceError);
}

TEST(Http, TimeoutIsTransportError) {
  ToyService service;
  service.delay_ = std::chrono::milliseconds(600);
  auto options = http_options(service.url());
  options.timeout = std::chrono::milliseconds(150);
  options.max_attempts = 2;
  HttpAdapter adapter(options);
  const std::vector<ClassifyItem> items{{"a", "int env;", "c"}};
  EXPECT_THROW(classify_batch(adapter, items), TransportError);
}

TEST(Http, UnreachableServiceIsTransportError) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto options = http_options("http://127.0.0.1:" + std::to_string(port));
  EXPECT_THROW(HttpAdapter{options}, TransportError);
  options.labels = LabelSpace{{0, 1}, {}};
  HttpAdapter adapter(options);
  const std::vector<ClassifyItem> items{{"a", "int env;", "c"}};
  EXPECT_THROW(classify_batch(adapter, items), TransportError);
}

TEST(Http, ThroughModelString) {
  ToyService service;
  auto adapter = make_adapter("http:" + service.url());
  EXPECT_EQ(adapter->kind(), AdapterKind::http);
  const auto records = load_dataset(kGolden);
  EXPECT_EQ(labels_of(classify_batch(*adapter, items_of(records))), expected_labels(records));
}
