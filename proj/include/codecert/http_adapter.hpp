// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP transport:
//   POST /classify  {"items":[{"id","code","language"}...]}
//                -> 200 {"items":[{"id","label"}...]}
//   GET  /health   -> 200 {"status":"ok","labels":[...]}

#include <chrono>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "codecert/adapters.hpp"
#include "codecert/error.hpp"
#include "codecert/parallel.hpp"
#include "httplib.h"
#include "json.hpp"

namespace codecert {

struct HttpOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  std::optional<LabelSpace> labels;  // queried from /health when absent
  std::size_t batch_limit = 64;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff{100};
};

class HttpAdapter final : public ClassifierAdapter {
 public:
  explicit HttpAdapter(HttpOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw UsageError("http adapter needs a base URL");
    labels_ = options_.labels ? *options_.labels : health_labels();
  }

  AdapterKind kind() const noexcept override { return AdapterKind::http; }
  std::string describe() const override { return "http:" + options_.base_url; }
  const LabelSpace& label_space() const noexcept override { return labels_; }
  std::size_t batch_limit() const noexcept override { return options_.batch_limit; }

  std::vector<ClassifyResult> classify_chunk(std::span<const ClassifyItem> items) override {
    auto delay = options_.backoff;
    for (int attempt = 1;; ++attempt) {
      try {
        return post_once(items);
      } catch (const TransportError&) {
        if (attempt >= options_.max_attempts) throw;
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
  }

  /// Up to max_in_flight chunks are posted concurrently, one client each.
  std::vector<std::vector<ClassifyResult>> classify_chunks(
      std::span<const std::span<const ClassifyItem>> chunks) override {
    std::vector<std::vector<ClassifyResult>> out(chunks.size());
    parallel_for(chunks.size(), options_.max_in_flight,
                 [&](std::size_t i) { out[i] = classify_chunk(chunks[i]); });
    return out;
  }

  /// GET /health; returns the advertised label ids.
  LabelSpace health_labels() const {
    httplib::Client client = make_client();
    auto res = client.Get("/health");
    if (!res) throw TransportError("GET /health failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("GET /health returned status " + std::to_string(res->status));
    try {
      auto j = nlohmann::json::parse(res->body);
      if (j.value("status", "") != "ok") throw MalformedResponseError("service reports not ok");
      LabelSpace labels;
      for (const auto& l : j.at("labels")) labels.ids.push_back(l.get<Label>());
      if (labels.ids.empty()) throw MalformedResponseError("service advertises no labels");
      return labels;
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponseError(std::string("malformed /health body: ") + e.what());
    }
  }

 private:
  httplib::Client make_client() const {
    httplib::Client client(options_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    return client;
  }

  std::vector<ClassifyResult> post_once(std::span<const ClassifyItem> items) const {
    nlohmann::json body{{"items", nlohmann::json::array()}};
    for (const auto& item : items)
      body["items"].push_back({{"id", item.id}, {"code", item.code}, {"language", item.language}});
    httplib::Client client = make_client();
    auto res = client.Post("/classify", body.dump(), "application/json");
    if (!res) throw TransportError("POST /classify failed: " + httplib::to_string(res.error()));
    if (res->status >= 500 || res->status == 408 || res->status == 429)
      throw TransportError("POST /classify returned status " + std::to_string(res->status));
    if (res->status != 200)
      throw MalformedResponseError("POST /classify returned status " + std::to_string(res->status));
    std::vector<ClassifyResult> results;
    try {
      auto j = nlohmann::json::parse(res->body);
      for (const auto& r : j.at("items")) {
        if (!r.at("id").is_string() || !r.at("label").is_number_integer())
          throw MalformedResponseError("result needs a string id and an integer label");
        results.push_back({r["id"].get<std::string>(), r["label"].get<Label>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponseError(std::string("malformed /classify body: ") + e.what());
    }
    return results;
  }

  HttpOptions options_;
  LabelSpace labels_;
};

}  // namespace codecert
