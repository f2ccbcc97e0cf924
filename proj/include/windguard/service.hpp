#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "windguard/calibration.hpp"
#include "windguard/chat.hpp"
#include "windguard/config.hpp"
#include "windguard/embedding.hpp"
#include "windguard/errors.hpp"
#include "windguard/gateway.hpp"
#include "windguard/store.hpp"

namespace windguard {

// Carries the HTTP status the API maps it to, plus a stable machine code.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& what)
      : Error(what), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

enum class Role { none, operator_role, manager };

struct ServiceOptions {
  std::filesystem::path state_dir;
  // Static bearer tokens. With neither set, auth is off and every caller is a
  // manager.
  std::string operator_token;
  std::string manager_token;
  std::string cors_origin = "*";
  std::size_t checkpoint_every = 64;
  Store::CrashHook crash_hook;  // tests only
};

struct DictionaryAddResult {
  bool added = false;
  std::uint64_t version = 0;
  std::size_t size = 0;
  std::string notice;
};

struct CalibrationRequest {
  std::vector<SentenceRecord> corpus;  // embedded on demand
  std::vector<Metric> metrics{Metric::emd, Metric::cosine};
  SweepOptions sweep;
  bool apply_thresholds = false;  // copy best thresholds into the config
};

// Core of the HTTP API. Writers (verdicts, config, dictionary, reports) go
// through one commit mutex; queries run against an immutable snapshot that
// writers swap atomically.
class Service : public ReviewSink {
 public:
  Service(ChatProvider& chat, EmbeddingProvider& embedder, ServiceOptions options);

  Role authorize(const std::string& authorization_header) const;
  const ServiceOptions& options() const noexcept { return options_; }

  // ServiceError 400 on an empty prompt, 409 when the dictionary is empty or a
  // dictionary category has no threshold for the active metric.
  PipelineOutcome submit_query(const std::string& prompt, const std::string& request_id = "");

  // 404 unknown id; 409 when already decided differently; a replay of the
  // same verdict returns the item unchanged.
  ReviewItem post_verdict(const std::string& id, ReviewState verdict);

  // Newest first.
  std::vector<ReviewItem> review_queue(bool pending_only = true) const;
  std::optional<ReviewItem> review(const std::string& id) const;

  SystemConfig config() const;
  // 422 on an invalid patch. Bumps the version.
  SystemConfig update_config(const nlohmann::json& patch);

  std::shared_ptr<const UnsafeConceptsDictionary> dictionary() const;
  DictionaryAddResult add_dictionary_entry(SentenceRecord entry);
  void replace_dictionary(const UnsafeConceptsDictionary& dict);

  // Runs calibrate() against the live dictionary and stores the report.
  nlohmann::json run_calibration(CalibrationRequest request);
  // {"calibration": report, "accuracy_table_csv": ..., "roc_csv": {metric: {category: csv}}}
  // or null before the first run.
  nlohmann::json reports() const;

  std::string enqueue(const PromptRequest& request, const std::string& response,
                      const std::string& sentence, const FilterDecision& decision) override;

  void set_stage_hook(Gateway::StageHook hook);

  std::uint64_t journal_seq() const;

 private:
  struct Published {
    std::shared_ptr<const UnsafeConceptsDictionary> dictionary;
    SystemConfig config;
  };

  std::shared_ptr<const Published> published() const;
  void publish_locked();

  ChatProvider& chat_;
  EmbeddingProvider& embedder_;
  ServiceOptions options_;

  mutable std::mutex commit_mu_;
  Store store_;

  mutable std::mutex publish_mu_;
  std::shared_ptr<const Published> published_;

  mutable std::mutex hook_mu_;
  Gateway::StageHook stage_hook_;
  std::uint64_t request_counter_ = 0;
};

// REST front end under /v1. Runs httplib on a background thread.
class ApiServer {
 public:
  explicit ApiServer(Service& service);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds (port 0 picks a free one) and serves in the background. Returns the port.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace windguard
