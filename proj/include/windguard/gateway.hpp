#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "windguard/chat.hpp"
#include "windguard/embedding.hpp"
#include "windguard/hallucination.hpp"
#include "windguard/safety_filter.hpp"

namespace windguard {

struct PromptRequest {
  std::string id;
  std::string prompt;
  std::chrono::system_clock::time_point timestamp = std::chrono::system_clock::now();
};

struct GenerationPolicy {
  std::size_t n = 10;
  std::size_t n_min = 0;        // 0 means all n must succeed
  std::size_t max_retries = 2;  // per sample, for retryable failures
  double temperature = 0.7;
  std::size_t jobs = 1;         // samples requested in parallel

  std::size_t required() const noexcept { return n_min == 0 ? n : n_min; }
};

// Draws N completions (in sample order) and embeds each. Retryable failures
// are retried up to max_retries; if fewer than the required number of samples
// survive, throws ProviderError.
ResponseSampleSet generate_n(const PromptRequest& request, ChatProvider& chat,
                             EmbeddingProvider& embedder, const GenerationPolicy& policy);

// Medoid of the unflagged responses (smallest summed deviation to the other
// unflagged ones), lowest index on ties. nullopt when everything is flagged.
std::optional<std::size_t> select_representative(const ResponseSampleSet& samples,
                                                 const HallucinationVerdict& verdict,
                                                 Metric metric);

enum class PipelineStatus {
  delivered,
  blocked_unsafe,
  blocked_hallucination,
  provider_error,
  pipeline_error,
};

std::string_view to_string(PipelineStatus status) noexcept;

struct PipelineOutcome {
  std::string request_id;
  PipelineStatus status = PipelineStatus::pipeline_error;
  std::optional<std::string> response;       // set only when delivered
  std::optional<std::string> blocked_text;   // the offending response when blocked_unsafe
  std::optional<FilterDecision> decision;
  std::optional<HallucinationVerdict> hallucination;
  std::optional<std::string> review_id;
  std::string reason;
  std::size_t samples = 0;
  double latency_ms = 0.0;
};

nlohmann::json to_json(const PipelineOutcome& outcome);

enum class CheckOrder { hallucination_first, safety_first };

struct PipelineSettings {
  Metric metric = Metric::emd;
  ThresholdConfig thresholds;
  HallucinationConfig hallucination;
  GenerationPolicy generation;
  CheckOrder order = CheckOrder::hallucination_first;
};

// Immutable view the pipeline runs against.
struct PipelineSnapshot {
  std::shared_ptr<const UnsafeConceptsDictionary> dictionary;
  PipelineSettings settings;
};

// Receives blocked responses for human review. Must be idempotent per request
// id: a repeated enqueue returns the existing review id.
class ReviewSink {
 public:
  virtual ~ReviewSink() = default;
  virtual std::string enqueue(const PromptRequest& request, const std::string& response,
                              const std::string& sentence, const FilterDecision& decision) = 0;
};

class Gateway {
 public:
  // Called with the stage name ("generate", "detect", "select", "classify",
  // "enqueue") before each stage runs; used to inject faults.
  using StageHook = std::function<void(std::string_view stage)>;

  Gateway(ChatProvider& chat, EmbeddingProvider& embedder, ReviewSink* sink = nullptr);

  void set_stage_hook(StageHook hook) { hook_ = std::move(hook); }

  // generate -> detect -> select -> classify (or classify-all first when the
  // order is safety_first). Any stage error ends in a non-delivered status.
  PipelineOutcome process_query(const PromptRequest& request, const PipelineSnapshot& snapshot);

 private:
  void enter(std::string_view stage) const;
  void block_unsafe(const PromptRequest& request, PipelineOutcome& out, const std::string& text,
                    const ResponseDecision& decision);

  ChatProvider& chat_;
  EmbeddingProvider& embedder_;
  ReviewSink* sink_;
  StageHook hook_;
};

}  // namespace windguard
