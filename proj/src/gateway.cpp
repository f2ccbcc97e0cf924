#include "windguard/gateway.hpp"

#include <exception>
#include <limits>

#include "windguard/errors.hpp"
#include "windguard/metrics.hpp"

namespace windguard {

namespace {

std::string draw_with_retries(ChatProvider& chat, const PromptRequest& request,
                              const GenerationPolicy& policy, std::size_t index) {
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return chat.complete(request.prompt, policy.temperature, index);
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt >= policy.max_retries) throw;
    }
  }
}

}  // namespace

ResponseSampleSet generate_n(const PromptRequest& request, ChatProvider& chat,
                             EmbeddingProvider& embedder, const GenerationPolicy& policy) {
  if (policy.n < 2) throw ContractError("N must be >= 2");
  if (policy.required() > policy.n) throw ContractError("N_min exceeds N");
  if (!(policy.temperature > 0.0)) throw ContractError("sampling temperature must be > 0");
  if (trim(request.prompt).empty()) throw ContractError("prompt is empty");

  std::vector<std::optional<std::string>> drawn(policy.n);
  std::vector<std::string> failures(policy.n);
  parallel_for(policy.n, policy.jobs, [&](std::size_t i) {
    try {
      drawn[i] = draw_with_retries(chat, request, policy, i);
    } catch (const ProviderError& e) {
      failures[i] = e.what();
    }
  });

  ResponseSampleSet set;
  set.prompt = request.prompt;
  std::string last_failure;
  for (std::size_t i = 0; i < policy.n; ++i) {
    if (!drawn[i]) {
      last_failure = failures[i];
      continue;
    }
    if (trim(*drawn[i]).empty()) {
      last_failure = "sample " + std::to_string(i) + " is empty";
      continue;
    }
    set.responses.push_back({*drawn[i], 1, Label::unlabeled, std::nullopt});
  }
  if (set.responses.size() < policy.required()) {
    throw ProviderError("only " + std::to_string(set.responses.size()) + " of " +
                        std::to_string(policy.n) + " samples succeeded (need " +
                        std::to_string(policy.required()) + "): " + last_failure);
  }
  for (auto& r : set.responses) r.embedding = embedder.embed(r.text);
  return set;
}

std::optional<std::size_t> select_representative(const ResponseSampleSet& samples,
                                                 const HallucinationVerdict& verdict,
                                                 Metric metric) {
  if (verdict.flags.size() != samples.responses.size()) {
    throw ContractError("verdict does not match the sample set");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < verdict.flags.size(); ++i) {
    if (!verdict.flags[i]) candidates.push_back(i);
  }
  if (candidates.empty()) return std::nullopt;
  const auto embeddings = samples.embeddings();
  std::size_t best = candidates.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t i : candidates) {
    double sum = 0.0;
    for (std::size_t j : candidates) {
      if (i != j) sum += deviation(metric, embeddings[i], embeddings[j]);
    }
    if (sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  return best;
}

std::string_view to_string(PipelineStatus status) noexcept {
  switch (status) {
    case PipelineStatus::delivered:
      return "delivered";
    case PipelineStatus::blocked_unsafe:
      return "blocked_unsafe";
    case PipelineStatus::blocked_hallucination:
      return "blocked_hallucination";
    case PipelineStatus::provider_error:
      return "provider_error";
    case PipelineStatus::pipeline_error:
      break;
  }
  return "pipeline_error";
}

nlohmann::json to_json(const PipelineOutcome& o) {
  nlohmann::json j;
  j["request_id"] = o.request_id;
  j["status"] = to_string(o.status);
  if (o.response) j["response"] = *o.response;
  if (o.blocked_text) j["blocked_text"] = *o.blocked_text;
  if (o.decision) j["decision"] = to_json(*o.decision);
  if (o.hallucination) j["hallucination"] = to_json(*o.hallucination);
  if (o.review_id) j["review_id"] = *o.review_id;
  if (!o.reason.empty()) j["reason"] = o.reason;
  j["samples"] = o.samples;
  j["latency_ms"] = o.latency_ms;
  return j;
}

Gateway::Gateway(ChatProvider& chat, EmbeddingProvider& embedder, ReviewSink* sink)
    : chat_(chat), embedder_(embedder), sink_(sink) {}

void Gateway::enter(std::string_view stage) const {
  if (hook_) hook_(stage);
}

void Gateway::block_unsafe(const PromptRequest& request, PipelineOutcome& out,
                           const std::string& text, const ResponseDecision& decision) {
  out.status = PipelineStatus::blocked_unsafe;
  out.blocked_text = text;
  out.decision = decision.decision;
  out.reason = "response matches unsafe concept: " + decision.decision.matched_text;
  if (sink_) {
    enter("enqueue");
    out.review_id = sink_->enqueue(request, text, decision.sentence, decision.decision);
  }
}

PipelineOutcome Gateway::process_query(const PromptRequest& request, const PipelineSnapshot& snapshot) {
  const auto started = std::chrono::steady_clock::now();
  PipelineOutcome out;
  out.request_id = request.id;
  auto finish = [&](PipelineOutcome o) {
    o.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return o;
  };

  try {
    const auto& settings = snapshot.settings;
    if (!snapshot.dictionary || snapshot.dictionary->empty()) {
      throw ConfigurationError("unsafe concepts dictionary is empty");
    }
    const auto& dict = *snapshot.dictionary;

    ResponseSampleSet samples;
    try {
      enter("generate");
      samples = generate_n(request, chat_, embedder_, settings.generation);
    } catch (const ProviderError& e) {
      out.status = PipelineStatus::provider_error;
      out.reason = e.what();
      return finish(std::move(out));
    }
    out.samples = samples.responses.size();

    if (settings.order == CheckOrder::safety_first) {
      enter("classify");
      for (const auto& r : samples.responses) {
        auto rd = classify_response(r.text, dict, embedder_, settings.metric, settings.thresholds);
        if (rd.decision.verdict == Verdict::unsafe) {
          block_unsafe(request, out, r.text, rd);
          return finish(std::move(out));
        }
      }
    }

    enter("detect");
    auto hcfg = settings.hallucination;
    const auto verdict = detect_inconsistency(samples, hcfg);
    out.hallucination = verdict;

    enter("select");
    const auto chosen = select_representative(samples, verdict, hcfg.metric);
    if (!chosen) {
      out.status = PipelineStatus::blocked_hallucination;
      out.reason = "every sampled response was flagged as inconsistent";
      return finish(std::move(out));
    }
    const auto& text = samples.responses[*chosen].text;

    enter("classify");
    auto rd = classify_response(text, dict, embedder_, settings.metric, settings.thresholds);
    if (rd.decision.verdict == Verdict::unsafe) {
      block_unsafe(request, out, text, rd);
      return finish(std::move(out));
    }
    if (verdict.flags[*chosen]) {
      throw Error("internal: chosen response is flagged");
    }
    out.decision = rd.decision;
    out.status = PipelineStatus::delivered;
    out.response = text;
    return finish(std::move(out));
  } catch (const ProviderError& e) {
    out.status = PipelineStatus::provider_error;
    out.response.reset();
    out.reason = e.what();
  } catch (const std::exception& e) {
    out.status = PipelineStatus::pipeline_error;
    out.response.reset();
    out.reason = e.what();
  }
  return finish(std::move(out));
}

}  // namespace windguard
