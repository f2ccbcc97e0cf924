#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace windguard {

// Source of LLM completions.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;

  // One completion for `prompt`. `sample_index` identifies the draw within a
  // batch of N. Throws TransportError (retryable) or ProviderError.
  virtual std::string complete(const std::string& prompt, double temperature,
                               std::size_t sample_index) = 0;
};

struct HttpChatOptions {
  std::string base_url;
  std::string api_key_env;  // env var holding the bearer key
  int timeout_seconds = 60;
};

// POST {base_url}/chat {"prompt", "n", "temperature"} -> {"responses": [...]}
class HttpChatProvider final : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpChatOptions options);

  std::string complete(const std::string& prompt, double temperature,
                       std::size_t sample_index) override;
  std::vector<std::string> generate(const std::string& prompt, std::size_t n, double temperature);

 private:
  HttpChatOptions options_;
};

// Canned completions. Each JSONL line is
//   {"prompt": str (optional), "responses": [slot, ...]}
// where a slot is a string or {"text": str, "fault": "timeout"|"error",
// "times": int}. A faulty slot fails `times` calls (forever when omitted) and
// then returns its text. Lines without "prompt" answer any other prompt.
// Sample i of a request is served by slot i mod size.
class MockChatProvider final : public ChatProvider {
 public:
  struct Slot {
    std::string text;
    std::string fault;  // empty, "timeout" or "error"
    std::optional<std::size_t> times;
  };

  MockChatProvider() = default;
  explicit MockChatProvider(std::vector<std::string> responses);

  static std::unique_ptr<MockChatProvider> from_jsonl(const std::filesystem::path& path);
  static std::unique_ptr<MockChatProvider> from_jsonl_text(const std::string& text);

  void set_responses(std::vector<Slot> slots, std::optional<std::string> prompt = std::nullopt);

  std::string complete(const std::string& prompt, double temperature,
                       std::size_t sample_index) override;

  std::size_t calls() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Slot> fallback_;
  std::map<std::string, std::vector<Slot>> by_prompt_;
  std::map<std::pair<std::string, std::size_t>, std::size_t> failures_served_;
  std::size_t calls_ = 0;
};

}  // namespace windguard
