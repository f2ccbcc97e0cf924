#include "windguard/chat.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "windguard/corpus.hpp"
#include "windguard/errors.hpp"

namespace windguard {

HttpChatProvider::HttpChatProvider(HttpChatOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ContractError("chat provider needs a base URL");
}

std::string HttpChatProvider::complete(const std::string& prompt, double temperature, std::size_t) {
  auto out = generate(prompt, 1, temperature);
  return out.front();
}

std::vector<std::string> HttpChatProvider::generate(const std::string& prompt, std::size_t n,
                                                    double temperature) {
  httplib::Client client(options_.base_url);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const nlohmann::json body = {{"prompt", prompt}, {"n", n}, {"temperature", temperature}};
  auto res = client.Post("/chat", headers, body.dump(), "application/json");
  if (!res) throw TransportError("chat provider unreachable: " + httplib::to_string(res.error()));
  if (res->status >= 500 || res->status == 429 || res->status == 408) {
    throw TransportError("chat provider returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw ProviderError("chat provider returned HTTP " + std::to_string(res->status));
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("chat provider sent invalid JSON: ") + e.what());
  }
  if (!reply.contains("responses") || !reply["responses"].is_array()) {
    throw ProviderError("chat provider reply lacks a \"responses\" array");
  }
  std::vector<std::string> out;
  for (const auto& r : reply["responses"]) {
    if (!r.is_string()) throw ProviderError("chat provider returned a non-string response");
    out.push_back(r.get<std::string>());
  }
  if (out.size() != n) {
    throw ProviderError("chat provider returned " + std::to_string(out.size()) + " of " +
                        std::to_string(n) + " responses");
  }
  return out;
}

MockChatProvider::MockChatProvider(std::vector<std::string> responses) {
  for (auto& r : responses) fallback_.push_back({std::move(r), {}, std::nullopt});
}

std::unique_ptr<MockChatProvider> MockChatProvider::from_jsonl_text(const std::string& text) {
  auto mock = std::make_unique<MockChatProvider>();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.contains("responses") || !j["responses"].is_array()) {
        throw ContractError("missing \"responses\" array");
      }
      std::vector<Slot> slots;
      for (const auto& s : j["responses"]) {
        if (s.is_string()) {
          slots.push_back({s.get<std::string>(), {}, std::nullopt});
          continue;
        }
        if (!s.is_object()) throw ContractError("response slot must be a string or an object");
        Slot slot;
        slot.text = s.value("text", std::string{});
        slot.fault = s.value("fault", std::string{});
        if (!slot.fault.empty() && slot.fault != "timeout" && slot.fault != "error") {
          throw ContractError("unknown fault \"" + slot.fault + "\"");
        }
        if (s.contains("times")) slot.times = s["times"].get<std::size_t>();
        slots.push_back(std::move(slot));
      }
      std::optional<std::string> prompt;
      if (j.contains("prompt")) prompt = j["prompt"].get<std::string>();
      mock->set_responses(std::move(slots), prompt);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ContractError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return mock;
}

std::unique_ptr<MockChatProvider> MockChatProvider::from_jsonl(const std::filesystem::path& path) {
  return from_jsonl_text(read_file(path));
}

void MockChatProvider::set_responses(std::vector<Slot> slots, std::optional<std::string> prompt) {
  if (slots.empty()) throw ContractError("mock provider needs at least one response");
  std::lock_guard lock(mutex_);
  if (prompt) by_prompt_[*prompt] = std::move(slots);
  else fallback_ = std::move(slots);
}

std::string MockChatProvider::complete(const std::string& prompt, double, std::size_t sample_index) {
  std::lock_guard lock(mutex_);
  ++calls_;
  auto it = by_prompt_.find(prompt);
  const auto& slots = it != by_prompt_.end() ? it->second : fallback_;
  if (slots.empty()) throw ProviderError("mock provider has no responses for this prompt");
  const std::size_t k = sample_index % slots.size();
  const auto& slot = slots[k];
  if (!slot.fault.empty()) {
    auto& served = failures_served_[{prompt, k}];
    if (!slot.times || served < *slot.times) {
      ++served;
      if (slot.fault == "timeout") throw TransportError("mock provider timeout");
      throw ProviderError("mock provider error");
    }
  }
  return slot.text;
}

std::size_t MockChatProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace windguard
