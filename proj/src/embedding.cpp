#include "windguard/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "windguard/errors.hpp"

namespace windguard {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

void require_text(std::string_view text) {
  if (trim(text).empty()) throw ContractError("cannot embed empty text");
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ContractError("embedding must have dimension >= 1");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ContractError("embedding component " + std::to_string(i) + " is not finite");
    }
  }
}

double EmbeddingVector::norm() const noexcept {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::safe:
      return "safe";
    case Label::unsafe:
      return "unsafe";
    case Label::unlabeled:
      break;
  }
  return "unlabeled";
}

std::optional<Label> parse_label(std::string_view text) noexcept {
  if (text == "safe") return Label::safe;
  if (text == "unsafe") return Label::unsafe;
  if (text == "unlabeled") return Label::unlabeled;
  return std::nullopt;
}

std::string trim(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return std::string(text);
}

void validate(const SentenceRecord& record) {
  if (trim(record.text).empty()) throw ContractError("sentence text is empty");
  if (record.category < 1) throw ContractError("category must be >= 1");
  if (record.embedding && record.embedding->empty()) {
    throw ContractError("embedding present but empty");
  }
}

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

std::uint64_t token_hash(std::string_view token) noexcept {
  std::uint64_t hash = kFnvOffset;
  for (const unsigned char ch : token) {
    hash ^= ch;
    hash *= kFnvPrime;
  }
  return hash;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ContractError("embedding dimension must be >= 1");
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) {
  require_text(text);
  std::vector<double> acc(dimension_, 0.0);
  for (auto token : split_whitespace(text)) {
    const std::uint64_t h = token_hash(token);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    acc[h % dimension_] += sign;
  }
  double sum_sq = 0.0;
  for (double v : acc) sum_sq += v * v;
  if (sum_sq == 0.0) {
    acc[0] = 1.0;
    return EmbeddingVector(std::move(acc));
  }
  const double inv = 1.0 / std::sqrt(sum_sq);
  for (double& v : acc) v *= inv;
  return EmbeddingVector(std::move(acc));
}

ExternalEmbedder::ExternalEmbedder(ExternalEmbedderOptions options) : options_(std::move(options)) {
  if (options_.dimension == 0) throw ContractError("embedding dimension must be >= 1");
  if (options_.base_url.empty()) throw ContractError("external embedder needs a base URL");
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  if (options_.batch_size == 0) options_.batch_size = 1;
}

EmbeddingVector ExternalEmbedder::embed(std::string_view text) {
  const std::string owned(text);
  return embed_batch(std::span<const std::string>(&owned, 1)).front();
}

std::vector<EmbeddingVector> ExternalEmbedder::embed_batch(std::span<const std::string> texts) {
  for (const auto& t : texts) require_text(t);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
    const std::size_t count = std::min(options_.batch_size, texts.size() - start);
    auto part = request(texts.subspan(start, count));
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> ExternalEmbedder::request(std::span<const std::string> texts) {
  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [this] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    ExternalEmbedder* self;
    ~Release() {
      {
        std::lock_guard lock(self->mutex_);
        --self->in_flight_;
      }
      self->slot_free_.notify_one();
    }
  } release{this};

  httplib::Client client(options_.base_url);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.token_env.empty()) {
    if (const char* token = std::getenv(options_.token_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  nlohmann::json body;
  body["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  auto res = client.Post("/embed", headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("embedding service unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429) {
    throw TransportError("embedding service returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw ProviderError("embedding service returned HTTP " + std::to_string(res->status));
  }

  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("embedding service sent invalid JSON: ") + e.what());
  }
  if (!reply.contains("vectors") || !reply["vectors"].is_array()) {
    throw ContractError("embedding service reply lacks a \"vectors\" array");
  }
  const auto& vectors = reply["vectors"];
  if (vectors.size() != texts.size()) {
    throw ContractError("embedding service returned " + std::to_string(vectors.size()) +
                        " vectors for " + std::to_string(texts.size()) + " texts");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) {
    if (!v.is_array() || v.size() != options_.dimension) {
      throw ContractError("embedding service returned dimension " +
                          std::to_string(v.is_array() ? v.size() : 0) + ", expected " +
                          std::to_string(options_.dimension));
    }
    out.emplace_back(v.get<std::vector<double>>());
  }
  return out;
}

FileCacheEmbedder::FileCacheEmbedder(const std::vector<SentenceRecord>& cached) {
  for (const auto& r : cached) {
    if (!r.embedding) continue;
    if (dimension_ == 0) dimension_ = r.embedding->dimension();
    if (r.embedding->dimension() != dimension_) {
      throw ContractError("cached embeddings have mixed dimensions");
    }
    vectors_.emplace(r.text, *r.embedding);
  }
  if (dimension_ == 0) throw ContractError("cache holds no embeddings");
}

EmbeddingVector FileCacheEmbedder::embed(std::string_view text) {
  require_text(text);
  auto it = vectors_.find(text);
  if (it == vectors_.end()) {
    throw ProviderError("no cached embedding for \"" + std::string(text) + "\"");
  }
  return it->second;
}

std::vector<SentenceRecord> cache_embeddings(std::vector<SentenceRecord> corpus,
                                             EmbeddingProvider& provider) {
  const std::size_t d = provider.dimension();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& record = corpus[i];
    if (record.embedding && record.embedding->dimension() == d) continue;
    try {
      auto v = provider.embed(record.text);
      if (v.dimension() != d) {
        throw ContractError("provider returned dimension " + std::to_string(v.dimension()));
      }
      record.embedding = std::move(v);
    } catch (const ProviderError& e) {
      throw EmbeddingFailure(i, e.what(), true);
    } catch (const std::exception& e) {
      throw EmbeddingFailure(i, e.what());
    }
  }
  return corpus;
}

}  // namespace windguard
