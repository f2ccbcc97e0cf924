#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace windguard {

constexpr std::size_t kDefaultDimension = 512;

// Fixed-dimension real vector with finite components.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  // Throws ContractError when empty or when any component is NaN/Inf.
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dimension() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const noexcept;

  operator std::span<const double>() const noexcept { return values_; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

enum class Label { safe, unsafe, unlabeled };

std::string_view to_string(Label label) noexcept;
std::optional<Label> parse_label(std::string_view text) noexcept;

struct SentenceRecord {
  std::string text;
  int category = 1;
  Label label = Label::unlabeled;
  std::optional<EmbeddingVector> embedding;

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

// Throws ContractError if the record breaks its invariants.
void validate(const SentenceRecord& record);

std::string trim(std::string_view text);

enum class ProviderKind { deterministic_test, external_service, file_cache };

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual ProviderKind kind() const noexcept = 0;
  virtual std::size_t dimension() const noexcept = 0;

  // Throws ContractError on empty text, TransportError when unreachable and
  // ContractError when the backend answers with the wrong dimension.
  virtual EmbeddingVector embed(std::string_view text) = 0;

  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts);
};

// Offline provider: whitespace tokens, each token signed-hashed into one of d
// buckets, summed and L2-normalised. An all-zero sum maps to e1.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dimension = kDefaultDimension);

  ProviderKind kind() const noexcept override { return ProviderKind::deterministic_test; }
  std::size_t dimension() const noexcept override { return dimension_; }
  EmbeddingVector embed(std::string_view text) override;

 private:
  std::size_t dimension_;
};

// 64-bit FNV-1a; bucket = hash % d, sign = top bit set ? -1 : +1.
std::uint64_t token_hash(std::string_view token) noexcept;

struct ExternalEmbedderOptions {
  std::string base_url;          // e.g. http://127.0.0.1:8081
  std::string token_env;         // name of the env var holding the bearer token
  std::size_t dimension = kDefaultDimension;
  std::size_t max_in_flight = 4;
  std::size_t batch_size = 64;
  int timeout_seconds = 30;
};

// POST {base_url}/embed {"texts": [...]} -> {"vectors": [[...], ...]}
class ExternalEmbedder final : public EmbeddingProvider {
 public:
  explicit ExternalEmbedder(ExternalEmbedderOptions options);

  ProviderKind kind() const noexcept override { return ProviderKind::external_service; }
  std::size_t dimension() const noexcept override { return options_.dimension; }
  EmbeddingVector embed(std::string_view text) override;
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  std::vector<EmbeddingVector> request(std::span<const std::string> texts);

  ExternalEmbedderOptions options_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  std::size_t in_flight_ = 0;
};

// Serves vectors previously stored in a corpus file; unknown text is an error.
class FileCacheEmbedder final : public EmbeddingProvider {
 public:
  explicit FileCacheEmbedder(const std::vector<SentenceRecord>& cached);

  ProviderKind kind() const noexcept override { return ProviderKind::file_cache; }
  std::size_t dimension() const noexcept override { return dimension_; }
  EmbeddingVector embed(std::string_view text) override;

 private:
  std::map<std::string, EmbeddingVector, std::less<>> vectors_;
  std::size_t dimension_ = 0;
};

// Populates missing or wrong-dimension embeddings. Records that already carry a
// vector of the provider's dimension are left untouched. Throws EmbeddingFailure
// with the index of the first record that could not be embedded.
std::vector<SentenceRecord> cache_embeddings(std::vector<SentenceRecord> corpus,
                                             EmbeddingProvider& provider);

}  // namespace windguard
