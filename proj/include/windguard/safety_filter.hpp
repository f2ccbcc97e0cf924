#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "windguard/embedding.hpp"
#include "windguard/metrics.hpp"

namespace windguard {

// Curated unsafe sentences with embeddings, indexed by category. Every
// mutation bumps the version.
class UnsafeConceptsDictionary {
 public:
  UnsafeConceptsDictionary() = default;
  // Entries must all be labelled unsafe, embedded, and share one dimension.
  explicit UnsafeConceptsDictionary(std::vector<SentenceRecord> entries, std::uint64_t version = 1);

  const std::vector<SentenceRecord>& entries() const noexcept { return entries_; }
  const std::map<int, std::vector<std::size_t>>& categories() const noexcept { return index_; }
  std::uint64_t version() const noexcept { return version_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  bool contains(int category, const std::string& text) const;

  // Appends an embedded unsafe record. Returns false (and leaves the version
  // alone) when the same text already exists in the category.
  bool add(SentenceRecord entry);

 private:
  std::vector<SentenceRecord> entries_;
  std::map<int, std::vector<std::size_t>> index_;
  std::uint64_t version_ = 0;
  std::size_t dimension_ = 0;
};

// Per (category, metric) decision thresholds. Cosine thresholds live in
// [0, 1]; EMD thresholds are >= 0.
class ThresholdConfig {
 public:
  void set(int category, Metric metric, double threshold);
  std::optional<double> get(int category, Metric metric) const;
  void set_all(const std::vector<int>& categories, Metric metric, double threshold);

  const std::map<std::pair<int, Metric>, double>& values() const noexcept { return values_; }

  friend bool operator==(const ThresholdConfig&, const ThresholdConfig&) = default;

 private:
  std::map<std::pair<int, Metric>, double> values_;
};

// {"emd": {"1": 0.02, ...}, "cosine": {...}}
nlohmann::json to_json(const ThresholdConfig& cfg);
ThresholdConfig thresholds_from_json(const nlohmann::json& j);

enum class Verdict { safe, unsafe };
std::string_view to_string(Verdict verdict) noexcept;

struct FilterDecision {
  Verdict verdict = Verdict::safe;
  int category = 0;
  double score = 0.0;
  std::optional<std::size_t> matched_entry;
  std::string matched_text;
  Metric metric = Metric::emd;
  double threshold = 0.0;
  std::uint64_t dictionary_version = 0;

  friend bool operator==(const FilterDecision&, const FilterDecision&) = default;
};

nlohmann::json to_json(const FilterDecision& decision);

// Nearest-neighbour score of `response` within one category: min EMD or max
// cosine, ties resolved to the lowest entry index.
struct CategoryScore {
  int category = 0;
  double score = 0.0;
  std::size_t entry = 0;
};
std::vector<CategoryScore> category_scores(const EmbeddingVector& response,
                                           const UnsafeConceptsDictionary& dict, Metric metric);

// Unsafe iff some category's score beats its threshold strictly (EMD below,
// cosine above). An unsafe decision reports the firing category with the most
// similar entry; a safe one reports the globally nearest entry.
FilterDecision classify(const EmbeddingVector& response, const UnsafeConceptsDictionary& dict,
                        Metric metric, const ThresholdConfig& cfg);

// Splits on sentence terminators (. ! ?) followed by whitespace or the end.
std::vector<std::string> split_sentences(std::string_view text);

struct ResponseDecision {
  FilterDecision decision;      // the deciding sentence
  std::string sentence;         // its text
  std::vector<FilterDecision> per_sentence;
};

// Embeds each sentence of a response and classifies it; the response is
// unsafe if any sentence is.
ResponseDecision classify_response(std::string_view text, const UnsafeConceptsDictionary& dict,
                                   EmbeddingProvider& provider, Metric metric,
                                   const ThresholdConfig& cfg);

struct AddOutcome {
  UnsafeConceptsDictionary dictionary;
  bool added = false;
  std::string notice;
};

// Returns the dictionary with `sentence` appended as an unsafe entry carrying a
// fresh embedding. Duplicate text in the same category is a no-op.
AddOutcome add_verified_unsafe(const SentenceRecord& sentence, const UnsafeConceptsDictionary& dict,
                               EmbeddingProvider& provider);

// Dictionary files: entries as corpus JSONL plus a sidecar
// <stem>.header.json {"version", "dimension", "metric_defaults"}.
std::filesystem::path dictionary_header_path(const std::filesystem::path& jsonl);
void save_dictionary(const std::filesystem::path& jsonl, const UnsafeConceptsDictionary& dict,
                     const nlohmann::json& metric_defaults = nlohmann::json::object());
// Entries lacking an embedding are embedded with `provider` when given.
UnsafeConceptsDictionary load_dictionary(const std::filesystem::path& jsonl,
                                         EmbeddingProvider* provider = nullptr);

}  // namespace windguard
