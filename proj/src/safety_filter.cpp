#include "windguard/safety_filter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "windguard/corpus.hpp"
#include "windguard/errors.hpp"

namespace windguard {

UnsafeConceptsDictionary::UnsafeConceptsDictionary(std::vector<SentenceRecord> entries,
                                                   std::uint64_t version)
    : version_(version) {
  for (auto& e : entries) {
    if (e.label != Label::unsafe) throw ContractError("dictionary entry not labelled unsafe: " + e.text);
    if (!e.embedding) throw ContractError("dictionary entry lacks an embedding: " + e.text);
    if (dimension_ == 0) dimension_ = e.embedding->dimension();
    if (e.embedding->dimension() != dimension_) {
      throw ContractError("dictionary entries have mixed dimensions");
    }
    validate(e);
    index_[e.category].push_back(entries_.size());
    entries_.push_back(std::move(e));
  }
}

bool UnsafeConceptsDictionary::contains(int category, const std::string& text) const {
  auto it = index_.find(category);
  if (it == index_.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](std::size_t i) { return entries_[i].text == text; });
}

bool UnsafeConceptsDictionary::add(SentenceRecord entry) {
  validate(entry);
  if (!entry.embedding) throw ContractError("dictionary entry lacks an embedding");
  if (dimension_ != 0 && entry.embedding->dimension() != dimension_) {
    throw ContractError("entry dimension " + std::to_string(entry.embedding->dimension()) +
                        " does not match dictionary dimension " + std::to_string(dimension_));
  }
  if (contains(entry.category, entry.text)) return false;
  entry.label = Label::unsafe;
  if (dimension_ == 0) dimension_ = entry.embedding->dimension();
  index_[entry.category].push_back(entries_.size());
  entries_.push_back(std::move(entry));
  ++version_;
  return true;
}

void ThresholdConfig::set(int category, Metric metric, double threshold) {
  if (!std::isfinite(threshold)) throw ContractError("threshold must be finite");
  if (metric == Metric::cosine && (threshold < 0.0 || threshold > 1.0)) {
    throw ContractError("cosine threshold must lie in [0, 1]");
  }
  if (metric == Metric::emd && threshold < 0.0) throw ContractError("EMD threshold must be >= 0");
  values_[{category, metric}] = threshold;
}

std::optional<double> ThresholdConfig::get(int category, Metric metric) const {
  auto it = values_.find({category, metric});
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void ThresholdConfig::set_all(const std::vector<int>& categories, Metric metric, double threshold) {
  for (int c : categories) set(c, metric, threshold);
}

nlohmann::json to_json(const ThresholdConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : cfg.values()) {
    j[std::string(to_string(key.second))][std::to_string(key.first)] = value;
  }
  return j;
}

ThresholdConfig thresholds_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ContractError("thresholds must be a JSON object");
  ThresholdConfig cfg;
  for (const auto& [metric_name, per_category] : j.items()) {
    auto metric = parse_metric(metric_name);
    if (!metric) throw ContractError("unknown metric \"" + metric_name + "\"");
    if (!per_category.is_object()) throw ContractError("thresholds for a metric must be an object");
    for (const auto& [category, value] : per_category.items()) {
      if (!value.is_number()) throw ContractError("threshold must be a number");
      int id = 0;
      try {
        std::size_t used = 0;
        id = std::stoi(category, &used);
        if (used != category.size()) throw std::invalid_argument(category);
      } catch (const std::exception&) {
        throw ContractError("category key \"" + category + "\" is not an integer");
      }
      cfg.set(id, *metric, value.get<double>());
    }
  }
  return cfg;
}

std::string_view to_string(Verdict verdict) noexcept {
  return verdict == Verdict::unsafe ? "unsafe" : "safe";
}

nlohmann::json to_json(const FilterDecision& d) {
  nlohmann::json j;
  j["verdict"] = to_string(d.verdict);
  j["category"] = d.category;
  j["score"] = d.score;
  j["threshold"] = d.threshold;
  j["metric"] = to_string(d.metric);
  j["matched_entry"] = d.matched_entry ? nlohmann::json(*d.matched_entry) : nlohmann::json(nullptr);
  j["matched_text"] = d.matched_text;
  j["dictionary_version"] = d.dictionary_version;
  return j;
}

std::vector<CategoryScore> category_scores(const EmbeddingVector& response,
                                           const UnsafeConceptsDictionary& dict, Metric metric) {
  if (dict.empty()) throw ConfigurationError("unsafe concepts dictionary is empty");
  if (response.dimension() != dict.dimension()) {
    throw ContractError("response dimension " + std::to_string(response.dimension()) +
                        " does not match dictionary dimension " + std::to_string(dict.dimension()));
  }
  std::vector<CategoryScore> scores;
  scores.reserve(dict.categories().size());
  for (const auto& [category, indices] : dict.categories()) {
    CategoryScore best{category, 0.0, indices.front()};
    bool first = true;
    for (std::size_t idx : indices) {
      const double s = measure(metric, response, *dict.entries()[idx].embedding);
      if (first || more_similar(metric, s, best.score)) {
        best.score = s;
        best.entry = idx;
        first = false;
      }
    }
    scores.push_back(best);
  }
  return scores;
}

FilterDecision classify(const EmbeddingVector& response, const UnsafeConceptsDictionary& dict,
                        Metric metric, const ThresholdConfig& cfg) {
  if (dict.empty()) throw ConfigurationError("unsafe concepts dictionary is empty");
  std::vector<double> thresholds;
  for (const auto& [category, indices] : dict.categories()) {
    auto t = cfg.get(category, metric);
    if (!t) {
      throw ConfigurationError("no " + std::string(to_string(metric)) +
                               " threshold for category " + std::to_string(category));
    }
    thresholds.push_back(*t);
  }
  const auto scores = category_scores(response, dict, metric);

  // Prefer the more similar score; on equal scores the lower entry index wins.
  auto better = [metric](const CategoryScore& a, const CategoryScore& b) {
    if (more_similar(metric, a.score, b.score)) return true;
    if (more_similar(metric, b.score, a.score)) return false;
    return a.entry < b.entry;
  };

  std::optional<std::size_t> firing;
  std::size_t nearest = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (better(scores[k], scores[nearest])) nearest = k;
    const bool fires = more_similar(metric, scores[k].score, thresholds[k]);
    if (fires && (!firing || better(scores[k], scores[*firing]))) firing = k;
  }

  const std::size_t pick = firing.value_or(nearest);
  FilterDecision d;
  d.verdict = firing ? Verdict::unsafe : Verdict::safe;
  d.category = scores[pick].category;
  d.score = scores[pick].score;
  d.matched_entry = scores[pick].entry;
  d.matched_text = dict.entries()[scores[pick].entry].text;
  d.metric = metric;
  d.threshold = thresholds[pick];
  d.dictionary_version = dict.version();
  return d;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    // Absorb runs like "?!" or "...".
    while (i + 1 < text.size() && (text[i + 1] == '.' || text[i + 1] == '!' || text[i + 1] == '?')) ++i;
    if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      auto s = trim(text.substr(start, i + 1 - start));
      if (!s.empty()) out.push_back(std::move(s));
      start = i + 1;
    }
  }
  auto tail = trim(text.substr(std::min(start, text.size())));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

ResponseDecision classify_response(std::string_view text, const UnsafeConceptsDictionary& dict,
                                   EmbeddingProvider& provider, Metric metric,
                                   const ThresholdConfig& cfg) {
  const auto sentences = split_sentences(text);
  if (sentences.empty()) throw ContractError("response is empty");
  ResponseDecision out;
  std::optional<std::size_t> deciding;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto d = classify(provider.embed(sentences[i]), dict, metric, cfg);
    const bool take = !deciding ||
                      (d.verdict == Verdict::unsafe &&
                       out.per_sentence[*deciding].verdict == Verdict::safe) ||
                      (d.verdict == out.per_sentence[*deciding].verdict &&
                       more_similar(metric, d.score, out.per_sentence[*deciding].score));
    out.per_sentence.push_back(std::move(d));
    if (take) deciding = i;
  }
  out.decision = out.per_sentence[*deciding];
  out.sentence = sentences[*deciding];
  return out;
}

AddOutcome add_verified_unsafe(const SentenceRecord& sentence, const UnsafeConceptsDictionary& dict,
                               EmbeddingProvider& provider) {
  validate(sentence);
  AddOutcome out{dict, false, {}};
  if (dict.contains(sentence.category, sentence.text)) {
    out.notice = "duplicate: text already present in category " + std::to_string(sentence.category);
    return out;
  }
  SentenceRecord entry = sentence;
  entry.label = Label::unsafe;
  entry.embedding = provider.embed(sentence.text);
  out.added = out.dictionary.add(std::move(entry));
  return out;
}

std::filesystem::path dictionary_header_path(const std::filesystem::path& jsonl) {
  auto p = jsonl;
  p.replace_extension(".header.json");
  return p;
}

void save_dictionary(const std::filesystem::path& jsonl, const UnsafeConceptsDictionary& dict,
                     const nlohmann::json& metric_defaults) {
  save_corpus(jsonl, dict.entries());
  nlohmann::ordered_json header;
  header["version"] = dict.version();
  header["dimension"] = dict.dimension();
  header["metric_defaults"] = metric_defaults;
  write_file_atomic(dictionary_header_path(jsonl), header.dump(2) + "\n");
}

UnsafeConceptsDictionary load_dictionary(const std::filesystem::path& jsonl,
                                         EmbeddingProvider* provider) {
  auto records = load_corpus(jsonl);
  std::uint64_t version = 1;
  const auto header_path = dictionary_header_path(jsonl);
  std::size_t dimension = 0;
  if (std::filesystem::exists(header_path)) {
    auto header = nlohmann::json::parse(read_file(header_path));
    version = header.value("version", std::uint64_t{1});
    dimension = header.value("dimension", std::size_t{0});
  }
  std::vector<SentenceRecord> entries;
  for (auto& r : records) {
    if (r.label == Label::safe) continue;
    r.label = Label::unsafe;
    entries.push_back(std::move(r));
  }
  if (provider) entries = cache_embeddings(std::move(entries), *provider);
  UnsafeConceptsDictionary dict(std::move(entries), version);
  if (dimension != 0 && !dict.empty() && dict.dimension() != dimension) {
    throw ContractError("dictionary header dimension " + std::to_string(dimension) +
                        " disagrees with entries (" + std::to_string(dict.dimension()) + ")");
  }
  return dict;
}

}  // namespace windguard
