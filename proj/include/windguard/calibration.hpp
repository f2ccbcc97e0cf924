#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "windguard/embedding.hpp"
#include "windguard/metrics.hpp"
#include "windguard/safety_filter.hpp"

namespace windguard {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  Label positive = Label::unsafe;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  double accuracy() const noexcept;  // fraction in [0, 1]

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// A labelled record reduced to its nearest-neighbour score against the
// dictionary entries of its own category.
struct ScoredRecord {
  int category = 0;
  Label label = Label::unlabeled;
  double score = 0.0;
};

// Scores every safe/unsafe record; unlabeled ones are dropped. Records must be
// embedded. A record whose category has no dictionary entries is an error.
std::vector<ScoredRecord> score_corpus(const std::vector<SentenceRecord>& corpus,
                                       const UnsafeConceptsDictionary& dict, Metric metric,
                                       std::size_t jobs = 1);

// Predicted unsafe iff score < tau (EMD) or score > tau (cosine).
bool predicts_unsafe(Metric metric, double score, double tau) noexcept;

ConfusionMatrix confusion_at(std::span<const ScoredRecord> scored, Metric metric, double tau,
                             Label positive = Label::unsafe);

ConfusionMatrix confusion_matrix(const std::vector<SentenceRecord>& corpus,
                                 const UnsafeConceptsDictionary& dict, Metric metric, double tau,
                                 Label positive = Label::unsafe);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // raw metric score at this cut; +/-inf for the sentinels
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by FPR, from (0,0) to (1,1)
  double auc = 0.0;
  int category = 0;              // 0 = pooled over categories
  Metric metric = Metric::emd;
  Label positive = Label::safe;
};

// Higher rank = more likely positive. Cut points are the unique ranks plus the
// +inf sentinel; AUC by the trapezoidal rule. Needs >= 1 positive and >= 1
// negative. `threshold` of each point carries the rank.
RocCurve roc_from_scores(std::span<const double> ranks, const std::vector<bool>& positive);

RocCurve roc_from_scored(std::span<const ScoredRecord> scored, Metric metric,
                         Label positive = Label::safe);

// ROC over the corpus (restricted to `category` when given).
RocCurve roc_curve(const std::vector<SentenceRecord>& corpus, const UnsafeConceptsDictionary& dict,
                   Metric metric, Label positive = Label::safe,
                   std::optional<int> category = std::nullopt);

// lo, lo+step, ..., up to hi (inclusive within 1e-9 steps). Each point is
// computed as lo + k*step.
std::vector<double> threshold_grid(double lo, double hi, double step);

struct SweepOptions {
  double step = 0.005;
  double lo = 0.0;
  double hi = 1.0;
  std::size_t jobs = 1;
  Label confusion_positive = Label::unsafe;
  Label roc_positive = Label::safe;
};

struct SweepPoint {
  double threshold = 0.0;
  double accuracy = 0.0;  // percent
  ConfusionMatrix confusion;
};

struct CategoryCalibration {
  int category = 0;
  Metric metric = Metric::emd;
  std::size_t records = 0;
  bool degenerate = false;
  std::string reason;
  double best_threshold = 0.0;
  double best_accuracy = 0.0;  // percent
  ConfusionMatrix best_confusion;
  std::vector<SweepPoint> sweep;
  std::optional<RocCurve> roc;
};

// One entry per category present in the corpus. Categories lacking one of the
// labels (or lacking dictionary entries) come back degenerate with no best
// threshold. Ties in accuracy go to the smallest threshold.
std::vector<CategoryCalibration> sweep_thresholds(const std::vector<SentenceRecord>& corpus,
                                                  const UnsafeConceptsDictionary& dict,
                                                  Metric metric, const SweepOptions& opts = {});

struct CalibrationReport {
  SweepOptions options;
  std::vector<CategoryCalibration> entries;  // grouped by metric, then category

  const CategoryCalibration* find(int category, Metric metric) const;
  std::vector<int> categories() const;
  std::optional<double> mean_auc(Metric metric) const;
  // Best thresholds of every non-degenerate entry.
  ThresholdConfig thresholds() const;
};

CalibrationReport calibrate(const std::vector<SentenceRecord>& corpus,
                            const UnsafeConceptsDictionary& dict, std::span<const Metric> metrics,
                            const SweepOptions& opts = {});

nlohmann::json to_json(const ConfusionMatrix& m);
nlohmann::json to_json(const RocCurve& roc);
nlohmann::json to_json(const CalibrationReport& report);

// Rows per metric, one column per category: "metric,1,2,...".
std::string accuracy_table_csv(const CalibrationReport& report);
// "fpr,tpr,threshold" rows.
std::string roc_csv(const RocCurve& roc);

struct SyntheticSpec {
  double eta = 0.06;                    // displacement of safe records
  std::size_t unsafe_per_category = 10;
  std::size_t safe_per_category = 10;
  int categories = 10;
  std::size_t anchors_per_category = 3; // dictionary entries per category
  std::size_t dimension = kDefaultDimension;
  double noise = 0.008;                 // per-component noise bound on unsafe records
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<SentenceRecord> corpus;
  UnsafeConceptsDictionary dictionary;
};

// Anchors are centred unit vectors. Unsafe record k of a category is anchor
// (k mod anchors) plus uniform noise in [-noise, noise], so its EMD to that
// anchor is at most `noise`. Safe record k is unsafe record (k mod unsafe)
// shifted by eta in every component. With eta = 0 every safe record duplicates
// an unsafe one. Equal SyntheticSpec values give identical output.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace windguard
