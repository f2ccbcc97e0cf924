#include "windguard/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "windguard/errors.hpp"

namespace windguard {

namespace {

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

// +1 when a larger raw score means "more likely positive".
double orientation(Metric metric, Label positive) {
  const bool unsafe_positive = positive == Label::unsafe;
  if (metric == Metric::cosine) return unsafe_positive ? 1.0 : -1.0;
  return unsafe_positive ? -1.0 : 1.0;
}

void require_binary(Label positive) {
  if (positive == Label::unlabeled) throw ContractError("positive class must be safe or unsafe");
}

}  // namespace

double ConfusionMatrix::accuracy() const noexcept {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

std::vector<ScoredRecord> score_corpus(const std::vector<SentenceRecord>& corpus,
                                       const UnsafeConceptsDictionary& dict, Metric metric,
                                       std::size_t jobs) {
  if (dict.empty()) throw ConfigurationError("unsafe concepts dictionary is empty");
  std::vector<const SentenceRecord*> labelled;
  for (const auto& r : corpus) {
    if (r.label == Label::unlabeled) continue;
    if (!r.embedding) throw ContractError("corpus record is not embedded: " + r.text);
    if (!dict.categories().contains(r.category)) {
      throw ContractError("category " + std::to_string(r.category) + " has no dictionary entries");
    }
    labelled.push_back(&r);
  }
  std::vector<ScoredRecord> out(labelled.size());
  parallel_for(labelled.size(), jobs, [&](std::size_t i) {
    const auto& r = *labelled[i];
    const auto& indices = dict.categories().at(r.category);
    double best = 0.0;
    bool first = true;
    for (std::size_t idx : indices) {
      const double s = measure(metric, *r.embedding, *dict.entries()[idx].embedding);
      if (first || more_similar(metric, s, best)) {
        best = s;
        first = false;
      }
    }
    out[i] = {r.category, r.label, best};
  });
  return out;
}

bool predicts_unsafe(Metric metric, double score, double tau) noexcept {
  return more_similar(metric, score, tau);
}

ConfusionMatrix confusion_at(std::span<const ScoredRecord> scored, Metric metric, double tau,
                             Label positive) {
  require_binary(positive);
  ConfusionMatrix m;
  m.positive = positive;
  for (const auto& r : scored) {
    if (r.label == Label::unlabeled) continue;
    const Label predicted = predicts_unsafe(metric, r.score, tau) ? Label::unsafe : Label::safe;
    const bool predicted_positive = predicted == positive;
    const bool actual_positive = r.label == positive;
    if (predicted_positive && actual_positive) ++m.tp;
    else if (predicted_positive) ++m.fp;
    else if (actual_positive) ++m.fn;
    else ++m.tn;
  }
  return m;
}

ConfusionMatrix confusion_matrix(const std::vector<SentenceRecord>& corpus,
                                 const UnsafeConceptsDictionary& dict, Metric metric, double tau,
                                 Label positive) {
  const auto scored = score_corpus(corpus, dict, metric);
  return confusion_at(scored, metric, tau, positive);
}

RocCurve roc_from_scores(std::span<const double> ranks, const std::vector<bool>& positive) {
  if (ranks.size() != positive.size()) throw ContractError("scores and labels differ in length");
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ContractError("ROC needs at least one positive and one negative record");
  }
  for (double r : ranks) {
    if (std::isnan(r)) throw ContractError("ROC score is NaN");
  }
  std::vector<std::size_t> order(ranks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ranks[a] > ranks[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0;
  std::size_t fp = 0;
  // Twice the area, scaled by n_pos * n_neg, accumulated in integers.
  std::uint64_t area2 = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double cut = ranks[order[k]];
    const std::size_t tp_before = tp;
    const std::size_t fp_before = fp;
    while (k < order.size() && ranks[order[k]] == cut) {
      if (positive[order[k]]) ++tp;
      else ++fp;
      ++k;
    }
    area2 += static_cast<std::uint64_t>(fp - fp_before) * (tp + tp_before);
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos), cut});
  }
  roc.auc = static_cast<double>(area2) /
            (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return roc;
}

RocCurve roc_from_scored(std::span<const ScoredRecord> scored, Metric metric, Label positive) {
  require_binary(positive);
  const double sign = orientation(metric, positive);
  std::vector<double> ranks;
  std::vector<bool> is_pos;
  for (const auto& r : scored) {
    if (r.label == Label::unlabeled) continue;
    ranks.push_back(sign * r.score);
    is_pos.push_back(r.label == positive);
  }
  auto roc = roc_from_scores(ranks, is_pos);
  for (auto& p : roc.points) p.threshold = sign * p.threshold;
  roc.metric = metric;
  roc.positive = positive;
  return roc;
}

RocCurve roc_curve(const std::vector<SentenceRecord>& corpus, const UnsafeConceptsDictionary& dict,
                   Metric metric, Label positive, std::optional<int> category) {
  std::vector<SentenceRecord> subset;
  for (const auto& r : corpus) {
    if (!category || r.category == *category) subset.push_back(r);
  }
  const auto scored = score_corpus(subset, dict, metric);
  auto roc = roc_from_scored(scored, metric, positive);
  roc.category = category.value_or(0);
  return roc;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ContractError("sweep step must be > 0");
  if (!(lo < hi)) throw ContractError("sweep range needs lo < hi");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> grid;
  grid.reserve(count + 1);
  for (std::size_t k = 0; k <= count; ++k) grid.push_back(lo + static_cast<double>(k) * step);
  return grid;
}

std::vector<CategoryCalibration> sweep_thresholds(const std::vector<SentenceRecord>& corpus,
                                                  const UnsafeConceptsDictionary& dict,
                                                  Metric metric, const SweepOptions& opts) {
  const auto grid = threshold_grid(opts.lo, opts.hi, opts.step);
  require_binary(opts.confusion_positive);
  require_binary(opts.roc_positive);

  std::map<int, std::vector<SentenceRecord>> by_category;
  for (const auto& r : corpus) by_category[r.category].push_back(r);

  std::vector<CategoryCalibration> out;
  out.reserve(by_category.size());
  for (const auto& [category, records] : by_category) {
    CategoryCalibration c;
    c.category = category;
    c.metric = metric;
    out.push_back(std::move(c));
  }

  std::vector<const std::vector<SentenceRecord>*> groups;
  for (const auto& [category, records] : by_category) groups.push_back(&records);

  parallel_for(out.size(), opts.jobs, [&](std::size_t g) {
    auto& c = out[g];
    const auto& records = *groups[g];
    std::size_t n_safe = 0;
    std::size_t n_unsafe = 0;
    for (const auto& r : records) {
      n_safe += r.label == Label::safe;
      n_unsafe += r.label == Label::unsafe;
    }
    c.records = n_safe + n_unsafe;
    if (!dict.categories().contains(c.category)) {
      c.degenerate = true;
      c.reason = "no dictionary entries for category";
      return;
    }
    if (n_safe == 0 || n_unsafe == 0) {
      c.degenerate = true;
      c.reason = "single-label category";
      return;
    }
    const auto scored = score_corpus(records, dict, metric);
    std::size_t best_correct = 0;
    bool have_best = false;
    for (double tau : grid) {
      SweepPoint p;
      p.threshold = tau;
      p.confusion = confusion_at(scored, metric, tau, opts.confusion_positive);
      p.accuracy = 100.0 * p.confusion.accuracy();
      const std::size_t correct = p.confusion.tp + p.confusion.tn;
      if (!have_best || correct > best_correct) {
        have_best = true;
        best_correct = correct;
        c.best_threshold = tau;
        c.best_accuracy = p.accuracy;
        c.best_confusion = p.confusion;
      }
      c.sweep.push_back(p);
    }
    auto roc = roc_from_scored(scored, metric, opts.roc_positive);
    roc.category = c.category;
    c.roc = std::move(roc);
  });
  return out;
}

const CategoryCalibration* CalibrationReport::find(int category, Metric metric) const {
  for (const auto& e : entries) {
    if (e.category == category && e.metric == metric) return &e;
  }
  return nullptr;
}

std::vector<int> CalibrationReport::categories() const {
  std::set<int> s;
  for (const auto& e : entries) s.insert(e.category);
  return {s.begin(), s.end()};
}

std::optional<double> CalibrationReport::mean_auc(Metric metric) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.metric != metric || !e.roc) continue;
    sum += e.roc->auc;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

ThresholdConfig CalibrationReport::thresholds() const {
  ThresholdConfig cfg;
  for (const auto& e : entries) {
    if (!e.degenerate) cfg.set(e.category, e.metric, e.best_threshold);
  }
  return cfg;
}

CalibrationReport calibrate(const std::vector<SentenceRecord>& corpus,
                            const UnsafeConceptsDictionary& dict, std::span<const Metric> metrics,
                            const SweepOptions& opts) {
  CalibrationReport report;
  report.options = opts;
  for (Metric m : metrics) {
    auto part = sweep_thresholds(corpus, dict, m, opts);
    for (auto& e : part) report.entries.push_back(std::move(e));
  }
  return report;
}

nlohmann::json to_json(const ConfusionMatrix& m) {
  nlohmann::json j;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  j["positive"] = to_string(m.positive);
  j["accuracy"] = 100.0 * m.accuracy();
  return j;
}

nlohmann::json to_json(const RocCurve& roc) {
  nlohmann::json j;
  j["category"] = roc.category;
  j["metric"] = to_string(roc.metric);
  j["positive"] = to_string(roc.positive);
  j["auc"] = roc.auc;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : roc.points) {
    pts.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", finite_or_null(p.threshold)}});
  }
  j["points"] = std::move(pts);
  return j;
}

nlohmann::json to_json(const CalibrationReport& report) {
  nlohmann::json j;
  j["step"] = report.options.step;
  j["lo"] = report.options.lo;
  j["hi"] = report.options.hi;
  j["confusion_positive"] = to_string(report.options.confusion_positive);
  j["roc_positive"] = to_string(report.options.roc_positive);
  nlohmann::json entries = nlohmann::json::array();
  nlohmann::json table = nlohmann::json::object();
  for (const auto& e : report.entries) {
    nlohmann::json ej;
    ej["category"] = e.category;
    ej["metric"] = to_string(e.metric);
    ej["records"] = e.records;
    ej["degenerate"] = e.degenerate;
    if (e.degenerate) {
      ej["reason"] = e.reason;
    } else {
      ej["best_threshold"] = e.best_threshold;
      ej["best_accuracy"] = e.best_accuracy;
      ej["best_confusion"] = to_json(e.best_confusion);
      table[std::string(to_string(e.metric))][std::to_string(e.category)] = e.best_accuracy;
    }
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& p : e.sweep) {
      sweep.push_back({{"threshold", p.threshold},
                       {"accuracy", p.accuracy},
                       {"tp", p.confusion.tp},
                       {"fp", p.confusion.fp},
                       {"tn", p.confusion.tn},
                       {"fn", p.confusion.fn}});
    }
    ej["sweep"] = std::move(sweep);
    ej["roc"] = e.roc ? to_json(*e.roc) : nlohmann::json(nullptr);
    entries.push_back(std::move(ej));
  }
  j["entries"] = std::move(entries);
  j["accuracy_table"] = std::move(table);
  nlohmann::json mean = nlohmann::json::object();
  for (Metric m : {Metric::cosine, Metric::emd}) {
    if (auto a = report.mean_auc(m)) mean[std::string(to_string(m))] = *a;
  }
  j["mean_auc"] = std::move(mean);
  return j;
}

std::string accuracy_table_csv(const CalibrationReport& report) {
  const auto cats = report.categories();
  std::vector<Metric> metrics;
  for (const auto& e : report.entries) {
    if (std::find(metrics.begin(), metrics.end(), e.metric) == metrics.end()) metrics.push_back(e.metric);
  }
  std::string out = "metric";
  for (int c : cats) out += "," + std::to_string(c);
  out += "\n";
  for (Metric m : metrics) {
    out += to_string(m);
    for (int c : cats) {
      out += ",";
      const auto* e = report.find(c, m);
      if (e && !e->degenerate) out += format_number(e->best_accuracy);
    }
    out += "\n";
  }
  return out;
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : roc.points) {
    out += format_number(p.fpr) + "," + format_number(p.tpr) + "," + format_number(p.threshold) + "\n";
  }
  return out;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.categories < 1) throw ContractError("synthetic corpus needs at least one category");
  if (!(spec.eta >= 0.0) || !std::isfinite(spec.eta)) throw ContractError("eta must be >= 0");
  if (spec.unsafe_per_category < 1 || spec.safe_per_category < 1) {
    throw ContractError("per-label counts must be >= 1");
  }
  if (spec.anchors_per_category < 1) throw ContractError("need at least one anchor per category");
  if (spec.dimension < 2) throw ContractError("synthetic dimension must be >= 2");
  if (!(spec.noise >= 0.0)) throw ContractError("noise must be >= 0");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-spec.noise, spec.noise);
  const std::size_t d = spec.dimension;

  SyntheticCorpus out;
  std::vector<SentenceRecord> anchors;
  for (int c = 1; c <= spec.categories; ++c) {
    std::vector<std::vector<double>> cat_anchors;
    for (std::size_t a = 0; a < spec.anchors_per_category; ++a) {
      std::vector<double> v(d);
      for (auto& x : v) x = gauss(rng);
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(d);
      double sq = 0.0;
      for (auto& x : v) {
        x -= mean;
        sq += x * x;
      }
      const double inv = 1.0 / std::sqrt(sq);
      for (auto& x : v) x *= inv;
      anchors.push_back({"synthetic category " + std::to_string(c) + " unsafe concept " + std::to_string(a),
                         c, Label::unsafe, EmbeddingVector(v)});
      cat_anchors.push_back(std::move(v));
    }

    std::vector<std::vector<double>> unsafe_vectors;
    for (std::size_t k = 0; k < spec.unsafe_per_category; ++k) {
      auto v = cat_anchors[k % cat_anchors.size()];
      for (auto& x : v) x += jitter(rng);
      out.corpus.push_back({"synthetic category " + std::to_string(c) + " unsafe sentence " + std::to_string(k),
                            c, Label::unsafe, EmbeddingVector(v)});
      unsafe_vectors.push_back(std::move(v));
    }
    for (std::size_t k = 0; k < spec.safe_per_category; ++k) {
      auto v = unsafe_vectors[k % unsafe_vectors.size()];
      for (auto& x : v) x += spec.eta;
      out.corpus.push_back({"synthetic category " + std::to_string(c) + " safe sentence " + std::to_string(k),
                            c, Label::safe, EmbeddingVector(std::move(v))});
    }
  }
  out.dictionary = UnsafeConceptsDictionary(std::move(anchors));
  return out;
}

}  // namespace windguard
