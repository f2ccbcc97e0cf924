#include "windguard/hallucination.hpp"

#include <algorithm>
#include <cmath>

#include "windguard/errors.hpp"

namespace windguard {

std::vector<EmbeddingVector> ResponseSampleSet::embeddings() const {
  std::vector<EmbeddingVector> out;
  out.reserve(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (!responses[i].embedding) {
      throw ContractError("response " + std::to_string(i) + " has no embedding");
    }
    out.push_back(*responses[i].embedding);
  }
  return out;
}

void HallucinationConfig::validate() const {
  if (samples < 2) throw ContractError("hallucination check needs N >= 2 samples");
  if (!(limiting_threshold >= 0.0) || !std::isfinite(limiting_threshold)) {
    throw ContractError("limiting threshold must be a finite value >= 0");
  }
  if (!(occurrence_threshold > 0.0 && occurrence_threshold <= 1.0)) {
    throw ContractError("occurrence threshold must lie in (0, 1]");
  }
}

std::size_t HallucinationVerdict::flagged_count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

nlohmann::json to_json(const HallucinationVerdict& v) {
  nlohmann::json j;
  j["flags"] = v.flags;
  j["exceed_fractions"] = v.exceed_fractions;
  j["any_hallucination"] = v.any_hallucination;
  return j;
}

HallucinationVerdict detect_inconsistency(std::span<const EmbeddingVector> responses,
                                          const HallucinationConfig& cfg) {
  if (responses.size() < 2) throw ContractError("hallucination check needs N >= 2 responses");
  if (!(cfg.limiting_threshold >= 0.0)) throw ContractError("limiting threshold must be >= 0");
  if (!(cfg.occurrence_threshold > 0.0 && cfg.occurrence_threshold <= 1.0)) {
    throw ContractError("occurrence threshold must lie in (0, 1]");
  }
  const std::size_t n = responses.size();
  const auto d = pairwise_matrix(responses, cfg.metric);
  HallucinationVerdict v;
  v.flags.resize(n);
  v.exceed_fractions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t exceed = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dev = cfg.metric == Metric::emd ? d(i, j) : 1.0 - d(i, j);
      if (dev > cfg.limiting_threshold) ++exceed;
    }
    v.exceed_fractions[i] = static_cast<double>(exceed) / static_cast<double>(n - 1);
    v.flags[i] = v.exceed_fractions[i] >= cfg.occurrence_threshold;
    v.any_hallucination = v.any_hallucination || v.flags[i];
  }
  return v;
}

HallucinationVerdict detect_inconsistency(const ResponseSampleSet& samples,
                                          const HallucinationConfig& cfg) {
  const auto e = samples.embeddings();
  return detect_inconsistency(e, cfg);
}

Matrix deviation_matrix(std::span<const EmbeddingVector> hypotheses,
                        std::span<const EmbeddingVector> facts, Metric metric) {
  if (hypotheses.size() != facts.size()) {
    throw ContractError("hypotheses and facts differ in count");
  }
  if (hypotheses.empty()) throw ContractError("deviation matrix needs n >= 1");
  const std::size_t n = hypotheses.size();
  Matrix r{n, std::vector<double>(n * n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) r(i, j) = deviation(metric, hypotheses[i], facts[j]);
  }
  return r;
}

double fidelity_constant(double dev) {
  if (!(dev >= 0.0)) throw ContractError("deviation must be >= 0");
  return 1.0 / (1.0 + dev);
}

std::vector<double> fidelity_constants(std::span<const EmbeddingVector> hypotheses,
                                       std::span<const EmbeddingVector> ground_truth,
                                       Metric metric) {
  if (hypotheses.size() != ground_truth.size()) {
    throw ContractError("hypotheses and ground truths differ in count");
  }
  std::vector<double> f;
  f.reserve(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    f.push_back(fidelity_constant(deviation(metric, hypotheses[i], ground_truth[i])));
  }
  return f;
}

Consistency consistency_scores(const Matrix& deviations, std::span<const double> fidelity,
                               double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw ContractError("theta must lie in (0, 1)");
  const std::size_t n = deviations.n;
  if (n == 0 || deviations.data.size() != n * n) throw ContractError("deviation matrix is not n x n");
  if (fidelity.size() != n) throw ContractError("fidelity vector length differs from n");
  const auto below = std::count_if(deviations.data.begin(), deviations.data.end(),
                                   [theta](double r) { return r < theta; });
  const auto above = std::count_if(fidelity.begin(), fidelity.end(),
                                   [theta](double f) { return f > 1.0 - theta; });
  return {static_cast<double>(below) / static_cast<double>(n * n),
          static_cast<double>(above) / static_cast<double>(n)};
}

double combined_metric(double c_r, double c_f, double w_r, double w_f) {
  if (w_r < 0.0 || w_f < 0.0) throw ContractError("weights must be >= 0");
  return w_r * c_r + w_f * c_f;
}

FidelityReport fidelity_report(std::span<const EmbeddingVector> hypotheses,
                               std::span<const EmbeddingVector> facts, Metric metric, double theta,
                               double w_r, double w_f) {
  FidelityReport rep;
  rep.deviations = deviation_matrix(hypotheses, facts, metric);
  rep.fidelity = fidelity_constants(hypotheses, facts, metric);
  const auto c = consistency_scores(rep.deviations, rep.fidelity, theta);
  rep.theta = theta;
  rep.c_r = c.c_r;
  rep.c_f = c.c_f;
  rep.w_r = w_r;
  rep.w_f = w_f;
  rep.m = combined_metric(c.c_r, c.c_f, w_r, w_f);
  return rep;
}

nlohmann::json to_json(const FidelityReport& rep) {
  nlohmann::json j;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.deviations.n; ++i) {
    rows.push_back(std::vector<double>(rep.deviations.data.begin() + static_cast<long>(i * rep.deviations.n),
                                       rep.deviations.data.begin() + static_cast<long>((i + 1) * rep.deviations.n)));
  }
  j["deviation_matrix"] = rows;
  j["fidelity"] = rep.fidelity;
  j["theta"] = rep.theta;
  j["c_r"] = rep.c_r;
  j["c_f"] = rep.c_f;
  j["w_r"] = rep.w_r;
  j["w_f"] = rep.w_f;
  j["m"] = rep.m;
  return j;
}

}  // namespace windguard
