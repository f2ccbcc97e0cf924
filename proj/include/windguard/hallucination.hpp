#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "windguard/embedding.hpp"
#include "windguard/metrics.hpp"

namespace windguard {

struct ResponseSampleSet {
  std::string prompt;
  std::vector<SentenceRecord> responses;  // each embedded, one dimension

  std::vector<EmbeddingVector> embeddings() const;
};

struct HallucinationConfig {
  std::size_t samples = 10;               // N
  double limiting_threshold = 0.0042;     // max acceptable pairwise distance
  double occurrence_threshold = 0.40;     // min fraction of divergent comparisons
  Metric metric = Metric::emd;

  // Throws ContractError on N < 2, negative limit, or occurrence outside (0, 1].
  void validate() const;
};

struct HallucinationVerdict {
  std::vector<bool> flags;
  std::vector<double> exceed_fractions;
  bool any_hallucination = false;

  std::size_t flagged_count() const;
};

nlohmann::json to_json(const HallucinationVerdict& verdict);

// For each response i, the fraction of other responses j whose kernel value
// D[i][j] exceeds the limiting threshold; flagged when that fraction reaches
// the occurrence threshold. For cosine the compared quantity is 1 - cos.
HallucinationVerdict detect_inconsistency(std::span<const EmbeddingVector> responses,
                                          const HallucinationConfig& cfg);
HallucinationVerdict detect_inconsistency(const ResponseSampleSet& samples,
                                          const HallucinationConfig& cfg);

// Square matrix of reals, row-major.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> data;

  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
};

// R[i][j] = deviation(h_i, f_j).
Matrix deviation_matrix(std::span<const EmbeddingVector> hypotheses,
                        std::span<const EmbeddingVector> facts, Metric metric);

// F_i = 1 / (1 + deviation(h_i, f_i)).
std::vector<double> fidelity_constants(std::span<const EmbeddingVector> hypotheses,
                                       std::span<const EmbeddingVector> ground_truth, Metric metric);
double fidelity_constant(double deviation);

struct Consistency {
  double c_r = 0.0;
  double c_f = 0.0;
};

// C_R = #{r_ij < theta} / n^2 ; C_F = #{F_i > 1 - theta} / n. 0 < theta < 1.
Consistency consistency_scores(const Matrix& deviations, std::span<const double> fidelity,
                               double theta);

// M = w_R * C_R + w_F * C_F with non-negative weights.
double combined_metric(double c_r, double c_f, double w_r = 0.5, double w_f = 0.5);

struct FidelityReport {
  Matrix deviations;
  std::vector<double> fidelity;
  double theta = 0.0;
  double c_r = 0.0;
  double c_f = 0.0;
  double w_r = 0.5;
  double w_f = 0.5;
  double m = 0.0;
};

FidelityReport fidelity_report(std::span<const EmbeddingVector> hypotheses,
                               std::span<const EmbeddingVector> facts, Metric metric, double theta,
                               double w_r = 0.5, double w_f = 0.5);

nlohmann::json to_json(const FidelityReport& report);

}  // namespace windguard
