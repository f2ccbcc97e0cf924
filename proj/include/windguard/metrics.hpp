#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "windguard/embedding.hpp"

namespace windguard {

enum class Metric { cosine, emd };

std::string_view to_string(Metric metric) noexcept;
std::optional<Metric> parse_metric(std::string_view text) noexcept;

// (a.b) / (|a||b|), clamped to [-1, 1].
// Throws ContractError on dimension mismatch, DomainError on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// 1-D Wasserstein distance treating each vector's components as d equal-weight
// samples: (1/d) * sum_k |sort(a)_k - sort(b)_k|.
double wasserstein_distance(std::span<const double> a, std::span<const double> b);

// Raw kernel value: cosine similarity or EMD.
double measure(Metric metric, std::span<const double> a, std::span<const double> b);

// Dissimilarity on a common "0 means identical" scale: EMD itself, or
// 1 - cosine for the cosine metric.
double deviation(Metric metric, std::span<const double> a, std::span<const double> b);

// True when `candidate` is strictly more similar than `incumbent` under the
// metric's orientation (lower EMD, higher cosine).
constexpr bool more_similar(Metric metric, double candidate, double incumbent) noexcept {
  return metric == Metric::emd ? candidate < incumbent : candidate > incumbent;
}

// Symmetric n x n matrix of kernel values.
class DistanceMatrix {
 public:
  DistanceMatrix(std::size_t n, Metric metric);

  std::size_t size() const noexcept { return n_; }
  Metric metric() const noexcept { return metric_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double value);

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * n_, n_);
  }

 private:
  std::size_t n_;
  Metric metric_;
  std::vector<double> data_;
};

// Requires >= 2 vectors of equal dimension. Each off-diagonal pair is computed
// once; the diagonal is 0 for EMD and 1 for cosine. Kernel failures surface as
// PairwiseError carrying (i, j). `jobs` > 1 splits rows across threads; output
// does not depend on it.
DistanceMatrix pairwise_matrix(std::span<const EmbeddingVector> vectors, Metric metric,
                               std::size_t jobs = 1);

// Runs body(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// exception by index order.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace windguard
