#include "windguard/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "windguard/errors.hpp"

namespace windguard {

namespace {

void require_same_dimension(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (a.empty()) throw ContractError("vectors must have dimension >= 1");
}

}  // namespace

std::string_view to_string(Metric metric) noexcept {
  return metric == Metric::emd ? "emd" : "cosine";
}

std::optional<Metric> parse_metric(std::string_view text) noexcept {
  if (text == "emd") return Metric::emd;
  if (text == "cosine") return Metric::cosine;
  return std::nullopt;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_dimension(a, b);
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero-magnitude vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double wasserstein_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dimension(a, b);
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::stable_sort(sa.begin(), sa.end());
  std::stable_sort(sb.begin(), sb.end());
  double total = 0.0;
  for (std::size_t k = 0; k < sa.size(); ++k) total += std::abs(sa[k] - sb[k]);
  return total / static_cast<double>(sa.size());
}

double measure(Metric metric, std::span<const double> a, std::span<const double> b) {
  return metric == Metric::emd ? wasserstein_distance(a, b) : cosine_similarity(a, b);
}

double deviation(Metric metric, std::span<const double> a, std::span<const double> b) {
  return metric == Metric::emd ? wasserstein_distance(a, b) : 1.0 - cosine_similarity(a, b);
}

DistanceMatrix::DistanceMatrix(std::size_t n, Metric metric)
    : n_(n), metric_(metric), data_(n * n, 0.0) {}

void DistanceMatrix::set(std::size_t i, std::size_t j, double value) {
  data_[i * n_ + j] = value;
  data_[j * n_ + i] = value;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

DistanceMatrix pairwise_matrix(std::span<const EmbeddingVector> vectors, Metric metric,
                               std::size_t jobs) {
  const std::size_t n = vectors.size();
  if (n < 2) throw ContractError("pairwise matrix needs at least 2 vectors");
  DistanceMatrix m(n, metric);
  parallel_for(n, jobs, [&](std::size_t i) {
    if (metric == Metric::cosine) {
      try {
        cosine_similarity(vectors[i], vectors[i]);
        m.set(i, i, 1.0);
      } catch (const std::exception& e) {
        throw PairwiseError(i, i, e.what());
      }
    }
    // Each worker owns row i's upper-triangle cells (and their mirrors).
    for (std::size_t j = i + 1; j < n; ++j) {
      try {
        m.set(i, j, measure(metric, vectors[i], vectors[j]));
      } catch (const std::exception& e) {
        throw PairwiseError(i, j, e.what());
      }
    }
  });
  return m;
}

}  // namespace windguard
