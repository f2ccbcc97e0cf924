#pragma once

// Constructed inputs shared by the unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "windguard/embedding.hpp"
#include "windguard/metrics.hpp"

namespace windguard::fixtures {

// Ten responses: nine within +/-0.001 per component of a common centre (so any
// two differ by at most 0.002 in EMD), one shifted by 0.05 in every component
// (at least 0.048 from each of the nine). Limit 0.0042 separates them.
inline std::vector<EmbeddingVector> nine_and_one_outlier(std::uint64_t seed = 3, std::size_t d = 64,
                                                         std::size_t outlier_index = 9) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.001, 0.001);
  std::vector<double> centre(d);
  for (auto& x : centre) x = gauss(rng) / std::sqrt(static_cast<double>(d));
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < 10; ++i) {
    std::vector<double> v = centre;
    for (auto& x : v) x += jitter(rng);
    if (i == outlier_index) {
      for (auto& x : v) x += 0.05;
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

// Texts with 1..n distinct tokens. Under the hashing embedder their component
// distributions differ, so their pairwise EMD is positive; callers check the
// margin against their limit.
inline std::vector<std::string> distinct_length_texts(std::size_t n) {
  static const char* words[] = {"inspect", "yaw",   "bearing", "grease", "hub",    "pitch",  "sensor",
                                "cable",   "tower", "flange",  "bolt",   "anemometer", "brake", "slip"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (std::size_t k = 0; k <= i; ++k) {
      if (!s.empty()) s += ' ';
      s += words[k % (sizeof words / sizeof *words)];
      if (k >= sizeof words / sizeof *words) s += std::to_string(k);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace windguard::fixtures
