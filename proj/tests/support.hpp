#pragma once

#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "windguard/embedding.hpp"

namespace windguard::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "windguard-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline EmbeddingVector vec(std::initializer_list<double> values) {
  return EmbeddingVector(std::vector<double>(values));
}

inline SentenceRecord record(std::string text, int category, Label label,
                             std::optional<EmbeddingVector> embedding = std::nullopt) {
  return SentenceRecord{std::move(text), category, label, std::move(embedding)};
}

inline EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t d, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(d);
  for (auto& x : v) x = dist(rng);
  return EmbeddingVector(std::move(v));
}

}  // namespace windguard::testing
