#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "hop/matrix.hpp"
#include "hop/rng.hpp"

namespace hop::testing {

template <typename T>
BasicMatrix<T> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  BasicMatrix<T> m(rows, cols);
  for (T& v : m.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return m;
}

/// Textbook per-channel moments, written independently of the library:
/// [mean | m2 | ... | mp] with population central moments.
inline std::vector<double> naive_moments(const std::vector<std::vector<double>>& tokens, int p) {
  const std::size_t L = tokens.size(), Q = tokens.front().size();
  std::vector<double> out(static_cast<std::size_t>(p) * Q, 0.0);
  for (std::size_t q = 0; q < Q; ++q) {
    double mean = 0.0;
    for (std::size_t d = 0; d < L; ++d) mean += tokens[d][q];
    mean /= static_cast<double>(L);
    out[q] = mean;
    for (int k = 2; k <= p; ++k) {
      double acc = 0.0;
      for (std::size_t d = 0; d < L; ++d) acc += std::pow(tokens[d][q] - mean, k);
      out[static_cast<std::size_t>(k - 1) * Q + q] = acc / static_cast<double>(L);
    }
  }
  return out;
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps finite-difference
/// rounding noise (~1e-10 at h = 1e-6) from dominating at exactly-zero
/// gradients, such as those behind a dead ReLU unit.
inline constexpr double kGradientFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
  return std::abs(analytic - numeric) / scale;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hop-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
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

}  // namespace hop::testing
