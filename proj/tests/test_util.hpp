// Helpers shared by the unit tests.
#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "scbo/core.hpp"

namespace scbo::test {

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

inline Matrix random_matrix(std::mt19937_64& rng, long n, int d, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(n, d);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = nd(rng);
  return m;
}

inline Vec random_vec(std::mt19937_64& rng, long n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (long i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("scbo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace scbo::test
