#pragma once

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "g2k/autodiff.hpp"
#include "g2k/error.hpp"

namespace testing {

using g2k::ad::Matrix;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

template <class F>
g2k::ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const g2k::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected a g2k::Error");
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("g2k_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace testing
