#pragma once

#include "grasp/synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

namespace grasp::test {

inline Matrix random_unit_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  m.rowwise().normalize();
  return m;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// D=32 corpus small enough for quick training runs.
inline SyntheticSpec small_spec(int n = 400, std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.dim = 32;
  s.blocks = {2, 2, 4, 24};
  s.cardinalities = {4, 4, 4};
  s.n_examples = n;
  s.seed = seed;
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("grasp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double max_abs_orth_error(const Matrix& R) {
  return (R.transpose() * R - Matrix::Identity(R.cols(), R.cols())).cwiseAbs().maxCoeff();
}

}  // namespace grasp::test
