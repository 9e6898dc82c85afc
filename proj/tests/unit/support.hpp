#pragma once

#include <random>

#include <Eigen/Dense>

#include "w2s/geometry.hpp"

// Test-side randomness, independent of the library generator.
namespace testing_support {

inline Eigen::VectorXd gaussian_vector(std::mt19937_64& gen, Eigen::Index d) {
  std::normal_distribution<double> n;
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = n(gen);
  return v;
}

inline Eigen::MatrixXd gaussian_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(gen);
  return m;
}

// Wishart-like SPD matrix bounded away from singular.
inline Eigen::MatrixXd random_spd(std::mt19937_64& gen, Eigen::Index d) {
  const Eigen::MatrixXd a = gaussian_matrix(gen, d, d);
  Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(d);
  s += 0.1 * Eigen::MatrixXd::Identity(d, d);
  return 0.5 * (s + s.transpose());
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace testing_support
