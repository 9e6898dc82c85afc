#pragma once

#include <cmath>
#include <cstdint>

#include "w2s/data.hpp"

namespace w2s {

struct ProblemInstance {
  Vector theta_star;
  Vector psi;
  Vector theta0;
  double beta = 1.0;
  DistributionSpec dist = DistributionSpec::isotropic_gaussian(1);

  const Covariance& cov() const { return dist.cov(); }
  Eigen::Index dim() const { return dist.dim(); }

  // Unit Sigma-norms for theta_star and psi, nonzero theta0, beta > 0.
  void validate() const;
  // <theta_star, theta0>_Sigma >= 0 and <theta_star, theta0>_{Sigma^2} >= 0.
  void validate_theorem_mode() const;
};

template <typename T>
T sigma_beta(T t, T beta) {
  const T z = beta * t;
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// (1/B) sum_i beta (sigma_beta(theta^T x_i) - y_i) x_i
Vector minibatch_gradient(const Vector& theta, const SampleBatch& batch, const Vector& labels,
                          double beta);
// Mean logistic loss whose gradient is minibatch_gradient.
double batch_loss(const Vector& theta, const SampleBatch& batch, const Vector& labels, double beta);

enum class GradientMethod { MonteCarlo, SemiAnalytic };

struct GradientEstimate {
  Vector mean;
  Vector std_error;          // zero for the semi-analytic method
  Matrix batch_means;        // d x n_batches, Monte Carlo only
  Eigen::Index n_samples = 0;
};

inline constexpr Eigen::Index kDefaultMcSamples = 1'000'000;
inline constexpr Eigen::Index kMcBatches = 100;

GradientEstimate population_gradient(const Vector& theta, const Vector& psi, double beta,
                                     const DistributionSpec& dist, GradientMethod method,
                                     Eigen::Index n = kDefaultMcSamples, std::uint64_t seed = 0);

// beta (Sigma theta q(|theta|_Sigma) / |theta|_Sigma^2 - Sigma psi / (sqrt(2 pi) |psi|_Sigma))
Vector gaussian_population_gradient(const Vector& theta, const Vector& psi, double beta,
                                    const Covariance& cov);

// q(s, beta) = E[sigma_beta(z) z] for z ~ N(0, s^2).
double gaussian_logit_moment(double s, double beta);

enum class NormMode { Euclidean, Sigma };
NormMode default_norm_mode(const DistributionSpec& dist);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

// (1/|theta|_mode) E[sigma_beta(theta^T x) theta^T x]
Estimate confidence_measure(const Vector& theta, double beta, const DistributionSpec& dist,
                            NormMode mode, Eigen::Index n = kDefaultMcSamples,
                            std::uint64_t seed = 0);

// E|psi^T x|
Estimate mean_abs_margin(const Vector& psi, const DistributionSpec& dist,
                         Eigen::Index n = kDefaultMcSamples, std::uint64_t seed = 0);

}  // namespace w2s
