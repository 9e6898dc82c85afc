#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "w2s/logistic.hpp"

namespace w2s {

// Fraction of samples with sgn(phi^T x) != sgn(psi^T x), sgn(0) = +1.
Estimate zero_one_loss(const Vector& phi, const Vector& psi, const DistributionSpec& dist,
                       Eigen::Index n, std::uint64_t seed);

// zero_one_loss for several (phi, psi) pairs evaluated on one shared sample stream.
std::vector<Estimate> zero_one_losses(const std::vector<std::pair<Vector, Vector>>& pairs,
                                      const DistributionSpec& dist, Eigen::Index n,
                                      std::uint64_t seed);

// (1/pi) arccos cos_Sigma(phi, psi)
double arccos_loss(const Vector& phi, const Vector& psi, const Covariance& cov);

struct EllipticityConfig {
  int n_directions = 64;
  int n_bins = 40;
  double trim = 0.01;
  // Also run the estimator on a Gaussian with the same covariance.
  bool with_noise_floor = false;
};

struct EllipticityEstimate {
  double epsilon_hat = 0.0;
  std::vector<Vector> subspace_basis;  // Euclidean-orthonormalized
  Eigen::Index n_samples = 0;
  int n_directions = 0;
  int n_bins = 0;
  std::vector<double> per_bin_max;  // max over directions, one entry per bin
  std::optional<double> noise_floor;
};

// Draws n points for a given seed; rows are samples.
using Sampler = std::function<SampleBatch(Eigen::Index n, std::uint64_t seed)>;

EllipticityEstimate estimate_epsilon(const DistributionSpec& dist, const std::vector<Vector>& basis,
                                     Eigen::Index n, const EllipticityConfig& cfg,
                                     std::uint64_t seed);

// Same estimator for an arbitrary sampler whose covariance is cov.
EllipticityEstimate estimate_epsilon(const Sampler& sampler, const Covariance& cov,
                                     const std::vector<Vector>& basis, Eigen::Index n,
                                     const EllipticityConfig& cfg, std::uint64_t seed);

struct TransformInvarianceReport {
  EllipticityEstimate original;     // x along E
  EllipticityEstimate transformed;  // T x along T^{-T} E
  double gap = 0.0;                 // |transformed - original|
};

TransformInvarianceReport transform_invariance_check(const DistributionSpec& dist,
                                                     const std::vector<Vector>& basis,
                                                     const Matrix& transform, Eigen::Index n,
                                                     const EllipticityConfig& cfg,
                                                     std::uint64_t seed);

}  // namespace w2s
