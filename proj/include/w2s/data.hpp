#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "w2s/geometry.hpp"

namespace w2s {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One sample per row; row i is x_i.
using SampleBatch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class DistKind { IsotropicGaussian, GaussianWithCovariance, SymmetricProduct };
enum class ProductMarginal { StudentT10Standardized, SmoothedUniform };

std::string to_string(DistKind kind);
std::string to_string(ProductMarginal marginal);
DistKind parse_dist_kind(const std::string& s);
ProductMarginal parse_marginal(const std::string& s);

class DistributionSpec {
 public:
  static DistributionSpec isotropic_gaussian(Eigen::Index dim);
  static DistributionSpec gaussian(Covariance cov);
  static DistributionSpec symmetric_product(Eigen::Index dim, ProductMarginal marginal);

  DistKind kind() const { return kind_; }
  Eigen::Index dim() const { return cov_->dim(); }
  const Covariance& cov() const { return *cov_; }
  std::optional<ProductMarginal> product_marginal() const { return marginal_; }
  bool is_gaussian() const { return kind_ != DistKind::SymmetricProduct; }
  std::string describe() const;

 private:
  DistributionSpec(DistKind kind, std::shared_ptr<const Covariance> cov,
                   std::optional<ProductMarginal> marginal)
      : kind_(kind), cov_(std::move(cov)), marginal_(marginal) {}

  DistKind kind_;
  std::shared_ptr<const Covariance> cov_;
  std::optional<ProductMarginal> marginal_;
};

// n iid draws; rows are prefix-stable in n for a fixed seed.
SampleBatch sample(const DistributionSpec& dist, Eigen::Index n, std::uint64_t seed);

// Draws from one coordinate law of a symmetric-product distribution.
void sample_marginal(ProductMarginal marginal, double* out, std::size_t n, std::uint64_t seed);
// Density of the coordinate law (used by numerical-integration oracles).
double marginal_density(ProductMarginal marginal, double t);

// y_i = 1(teacher^T x_i >= 0)
Vector pseudo_label(const SampleBatch& batch, const Vector& teacher);

// Unit Sigma-norm w with cos_Sigma(w, anchor) = target_cos; the component
// Sigma-orthogonal to anchor is uniform on its sphere.
Vector make_unit_with_cos(const Vector& anchor, double target_cos, const Covariance& cov,
                          std::uint64_t seed);

// Uniform direction on the Sigma-unit sphere (whitened coordinates uniform).
Vector random_sigma_unit(const Covariance& cov, std::uint64_t seed);

double accuracy_to_cos(double accuracy);
double cos_to_accuracy(double c);

// Random SPD matrix with eigenvalues log-uniform on [lambda_max / condition, lambda_max]
// in a Haar-random eigenbasis; extreme eigenvalues are attained exactly.
Covariance random_covariance(Eigen::Index dim, double condition, double lambda_max,
                             std::uint64_t seed);

}  // namespace w2s
