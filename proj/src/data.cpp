#include "w2s/data.hpp"

#include <cmath>
#include <numbers>

#include "w2s/rng.hpp"

namespace w2s {

namespace {

constexpr double kSmoothingBandwidth = 0.1;

void draw_marginal(ProductMarginal marginal, RandomStream& rng, double* out, std::size_t n) {
  switch (marginal) {
    case ProductMarginal::StudentT10Standardized: {
      // chi^2 with 10 degrees of freedom is -2 log of a product of five uniforms.
      const double scale = 1.0 / std::sqrt(1.25);
      for (std::size_t i = 0; i < n; ++i) {
        const double z = rng.normal();
        double prod = 1.0;
        for (int k = 0; k < 5; ++k) prod *= rng.uniform();
        const double chi2 = -2.0 * std::log(prod);
        out[i] = scale * z / std::sqrt(chi2 / 10.0);
      }
      break;
    }
    case ProductMarginal::SmoothedUniform: {
      const double half_width = std::sqrt(3.0);
      const double scale =
          1.0 / std::sqrt(1.0 + kSmoothingBandwidth * kSmoothingBandwidth);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = half_width * (2.0 * rng.uniform() - 1.0);
        out[i] = scale * (u + kSmoothingBandwidth * rng.normal());
      }
      break;
    }
  }
}

}  // namespace

std::string to_string(DistKind kind) {
  switch (kind) {
    case DistKind::IsotropicGaussian: return "isotropic-gaussian";
    case DistKind::GaussianWithCovariance: return "gaussian-with-covariance";
    case DistKind::SymmetricProduct: return "symmetric-product";
  }
  return "?";
}

std::string to_string(ProductMarginal marginal) {
  switch (marginal) {
    case ProductMarginal::StudentT10Standardized: return "student-t-nu10-standardized";
    case ProductMarginal::SmoothedUniform: return "smoothed-uniform";
  }
  return "?";
}

DistKind parse_dist_kind(const std::string& s) {
  for (DistKind k : {DistKind::IsotropicGaussian, DistKind::GaussianWithCovariance,
                     DistKind::SymmetricProduct})
    if (s == to_string(k)) return k;
  throw UsageError("unknown distribution kind '" + s + "'");
}

ProductMarginal parse_marginal(const std::string& s) {
  for (ProductMarginal m : {ProductMarginal::StudentT10Standardized, ProductMarginal::SmoothedUniform})
    if (s == to_string(m)) return m;
  throw UsageError("unknown product marginal '" + s + "'");
}

DistributionSpec DistributionSpec::isotropic_gaussian(Eigen::Index dim) {
  return DistributionSpec(DistKind::IsotropicGaussian,
                          std::make_shared<const Covariance>(Covariance::identity(dim)),
                          std::nullopt);
}

DistributionSpec DistributionSpec::gaussian(Covariance cov) {
  return DistributionSpec(DistKind::GaussianWithCovariance,
                          std::make_shared<const Covariance>(std::move(cov)), std::nullopt);
}

DistributionSpec DistributionSpec::symmetric_product(Eigen::Index dim, ProductMarginal marginal) {
  return DistributionSpec(DistKind::SymmetricProduct,
                          std::make_shared<const Covariance>(Covariance::identity(dim)), marginal);
}

std::string DistributionSpec::describe() const {
  std::string s = to_string(kind_) + "(d=" + std::to_string(dim());
  if (marginal_) s += ", " + to_string(*marginal_);
  if (kind_ == DistKind::GaussianWithCovariance)
    s += ", lambda=[" + std::to_string(cov_->lambda_min()) + ", " +
         std::to_string(cov_->lambda_max()) + "]";
  return s + ")";
}

SampleBatch sample(const DistributionSpec& dist, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw UsageError("sample: n must be at least 1");
  RandomStream rng(seed);
  SampleBatch x(n, dist.dim());
  const auto count = static_cast<std::size_t>(x.size());
  switch (dist.kind()) {
    case DistKind::IsotropicGaussian:
    case DistKind::GaussianWithCovariance:
      rng.fill_normal(x.data(), count);
      if (!dist.cov().is_identity()) x = x * dist.cov().sqrt_sigma();
      break;
    case DistKind::SymmetricProduct:
      draw_marginal(*dist.product_marginal(), rng, x.data(), count);
      break;
  }
  return x;
}

void sample_marginal(ProductMarginal marginal, double* out, std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed);
  draw_marginal(marginal, rng, out, n);
}

double marginal_density(ProductMarginal marginal, double t) {
  using std::numbers::pi;
  switch (marginal) {
    case ProductMarginal::StudentT10Standardized: {
      const double s = std::sqrt(1.25);
      const double u = s * t;
      const double norm = std::exp(std::lgamma(5.5) - std::lgamma(5.0)) / std::sqrt(10.0 * pi);
      return s * norm * std::pow(1.0 + u * u / 10.0, -5.5);
    }
    case ProductMarginal::SmoothedUniform: {
      const double h = kSmoothingBandwidth;
      const double s = std::sqrt(1.0 + h * h);
      const double u = s * t;
      const double a = std::sqrt(3.0);
      const double mass = 0.5 * (std::erfc((u - a) / (h * std::numbers::sqrt2)) -
                                 std::erfc((u + a) / (h * std::numbers::sqrt2)));
      return s * mass / (2.0 * a);
    }
  }
  return 0.0;
}

Vector pseudo_label(const SampleBatch& batch, const Vector& teacher) {
  if (batch.cols() != teacher.size())
    throw UsageError("pseudo_label: teacher dimension does not match batch");
  return ((batch * teacher).array() >= 0.0).cast<double>();
}

Vector random_sigma_unit(const Covariance& cov, std::uint64_t seed) {
  RandomStream rng(seed);
  Vector z(cov.dim());
  rng.fill_normal(z);
  return cov.unwhiten(z / z.norm());
}

Vector make_unit_with_cos(const Vector& anchor, double target_cos, const Covariance& cov,
                          std::uint64_t seed) {
  if (!(std::abs(target_cos) <= 1.0)) throw UsageError("make_unit_with_cos: |target_cos| > 1");
  detail::check_dim(anchor, cov, "make_unit_with_cos");
  detail::check_nonzero(anchor, "make_unit_with_cos: anchor");
  const Vector a = anchor / norm_sigma(anchor, cov);
  if (std::abs(target_cos) == 1.0) return target_cos * a;
  if (cov.dim() < 2) throw UsageError("make_unit_with_cos: needs dimension at least 2");
  Vector u;
  RandomStream rng(seed);
  Vector z(cov.dim());
  do {
    rng.fill_normal(z);
    u = proj_orth_sigma(a, cov.unwhiten(z), cov);
  } while (norm_sigma(u, cov) < 1e-8 * z.norm());
  u /= norm_sigma(u, cov);
  Vector w = target_cos * a + std::sqrt(1.0 - target_cos * target_cos) * u;
  return w / norm_sigma(w, cov);
}

double accuracy_to_cos(double accuracy) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0))
    throw UsageError("accuracy_to_cos: accuracy must lie in [0, 1]");
  return std::cos(std::numbers::pi * (1.0 - accuracy));
}

double cos_to_accuracy(double c) {
  if (!(c >= -1.0 && c <= 1.0)) throw UsageError("cos_to_accuracy: cosine must lie in [-1, 1]");
  return 1.0 - std::acos(c) / std::numbers::pi;
}

Covariance random_covariance(Eigen::Index dim, double condition, double lambda_max,
                             std::uint64_t seed) {
  if (dim < 1 || !(condition >= 1.0) || !(lambda_max > 0.0))
    throw UsageError("random_covariance: bad parameters");
  RandomStream rng(seed);
  Matrix g(dim, dim);
  rng.fill_normal(g);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Vector r_diag = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < dim; ++j)
    if (r_diag(j) < 0) q.col(j) *= -1.0;
  Vector lambda(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    double t = rng.uniform();
    if (i == 0) t = 1.0;
    if (i == dim - 1) t = 0.0;
    lambda(i) = lambda_max * std::pow(condition, -t);
  }
  Matrix sigma = q * lambda.asDiagonal() * q.transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return Covariance(sigma);
}

}  // namespace w2s
