#include "w2s/logistic.hpp"

#include <algorithm>
#include <numbers>

#include "w2s/rng.hpp"

namespace w2s {

namespace {

constexpr double kInvSqrt2Pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
constexpr double kUnitTol = 1e-10;

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& z) {
  // 1/(1+e^{-z}) saturates cleanly at both ends in IEEE arithmetic.
  return (1.0 + (-z).exp()).inverse();
}

void check_batch(const Vector& theta, const SampleBatch& batch, const Vector& labels) {
  if (batch.rows() == 0) throw UsageError("empty batch");
  if (batch.cols() != theta.size()) throw UsageError("theta dimension does not match batch");
  if (labels.size() != batch.rows()) throw UsageError("label count does not match batch");
}

Eigen::Index batch_count(Eigen::Index n) {
  if (n < 2) throw UsageError("Monte Carlo estimates need n >= 2");
  return std::min(kMcBatches, n);
}

// Batch means of a per-sample scalar statistic of w^T x.
template <typename F>
Estimate projected_mean(const Vector& w, const DistributionSpec& dist, Eigen::Index n,
                        std::uint64_t seed, F&& stat) {
  const Eigen::Index nb = batch_count(n);
  Eigen::ArrayXd means(nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index m = n / nb + (b < n % nb ? 1 : 0);
    const SampleBatch x = sample(dist, m, derive_seed(seed, "projected-mean", b));
    const Eigen::ArrayXd z = (x * w).array();
    means(b) = stat(z).mean();
  }
  const double mean = means.mean();
  const double var = (means - mean).square().sum() / static_cast<double>(nb - 1);
  return {mean, std::sqrt(var / static_cast<double>(nb))};
}

}  // namespace

void ProblemInstance::validate() const {
  const Covariance& c = cov();
  if (!(beta > 0.0)) throw UsageError("instance: beta must be positive");
  detail::check_dim(theta_star, c, "instance theta_star");
  detail::check_dim(psi, c, "instance psi");
  detail::check_dim(theta0, c, "instance theta0");
  if (std::abs(norm_sigma(theta_star, c) - 1.0) > kUnitTol)
    throw UsageError("instance: theta_star must have unit Sigma-norm");
  if (std::abs(norm_sigma(psi, c) - 1.0) > kUnitTol)
    throw UsageError("instance: psi must have unit Sigma-norm");
  detail::check_nonzero(theta0, "instance theta0");
  if (!theta_star.allFinite() || !psi.allFinite() || !theta0.allFinite())
    throw UsageError("instance: non-finite entries");
}

void ProblemInstance::validate_theorem_mode() const {
  validate();
  const Vector s_star = cov().apply(theta_star);
  const double ip1 = s_star.dot(theta0);
  if (ip1 < 0.0)
    throw DiagnosticError("<theta*, theta0>_Sigma >= 0",
                          "theorem mode requires <theta*, theta0>_Sigma >= 0, got " +
                              std::to_string(ip1));
  const double ip2 = s_star.dot(cov().apply(theta0));
  if (ip2 < 0.0)
    throw DiagnosticError("<theta*, theta0>_{Sigma^2} >= 0",
                          "theorem mode requires <theta*, theta0>_{Sigma^2} >= 0, got " +
                              std::to_string(ip2));
}

Vector minibatch_gradient(const Vector& theta, const SampleBatch& batch, const Vector& labels,
                          double beta) {
  check_batch(theta, batch, labels);
  const Eigen::ArrayXd z = beta * (batch * theta).array();
  const Vector c = beta * (sigmoid(z) - labels.array()).matrix();
  return batch.transpose() * c / static_cast<double>(batch.rows());
}

double batch_loss(const Vector& theta, const SampleBatch& batch, const Vector& labels,
                  double beta) {
  check_batch(theta, batch, labels);
  const Eigen::ArrayXd z = beta * (batch * theta).array();
  // softplus(z) - y z
  const Eigen::ArrayXd softplus = z.max(0.0) + (-z.abs()).exp().log1p();
  return (softplus - labels.array() * z).mean();
}

Vector gaussian_population_gradient(const Vector& theta, const Vector& psi, double beta,
                                    const Covariance& cov) {
  detail::check_dim(theta, cov, "population_gradient theta");
  detail::check_dim(psi, cov, "population_gradient psi");
  detail::check_nonzero(psi, "population_gradient psi");
  const Vector s_theta = cov.apply(theta);
  const Vector s_psi = cov.apply(psi);
  const double s2 = theta.dot(s_theta);
  const double s = std::sqrt(std::max(s2, 0.0));
  // q(s)/s^2 -> beta/4 as s -> 0.
  const double ratio = s < 1e-150 ? beta / 4.0 : gaussian_logit_moment(s, beta) / s2;
  return beta * (ratio * s_theta - (kInvSqrt2Pi / std::sqrt(psi.dot(s_psi))) * s_psi);
}

GradientEstimate population_gradient(const Vector& theta, const Vector& psi, double beta,
                                     const DistributionSpec& dist, GradientMethod method,
                                     Eigen::Index n, std::uint64_t seed) {
  GradientEstimate out;
  if (method == GradientMethod::SemiAnalytic) {
    if (!dist.is_gaussian())
      throw UsageError("semi-analytic population gradient requires a Gaussian distribution");
    out.mean = gaussian_population_gradient(theta, psi, beta, dist.cov());
    out.std_error = Vector::Zero(theta.size());
    return out;
  }
  detail::check_dim(theta, dist.cov(), "population_gradient theta");
  detail::check_dim(psi, dist.cov(), "population_gradient psi");
  const Eigen::Index nb = batch_count(n);
  out.batch_means.resize(theta.size(), nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index m = n / nb + (b < n % nb ? 1 : 0);
    const SampleBatch x = sample(dist, m, derive_seed(seed, "population-gradient", b));
    out.batch_means.col(b) = minibatch_gradient(theta, x, pseudo_label(x, psi), beta);
  }
  out.mean = out.batch_means.rowwise().mean();
  const Matrix centered = out.batch_means.colwise() - out.mean;
  out.std_error = (centered.rowwise().squaredNorm() / static_cast<double>(nb - 1) /
                   static_cast<double>(nb))
                      .cwiseSqrt();
  out.n_samples = n;
  return out;
}

NormMode default_norm_mode(const DistributionSpec& dist) {
  return dist.cov().is_identity() ? NormMode::Euclidean : NormMode::Sigma;
}

Estimate confidence_measure(const Vector& theta, double beta, const DistributionSpec& dist,
                            NormMode mode, Eigen::Index n, std::uint64_t seed) {
  detail::check_dim(theta, dist.cov(), "confidence_measure");
  detail::check_nonzero(theta, "confidence_measure theta");
  if (!(beta > 0.0)) throw UsageError("confidence_measure: beta must be positive");
  const double norm = mode == NormMode::Euclidean ? theta.norm() : norm_sigma(theta, dist.cov());
  if (dist.is_gaussian())
    return {gaussian_logit_moment(norm_sigma(theta, dist.cov()), beta) / norm, 0.0};
  Estimate e = projected_mean(theta, dist, n, seed, [beta](const Eigen::ArrayXd& z) {
    return Eigen::ArrayXd(sigmoid(beta * z) * z);
  });
  e.value /= norm;
  e.std_error /= norm;
  return e;
}

Estimate mean_abs_margin(const Vector& psi, const DistributionSpec& dist, Eigen::Index n,
                         std::uint64_t seed) {
  detail::check_dim(psi, dist.cov(), "mean_abs_margin");
  detail::check_nonzero(psi, "mean_abs_margin psi");
  if (dist.is_gaussian())
    return {norm_sigma(psi, dist.cov()) * std::sqrt(2.0 / std::numbers::pi), 0.0};
  return projected_mean(psi, dist, n, seed,
                        [](const Eigen::ArrayXd& z) { return Eigen::ArrayXd(z.abs()); });
}

}  // namespace w2s
