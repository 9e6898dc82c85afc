#include "w2s/ellipticity.hpp"

#include <algorithm>
#include <numbers>

#include "w2s/rng.hpp"

namespace w2s {

namespace {

constexpr Eigen::Index kChunk = 100'000;
constexpr Eigen::Index kEdgeSample = 20'000;

Estimate binomial(Eigen::Index mismatches, Eigen::Index n) {
  const double p = static_cast<double>(mismatches) / static_cast<double>(n);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

Matrix orthonormal_basis(const std::vector<Vector>& basis, Eigen::Index dim) {
  if (basis.empty()) throw UsageError("estimate_epsilon: empty basis");
  Matrix b(dim, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) {
    if (basis[j].size() != dim) throw UsageError("estimate_epsilon: basis dimension mismatch");
    b.col(static_cast<Eigen::Index>(j)) = basis[j];
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(b);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) throw UsageError("estimate_epsilon: basis spans the zero subspace");
  const Matrix q = qr.householderQ();
  return q.leftCols(rank);
}

Matrix directions(const Matrix& e, int n_directions, std::uint64_t seed) {
  const Eigen::Index k = e.cols();
  if (k == 1) return e;
  Matrix v(e.rows(), n_directions);
  if (k == 2) {
    for (int j = 0; j < n_directions; ++j) {
      const double a = std::numbers::pi * j / n_directions;
      v.col(j) = std::cos(a) * e.col(0) + std::sin(a) * e.col(1);
    }
    return v;
  }
  RandomStream rng(derive_seed(seed, "epsilon-directions"));
  Vector c(k);
  for (int j = 0; j < n_directions; ++j) {
    rng.fill_normal(c);
    v.col(j) = e * (c / c.norm());
  }
  return v;
}

}  // namespace

Estimate zero_one_loss(const Vector& phi, const Vector& psi, const DistributionSpec& dist,
                       Eigen::Index n, std::uint64_t seed) {
  return zero_one_losses({{phi, psi}}, dist, n, seed).front();
}

std::vector<Estimate> zero_one_losses(const std::vector<std::pair<Vector, Vector>>& pairs,
                                      const DistributionSpec& dist, Eigen::Index n,
                                      std::uint64_t seed) {
  if (n < 1) throw UsageError("zero_one_loss: n must be at least 1");
  const auto p = static_cast<Eigen::Index>(pairs.size());
  Matrix w(dist.dim(), 2 * p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& [phi, psi] = pairs[static_cast<std::size_t>(j)];
    detail::check_dim(phi, dist.cov(), "zero_one_loss phi");
    detail::check_dim(psi, dist.cov(), "zero_one_loss psi");
    detail::check_nonzero(phi, "zero_one_loss phi");
    detail::check_nonzero(psi, "zero_one_loss psi");
    w.col(2 * j) = phi;
    w.col(2 * j + 1) = psi;
  }
  std::vector<Eigen::Index> mismatches(pairs.size(), 0);
  for (Eigen::Index start = 0, chunk = 0; start < n; start += kChunk, ++chunk) {
    const Eigen::Index m = std::min(kChunk, n - start);
    const SampleBatch x = sample(dist, m, derive_seed(seed, "zero-one", chunk));
    const Matrix z = x * w;
    for (Eigen::Index j = 0; j < p; ++j)
      mismatches[static_cast<std::size_t>(j)] +=
          ((z.col(2 * j).array() >= 0.0) != (z.col(2 * j + 1).array() >= 0.0)).count();
  }
  std::vector<Estimate> out;
  out.reserve(pairs.size());
  for (Eigen::Index c : mismatches) out.push_back(binomial(c, n));
  return out;
}

double arccos_loss(const Vector& phi, const Vector& psi, const Covariance& cov) {
  return std::acos(cos_sigma(phi, psi, cov)) / std::numbers::pi;
}

EllipticityEstimate estimate_epsilon(const Sampler& sampler, const Covariance& cov,
                                     const std::vector<Vector>& basis, Eigen::Index n,
                                     const EllipticityConfig& cfg, std::uint64_t seed) {
  if (cfg.n_bins < 1 || cfg.n_directions < 1) throw UsageError("estimate_epsilon: bad config");
  if (!(cfg.trim >= 0.0 && cfg.trim < 1.0)) throw UsageError("estimate_epsilon: trim in [0, 1)");
  if (n < static_cast<Eigen::Index>(cfg.n_bins) * 100)
    throw UsageError("estimate_epsilon: need at least 100 samples per bin");
  const Matrix e = orthonormal_basis(basis, cov.dim());
  const Matrix v = directions(e, cfg.n_directions, seed);
  const int nb = cfg.n_bins;

  EllipticityEstimate out;
  for (Eigen::Index j = 0; j < e.cols(); ++j) out.subspace_basis.push_back(e.col(j));
  out.n_samples = n;
  out.n_directions = static_cast<int>(v.cols());
  out.n_bins = nb;
  out.per_bin_max.assign(static_cast<std::size_t>(nb), 0.0);

  const SampleBatch x = sampler(n, derive_seed(seed, "epsilon-sample"));
  const Eigen::Index n_edge = std::min<Eigen::Index>(n, kEdgeSample);
  std::vector<double> edges(static_cast<std::size_t>(nb) + 1);
  std::vector<double> head(static_cast<std::size_t>(n_edge));
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const Vector t = x * v.col(j);
    // Bin edges are quantiles of the first n_edge projections.
    std::copy_n(t.data(), n_edge, head.begin());
    std::sort(head.begin(), head.end());
    for (int b = 0; b <= nb; ++b) {
      const double p = 0.5 * cfg.trim + (1.0 - cfg.trim) * b / nb;
      const auto idx = std::min<Eigen::Index>(n_edge - 1, static_cast<Eigen::Index>(p * (n_edge - 1) + 0.5));
      edges[static_cast<std::size_t>(b)] = head[static_cast<std::size_t>(idx)];
    }
    Matrix sums = Matrix::Zero(cov.dim(), nb);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(nb), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = t(i);
      if (ti < edges.front() || ti >= edges.back()) continue;
      const auto b = static_cast<Eigen::Index>(
          std::upper_bound(edges.begin(), edges.end(), ti) - edges.begin() - 1);
      sums.col(b) += x.row(i).transpose();
      ++counts[static_cast<std::size_t>(b)];
    }
    const Vector w = cov.whiten(v.col(j));
    const Vector w_unit = w / w.norm();
    for (int b = 0; b < nb; ++b) {
      const auto c = counts[static_cast<std::size_t>(b)];
      if (c == 0) continue;
      const Vector r = cov.unwhiten(sums.col(b) / static_cast<double>(c));
      const double score = (r - r.dot(w_unit) * w_unit).norm();
      auto& slot = out.per_bin_max[static_cast<std::size_t>(b)];
      slot = std::max(slot, score);
    }
  }
  out.epsilon_hat = *std::max_element(out.per_bin_max.begin(), out.per_bin_max.end());
  return out;
}

EllipticityEstimate estimate_epsilon(const DistributionSpec& dist, const std::vector<Vector>& basis,
                                     Eigen::Index n, const EllipticityConfig& cfg,
                                     std::uint64_t seed) {
  const Sampler sampler = [&dist](Eigen::Index m, std::uint64_t s) { return sample(dist, m, s); };
  EllipticityEstimate out = estimate_epsilon(sampler, dist.cov(), basis, n, cfg, seed);
  if (cfg.with_noise_floor) {
    const DistributionSpec gauss = dist.cov().is_identity()
                                       ? DistributionSpec::isotropic_gaussian(dist.dim())
                                       : DistributionSpec::gaussian(dist.cov());
    EllipticityConfig plain = cfg;
    plain.with_noise_floor = false;
    out.noise_floor =
        estimate_epsilon(gauss, basis, n, plain, derive_seed(seed, "noise-floor")).epsilon_hat;
  }
  return out;
}

TransformInvarianceReport transform_invariance_check(const DistributionSpec& dist,
                                                     const std::vector<Vector>& basis,
                                                     const Matrix& transform, Eigen::Index n,
                                                     const EllipticityConfig& cfg,
                                                     std::uint64_t seed) {
  const Eigen::Index d = dist.dim();
  if (transform.rows() != d || transform.cols() != d)
    throw UsageError("transform_invariance_check: transform must be d x d");
  Eigen::FullPivLU<Matrix> lu(transform);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw UsageError("transform_invariance_check: transform is singular");
  const Matrix inv_t = lu.inverse().transpose();

  EllipticityConfig plain = cfg;
  plain.with_noise_floor = false;
  TransformInvarianceReport rep;
  rep.original = estimate_epsilon(dist, basis, n, plain, seed);

  const Matrix tt = transform.transpose();
  const Sampler mapped = [&dist, tt](Eigen::Index m, std::uint64_t s) {
    return SampleBatch(sample(dist, m, s) * tt);
  };
  Matrix sigma_t = transform * dist.cov().sigma() * transform.transpose();
  sigma_t = 0.5 * (sigma_t + sigma_t.transpose()).eval();
  const Covariance cov_t(sigma_t);
  std::vector<Vector> basis_t;
  for (const Vector& b : basis) basis_t.push_back(inv_t * b);
  rep.transformed = estimate_epsilon(mapped, cov_t, basis_t, n, plain, seed);
  rep.gap = std::abs(rep.transformed.epsilon_hat - rep.original.epsilon_hat);
  return rep;
}

}  // namespace w2s
