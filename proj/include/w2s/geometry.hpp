#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "w2s/errors.hpp"

namespace w2s {

template <typename Scalar>
constexpr Scalar zero_norm_threshold() {
  return std::max(static_cast<Scalar>(1e-300), std::numeric_limits<Scalar>::min());
}

// SPD covariance with its eigendata and symmetric square roots.
template <typename Scalar_>
class CovarianceModel {
 public:
  using Scalar = Scalar_;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Eigenspace {
    Scalar eigenvalue;
    Matrix basis;  // orthonormal columns
  };

  template <typename Derived>
  explicit CovarianceModel(const Eigen::MatrixBase<Derived>& sigma) {
    if (sigma.rows() == 0 || sigma.rows() != sigma.cols())
      throw UsageError("covariance must be a nonempty square matrix");
    if (!sigma.allFinite()) throw UsageError("covariance has non-finite entries");
    const Scalar scale = sigma.norm();
    if ((sigma - sigma.transpose()).norm() > Scalar(1e-12) * scale)
      throw UsageError("covariance is not symmetric");
    sigma_ = (sigma + sigma.transpose()) / Scalar(2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    eigenvalues_ = es.eigenvalues();
    eigenvectors_ = es.eigenvectors();
    if (!(eigenvalues_(0) > Scalar(0)))
      throw UsageError("covariance is not positive definite");
    identity_ = sigma_.isIdentity(Scalar(0));
    finish();
  }

  static CovarianceModel identity(Eigen::Index dim) {
    if (dim <= 0) throw UsageError("dimension must be positive");
    return CovarianceModel(Matrix::Identity(dim, dim));
  }

  Eigen::Index dim() const { return sigma_.rows(); }
  const Matrix& sigma() const { return sigma_; }
  const Matrix& sqrt_sigma() const { return sqrt_; }
  const Matrix& inv_sqrt_sigma() const { return inv_sqrt_; }
  const Vector& eigenvalues() const { return eigenvalues_; }  // ascending
  const Matrix& eigenvectors() const { return eigenvectors_; }
  Scalar lambda_max() const { return eigenvalues_(dim() - 1); }
  Scalar lambda_min() const { return eigenvalues_(0); }
  const std::vector<Eigenspace>& eigenspaces() const { return spaces_; }
  bool is_identity() const { return identity_; }

  template <typename Derived>
  Vector apply(const Eigen::MatrixBase<Derived>& v) const {
    if (identity_) return v;
    return sigma_ * v;
  }
  template <typename Derived>
  Vector whiten(const Eigen::MatrixBase<Derived>& v) const {
    if (identity_) return v;
    return sqrt_ * v;
  }
  template <typename Derived>
  Vector unwhiten(const Eigen::MatrixBase<Derived>& v) const {
    if (identity_) return v;
    return inv_sqrt_ * v;
  }

 private:
  void finish() {
    const Eigen::Index d = dim();
    const Vector root = eigenvalues_.cwiseSqrt();
    sqrt_ = eigenvectors_ * root.asDiagonal() * eigenvectors_.transpose();
    inv_sqrt_ = eigenvectors_ * root.cwiseInverse().asDiagonal() * eigenvectors_.transpose();
    const Scalar tol = Scalar(1e-9) * lambda_max();
    Eigen::Index start = 0;
    for (Eigen::Index i = 1; i <= d; ++i) {
      if (i == d || eigenvalues_(i) - eigenvalues_(start) > tol) {
        const Eigen::Index k = i - start;
        spaces_.push_back({eigenvalues_.segment(start, k).mean(),
                           eigenvectors_.middleCols(start, k)});
        start = i;
      }
    }
  }

  Matrix sigma_, sqrt_, inv_sqrt_, eigenvectors_;
  Vector eigenvalues_;
  std::vector<Eigenspace> spaces_;
  bool identity_ = false;
};

using Covariance = CovarianceModel<double>;

namespace detail {

template <typename Scalar, typename Derived>
void check_dim(const Eigen::MatrixBase<Derived>& v, const CovarianceModel<Scalar>& cov,
               const char* what) {
  if (v.cols() != 1 || v.rows() != cov.dim())
    throw UsageError(std::string(what) + ": dimension " + std::to_string(v.rows()) +
                     " does not match covariance dimension " + std::to_string(cov.dim()));
}

template <typename Derived>
void check_nonzero(const Eigen::MatrixBase<Derived>& v, const char* what) {
  using Scalar = typename Derived::Scalar;
  if (!(v.norm() >= zero_norm_threshold<Scalar>()))
    throw UsageError(std::string(what) + " must be nonzero");
}

}  // namespace detail

template <typename DU, typename DV>
typename DU::Scalar inner_sigma(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v,
                                const CovarianceModel<typename DU::Scalar>& cov) {
  detail::check_dim(u, cov, "inner_sigma");
  detail::check_dim(v, cov, "inner_sigma");
  if (cov.is_identity()) return u.dot(v);
  return u.dot(cov.sigma() * v);
}

template <typename DU>
typename DU::Scalar norm_sigma(const Eigen::MatrixBase<DU>& u,
                               const CovarianceModel<typename DU::Scalar>& cov) {
  using std::sqrt;
  return sqrt(std::max(inner_sigma(u, u, cov), typename DU::Scalar(0)));
}

template <typename DU, typename DV>
typename DU::Scalar cos_sigma(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v,
                              const CovarianceModel<typename DU::Scalar>& cov) {
  using Scalar = typename DU::Scalar;
  detail::check_nonzero(u, "cos_sigma: u");
  detail::check_nonzero(v, "cos_sigma: v");
  const Scalar c = inner_sigma(u, v, cov) / (norm_sigma(u, cov) * norm_sigma(v, cov));
  return std::clamp(c, Scalar(-1), Scalar(1));
}

// Proj_{anchor-perp}^Sigma v
template <typename DA, typename DV>
typename CovarianceModel<typename DA::Scalar>::Vector proj_orth_sigma(
    const Eigen::MatrixBase<DA>& anchor, const Eigen::MatrixBase<DV>& v,
    const CovarianceModel<typename DA::Scalar>& cov) {
  detail::check_nonzero(anchor, "proj_orth_sigma: anchor");
  detail::check_dim(anchor, cov, "proj_orth_sigma");
  detail::check_dim(v, cov, "proj_orth_sigma");
  const auto sa = cov.apply(anchor);
  return v - (v.dot(sa) / anchor.dot(sa)) * anchor;
}

// Gradient in u of cos_Sigma(u, v).
template <typename DU, typename DV>
typename CovarianceModel<typename DU::Scalar>::Vector cos_grad(
    const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v,
    const CovarianceModel<typename DU::Scalar>& cov) {
  detail::check_nonzero(u, "cos_grad: u");
  detail::check_nonzero(v, "cos_grad: v");
  const auto p = proj_orth_sigma(u, v, cov);
  return cov.apply(p) / (norm_sigma(u, cov) * norm_sigma(v, cov));
}

// Hessian in u of cos_Sigma(u, v).
template <typename DU, typename DV>
typename CovarianceModel<typename DU::Scalar>::Matrix cos_hess(
    const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v,
    const CovarianceModel<typename DU::Scalar>& cov) {
  using Scalar = typename DU::Scalar;
  using Matrix = typename CovarianceModel<Scalar>::Matrix;
  detail::check_nonzero(u, "cos_hess: u");
  detail::check_nonzero(v, "cos_hess: v");
  detail::check_dim(u, cov, "cos_hess");
  detail::check_dim(v, cov, "cos_hess");
  const auto su = cov.apply(u);
  const auto sv = cov.apply(v);
  const Scalar nu = std::sqrt(u.dot(su));
  const Scalar nv = std::sqrt(v.dot(sv));
  const Scalar uv = u.dot(sv);
  const Scalar nu3 = nu * nu * nu;
  Matrix h = (Scalar(3) * uv / (nu3 * nu * nu * nv)) * (su * su.transpose());
  h -= (uv / (nu3 * nv)) * cov.sigma();
  h -= (su * sv.transpose() + sv * su.transpose()) / (nu3 * nv);
  return h;
}

// Lipschitz constant of u -> cos_Sigma(u, v) outside the Euclidean ball of radius r.
template <typename Scalar>
Scalar cos_lipschitz_constant(const CovarianceModel<Scalar>& cov, Scalar r) {
  return std::sqrt(cov.lambda_max() / cov.lambda_min()) / r;
}

// Euclidean conveniences.
template <typename DU, typename DV>
typename DU::Scalar cosine(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DU::Scalar;
  detail::check_nonzero(u, "cosine: u");
  detail::check_nonzero(v, "cosine: v");
  return std::clamp(Scalar(u.dot(v) / (u.norm() * v.norm())), Scalar(-1), Scalar(1));
}

template <typename DA, typename DV>
Eigen::Matrix<typename DA::Scalar, Eigen::Dynamic, 1> proj_orth(const Eigen::MatrixBase<DA>& anchor,
                                                               const Eigen::MatrixBase<DV>& v) {
  detail::check_nonzero(anchor, "proj_orth: anchor");
  return v - (v.dot(anchor) / anchor.squaredNorm()) * anchor;
}

}  // namespace w2s
