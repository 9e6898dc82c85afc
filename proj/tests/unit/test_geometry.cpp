#include <doctest.h>

#include <numbers>

#include "support.hpp"
#include "w2s/geometry.hpp"

using namespace w2s;
using namespace testing_support;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd fd_grad(const VectorXd& u, const VectorXd& v, const Covariance& cov, double h) {
  VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    VectorXd up = u, um = u;
    up(i) += h;
    um(i) -= h;
    g(i) = (cos_sigma(up, v, cov) - cos_sigma(um, v, cov)) / (2 * h);
  }
  return g;
}

MatrixXd fd_hess(const VectorXd& u, const VectorXd& v, const Covariance& cov, double h) {
  MatrixXd H(u.size(), u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    VectorXd up = u, um = u;
    up(i) += h;
    um(i) -= h;
    H.col(i) = (cos_grad(up, v, cov) - cos_grad(um, v, cov)) / (2 * h);
  }
  return H;
}

}  // namespace

TEST_CASE("covariance model invariants") {
  std::mt19937_64 gen(11);
  for (Eigen::Index d : {1, 2, 5, 40}) {
    const MatrixXd s = random_spd(gen, d);
    const Covariance cov(s);
    CHECK(cov.dim() == d);
    CHECK(rel_err(cov.sqrt_sigma() * cov.sqrt_sigma(), s) < 1e-10);
    CHECK(rel_err(cov.inv_sqrt_sigma() * cov.sqrt_sigma(), MatrixXd::Identity(d, d)) < 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    CHECK(cov.lambda_max() == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-12));
    CHECK(cov.lambda_min() == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-12));
    MatrixXd all(d, 0);
    for (const auto& e : cov.eigenspaces()) {
      MatrixXd next(d, all.cols() + e.basis.cols());
      next << all, e.basis;
      all = next;
    }
    CHECK(all.cols() == d);
    CHECK(rel_err(all.transpose() * all, MatrixXd::Identity(d, d)) < 1e-12);
    CHECK_FALSE(cov.is_identity());
  }
}

TEST_CASE("eigenspace grouping") {
  CHECK(Covariance::identity(4).eigenspaces().size() == 1);
  CHECK(Covariance::identity(4).is_identity());
  const Covariance c(VectorXd((VectorXd(3) << 2.0, 2.0 + 1e-12, 1.0).finished()).asDiagonal().toDenseMatrix());
  REQUIRE(c.eigenspaces().size() == 2);
  CHECK(c.eigenspaces()[0].basis.cols() == 1);
  CHECK(c.eigenspaces()[1].basis.cols() == 2);
  CHECK(c.eigenspaces()[1].eigenvalue == doctest::Approx(2.0));
}

TEST_CASE("covariance rejects bad input") {
  MatrixXd asym(2, 2);
  asym << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(Covariance{asym}, UsageError);
  MatrixXd indef(2, 2);
  indef << 1, 2, 2, 1;
  CHECK_THROWS_AS(Covariance{indef}, UsageError);
  CHECK_THROWS_AS(Covariance{MatrixXd(2, 3)}, UsageError);
  MatrixXd nan = MatrixXd::Identity(2, 2);
  nan(0, 1) = nan(1, 0) = std::nan("");
  CHECK_THROWS_AS(Covariance{nan}, UsageError);
}

TEST_CASE("inner product examples") {
  const VectorXd e1 = VectorXd::Unit(2, 0), e2 = VectorXd::Unit(2, 1);
  CHECK(inner_sigma(e1, e1, Covariance::identity(2)) == 1.0);
  const Covariance diag(VectorXd((VectorXd(2) << 2.0, 1.0).finished()).asDiagonal().toDenseMatrix());
  CHECK(inner_sigma(e1, e1, diag) == doctest::Approx(2.0));
  CHECK(cos_sigma(e1, e2, diag) == doctest::Approx(0.0));

  MatrixXd s(2, 2);
  s << 2, 1, 1, 2;
  CHECK(cos_sigma(e1, e2, Covariance(s)) == doctest::Approx(0.5).epsilon(1e-14));

  std::mt19937_64 gen(3);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd m = random_spd(gen, 6);
    const Covariance cov(m);
    const VectorXd u = gaussian_vector(gen, 6), v = gaussian_vector(gen, 6);
    const double oracle = (u.transpose() * m * v)(0, 0);
    CHECK(inner_sigma(u, v, cov) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(inner_sigma(u, v, cov) == doctest::Approx(inner_sigma(v, u, cov)).epsilon(1e-12));
    CHECK(cos_sigma(u, u, cov) == doctest::Approx(1.0));
    const double red = cosine(cov.sqrt_sigma() * u, cov.sqrt_sigma() * v);
    CHECK(std::abs(cos_sigma(u, v, cov) - red) < 1e-10);
  }
}

TEST_CASE("usage errors") {
  const Covariance cov = Covariance::identity(3);
  const VectorXd z = VectorXd::Zero(3), u = VectorXd::Ones(3);
  CHECK_THROWS_AS(inner_sigma(VectorXd::Ones(2), u, cov), UsageError);
  CHECK_THROWS_AS(cos_sigma(z, u, cov), UsageError);
  CHECK_THROWS_AS(proj_orth_sigma(z, u, cov), UsageError);
  CHECK_THROWS_AS(cos_grad(u, z, cov), UsageError);
  CHECK_THROWS_AS(cos_hess(z, u, cov), UsageError);
  CHECK_THROWS_AS(cos_sigma(VectorXd::Constant(3, 1e-301), u, cov), UsageError);
}

TEST_CASE("projection") {
  std::mt19937_64 gen(5);
  const Covariance cov(random_spd(gen, 7));
  for (int t = 0; t < 20; ++t) {
    const VectorXd a = gaussian_vector(gen, 7), v = gaussian_vector(gen, 7);
    CHECK(proj_orth_sigma(a, a, cov).norm() < 1e-12 * a.norm());
    const VectorXd p = proj_orth_sigma(a, v, cov);
    CHECK(std::abs(inner_sigma(a, p, cov)) < 1e-10 * norm_sigma(a, cov) * norm_sigma(v, cov));
    CHECK((proj_orth_sigma(a, p, cov) - p).norm() < 1e-12 * v.norm());
  }
}

TEST_CASE("cosine gradient and Hessian examples") {
  const Covariance id = Covariance::identity(2);
  const VectorXd e1 = VectorXd::Unit(2, 0), e2 = VectorXd::Unit(2, 1);
  CHECK(cos_grad(e1, e1, id).norm() < 1e-15);
  CHECK((cos_grad(e1, e2, id) - e2).norm() < 1e-15);
  MatrixXd expect(2, 2);
  expect << 0, 0, 0, -1;
  CHECK((cos_hess(e1, e1, id) - expect).norm() < 1e-14);
  CHECK((fd_hess(e1, e1, id, 1e-5) - expect).norm() < 1e-8);
}

TEST_CASE("cosine calculus against finite differences") {
  std::mt19937_64 gen(17);
  for (Eigen::Index d : {2, 5, 100}) {
    for (int t = 0; t < 100; ++t) {
      const Covariance cov(random_spd(gen, d));
      const VectorXd u = gaussian_vector(gen, d), v = gaussian_vector(gen, d);
      const VectorXd g = cos_grad(u, v, cov);
      CHECK(rel_err(fd_grad(u, v, cov, 1e-5), g) < 1e-6);
      if (d <= 5 || t < 10) {
        const MatrixXd H = cos_hess(u, v, cov);
        CHECK(rel_err(fd_hess(u, v, cov, 1e-5), H) < 1e-4);
        CHECK((H - H.transpose()).norm() < 1e-12 * H.norm());
        const double top = Eigen::JacobiSVD<MatrixXd>(H).singularValues()(0);
        const double un = norm_sigma(u, cov);
        CHECK(top <= 2.0 / std::sqrt(3.0) * cov.lambda_max() / (un * un) * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("Lipschitz bound on random triples") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index d = 2 + t % 6;
    const Covariance cov(random_spd(gen, d));
    const double r = 0.5 + unif(gen);
    VectorXd u = gaussian_vector(gen, d), w = u + 0.3 * gaussian_vector(gen, d);
    u *= (r + unif(gen)) / u.norm();
    w *= (r + unif(gen)) / w.norm();
    const VectorXd v = gaussian_vector(gen, d);
    const double lhs = std::abs(cos_sigma(u, v, cov) - cos_sigma(w, v, cov));
    CHECK(lhs <= cos_lipschitz_constant(cov, r) * (u - w).norm() + 1e-14);
  }
}

TEST_CASE("single precision instantiation") {
  Eigen::MatrixXf s(2, 2);
  s << 2, 1, 1, 2;
  const CovarianceModel<float> cov(s);
  const Eigen::VectorXf e1 = Eigen::VectorXf::Unit(2, 0), e2 = Eigen::VectorXf::Unit(2, 1);
  CHECK(cos_sigma(e1, e2, cov) == doctest::Approx(0.5f).epsilon(1e-6));
  const Eigen::VectorXf g = cos_grad(e1, e2, cov);
  CHECK(g.allFinite());
  CHECK(std::abs(inner_sigma(e1, proj_orth_sigma(e1, e2, cov), cov)) < 1e-6f);
}
