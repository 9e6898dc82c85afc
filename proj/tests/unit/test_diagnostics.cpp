#include <doctest.h>

#include <numbers>

#include "support.hpp"
#include "w2s/diagnostics.hpp"
#include "w2s/rng.hpp"

using namespace w2s;
using testing_support::gaussian_vector;

namespace {

double simpson_logit_moment(double s, double beta) {
  const int n = 200'000;
  const double h = 24.0 / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = -12.0 + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * sigma_beta(s * z, beta) * s * z * std::exp(-0.5 * z * z);
  }
  return acc * h / 3.0 / std::sqrt(2 * std::numbers::pi);
}

ProblemInstance make_instance(const DistributionSpec& dist, double c_teacher, double c_student,
                              double norm, std::uint64_t seed) {
  ProblemInstance inst;
  inst.dist = dist;
  inst.theta_star = random_sigma_unit(dist.cov(), seed);
  inst.psi = make_unit_with_cos(inst.theta_star, c_teacher, dist.cov(), seed + 1);
  const Vector u = make_unit_with_cos(inst.theta_star, c_student, dist.cov(), seed + 2);
  inst.theta0 = norm * u / u.norm();
  return inst;
}

}  // namespace

TEST_CASE("isotropic rho against a direct evaluation") {
  const auto dist = DistributionSpec::isotropic_gaussian(10);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ProblemInstance inst = make_instance(dist, 0.6, 0.7, 0.5 + s, 10 * s);
    const double eps = 0.01 * static_cast<double>(s);
    const RhoReport r = rho_report(inst, eps);
    const Vector& t0 = inst.theta0;
    const Vector& ts = inst.theta_star;
    const double n0 = t0.norm();
    const double m = simpson_logit_moment(n0, 1.0) / n0;
    const double e = std::sqrt(2 / std::numbers::pi);
    const double c = t0.dot(ts) / n0;
    const Vector p = t0 - t0.dot(ts) * ts;
    const double cpp = p.dot(inst.psi) / (p.norm() * inst.psi.norm());
    const double rl = e / 2 * ts.dot(inst.psi) - m * c - 2 * eps;
    const double rv = m * p.squaredNorm() / (n0 * n0) - e / 2 * std::abs(cpp) - 2 * eps;
    CHECK(r.mode == RhoMode::Isotropic);
    CHECK(r.m == doctest::Approx(m).epsilon(1e-9));
    CHECK(r.rho_l == doctest::Approx(rl).epsilon(1e-9));
    CHECK(r.rho_v == doctest::Approx(rv).epsilon(1e-9));
    CHECK(r.rho == doctest::Approx((1 - c * c) * rl + c * rv).epsilon(1e-9));
    CHECK(r.rho >= r.cancellation_lower_bound - 1e-12);
    CHECK(r.rho_std_error == 0.0);
  }
}

TEST_CASE("general rho against dense linear algebra") {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 6; ++t) {
    const Covariance cov(testing_support::random_spd(gen, 5));
    const auto dist = DistributionSpec::gaussian(cov);
    ProblemInstance inst;
    try {
      inst = random_valid_instance(dist, 1.0, 100 + t);
    } catch (const NumericalError&) {
      continue;
    }
    const RhoReport r = rho_report(inst, 0.02);
    const Matrix& S = cov.sigma();
    auto ip = [&](const Vector& a, const Vector& b) { return a.dot(S * b); };
    auto nrm = [&](const Vector& a) { return std::sqrt(ip(a, a)); };
    const Vector& ts = inst.theta_star;
    const Vector t0 = inst.theta0 / nrm(inst.theta0);
    const double c = ip(ts, t0);
    const Vector p = t0 - c * ts;
    const double lmax = cov.lambda_max(), lmin = cov.lambda_min();
    const double s0 = nrm(inst.theta0);
    const double m = simpson_logit_moment(s0, 1.0) / s0;
    const double e = std::sqrt(2 / std::numbers::pi);
    const Vector sts = S * ts, sp = S * p;
    const double rl = lmin / 2 * e * ip(sts, inst.psi) / nrm(sts) - m * ip(sts, t0) - 2 * lmax * 0.02;
    const double rv = m * ip(sp, t0) - lmax / 2 * e * std::abs(ip(sp, inst.psi) / nrm(sp)) - 2 * lmax * 0.02;
    CHECK(r.mode == RhoMode::General);
    CHECK(r.norm_mode == NormMode::Sigma);
    CHECK(r.rho_l == doctest::Approx(rl).epsilon(1e-8));
    CHECK(r.rho_v == doctest::Approx(rv).epsilon(1e-8));
    CHECK(r.rho == doctest::Approx((1 - c * c) * rl + c * rv).epsilon(1e-8));
  }
}

TEST_CASE("weighted cancellation bound holds for any spectrum") {
  int checked = 0;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const double lmax = s % 3 == 0 ? 1.0 : 6.0;
    const auto dist = DistributionSpec::gaussian(random_covariance(4, 10.0, lmax, s));
    const ProblemInstance inst = make_instance(dist, 0.7, 0.3 + 0.01 * static_cast<double>(s), 1.5, 1000 + s);
    RhoReport r;
    try {
      r = rho_report(inst, 0.0);
    } catch (const DiagnosticError&) {
      continue;
    }
    ++checked;
    CHECK(r.rho >= r.cancellation_lower_bound - 1e-12);
    if (lmax <= 1.0) CHECK(r.rho >= r.ill_conditioned_unweighted - 1e-12);
  }
  CHECK(checked > 20);
}

TEST_CASE("Monte Carlo rho carries an error bar") {
  const auto dist = DistributionSpec::symmetric_product(6, ProductMarginal::SmoothedUniform);
  const ProblemInstance inst = make_instance(dist, 0.8, 0.5, 1.0, 3);
  RhoOptions o;
  o.mc_samples = 200'000;
  o.seed = 9;
  const RhoReport r = rho_report(inst, 0.05, o);
  CHECK(r.rho_std_error > 0.0);
  CHECK(r.rho_std_error < 0.01);
  CHECK(r.epsilon_used == 0.05);
  CHECK_THROWS_AS(rho_report(inst, -1.0), UsageError);
}

TEST_CASE("theorem schedule") {
  const auto dist = DistributionSpec::isotropic_gaussian(3);
  const ProblemInstance inst = make_instance(dist, 0.95, 0.3, 1.0, 42);
  const RhoReport r = rho_report(inst, 0.0);
  REQUIRE(r.rho > 0);
  const Schedule s = theorem_schedule(inst, 0.0, NormMode::Euclidean);

  const double n0 = inst.theta0.norm();
  const double G = gaussian_population_gradient(inst.theta0, inst.psi, 1.0, dist.cov()).norm();
  const double gamma = 1.0 / 5.0;
  const double K = 2 / std::sqrt(3.0) + 0.25;
  const double L = std::log(gamma * n0 / G + 1);
  const double tau1 = 4 * L;
  const double tau2 = r.rho * gamma * gamma * n0 / (K * std::pow(G + gamma * n0, 2));
  const double alpha = std::min(2 * r.rho / n0 * L, r.rho * r.rho * gamma * gamma / (2 * K * std::pow(G + gamma * n0, 2)));
  const double delta = gamma * n0 * alpha / 8;
  CHECK(s.gamma == doctest::Approx(gamma));
  CHECK(s.curvature_K == doctest::Approx(K));
  CHECK(s.grad_norm_theta0 == doctest::Approx(G));
  CHECK(s.tau1 == doctest::Approx(tau1));
  CHECK(s.tau2 == doctest::Approx(tau2));
  CHECK(s.tau == doctest::Approx(std::min(tau1, tau2)));
  CHECK(s.alpha_star == doctest::Approx(alpha));
  CHECK(s.delta == doctest::Approx(delta));
  CHECK(s.eta * static_cast<double>(s.T) == doctest::Approx(s.tau));
  CHECK(s.euler_gap_bound <= s.delta * (1 + 1e-12));
  CHECK(s.eta * static_cast<double>(s.T - 1) < s.tau);

  CHECK(s.failure_bound <= 0.1);
  CHECK(explicit_failure_bound(s, 1.0, 3, s.batch_size - 1) > 0.1);
  const double a = s.tau * s.lambda_max;
  CHECK(explicit_failure_bound(s, 1.0, 3, 1000) ==
        doctest::Approx(std::min(1.0, 4 * s.eta * a * std::exp(a / 2) * 3 / (s.delta * s.delta * 1000))));

  // Refined forms: alpha* is at most 2 and dominates an explicit multiple of Delta.
  CHECK(s.alpha_star <= 2.0);
  const double lam = s.lambda_max;
  const double cp = std::max(1.0, 2 * std::sqrt(lam));
  const double c2 = std::min(gamma * gamma / (2 * lam * K * cp * cp), 4 * gamma / (3 * std::pow(lam, 2.5) * cp));
  CHECK(s.alpha_star >= c2 * s.Delta_predicted);
  CHECK(s.Delta_predicted == doctest::Approx(std::pow(r.rho / (n0 + 1), 2)));
  CHECK_FALSE(s.tau_interval);
}

TEST_CASE("schedule invariants on random instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const bool iso = seed % 2 == 0;
    const auto dist = iso ? DistributionSpec::isotropic_gaussian(4)
                          : DistributionSpec::gaussian(random_covariance(4, 10.0, 1.0, seed));
    const ProblemInstance inst = random_valid_instance(dist, 1.0, seed);
    const Schedule s = theorem_schedule(inst, 0.0, default_norm_mode(dist));
    CHECK(s.tau > 0);
    CHECK(s.tau <= s.tau1 * (1 + 1e-12));
    CHECK(s.alpha_star <= 2.0);
    CHECK(s.euler_gap_bound <= s.delta * (1 + 1e-12));
    CHECK(s.failure_bound <= 0.1);
    CHECK(s.gamma < 1.0);
  }
}

TEST_CASE("schedule refuses non-positive rho") {
  const auto dist = DistributionSpec::isotropic_gaussian(5);
  const ProblemInstance inst = make_instance(dist, 0.05, 0.99, 3.0, 7);
  REQUIRE(rho_report(inst, 0.0).rho <= 0);
  try {
    theorem_schedule(inst, 0.0, NormMode::Euclidean);
    FAIL("expected refusal");
  } catch (const DiagnosticError& e) {
    CHECK(e.inequality() == "rho > 0");
  }
}

TEST_CASE("Monte Carlo schedule reports intervals") {
  const auto dist = DistributionSpec::symmetric_product(3, ProductMarginal::SmoothedUniform);
  const ProblemInstance inst = make_instance(dist, 0.95, 0.3, 1.0, 42);
  ScheduleOptions o;
  o.mc_samples = 400'000;
  o.seed = 5;
  const Schedule s = theorem_schedule(inst, 0.0, NormMode::Euclidean, o);
  REQUIRE(s.tau_interval);
  REQUIRE(s.failure_interval);
  CHECK(s.tau_interval->lo <= s.tau);
  CHECK(s.tau <= s.tau_interval->hi);
  CHECK(s.grad_norm_std_error > 0);
}

TEST_CASE("inequality audit passes on valid instances") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto dist = seed % 2 ? DistributionSpec::gaussian(random_covariance(5, 10.0, 1.0, seed))
                               : DistributionSpec::isotropic_gaussian(5);
    const ProblemInstance inst = random_valid_instance(dist, 1.0, 50 + seed);
    const AuditReport a = inequality_audit(inst, 0.0, 200'000, seed);
    REQUIRE(a.checks.size() == 5);
    for (const auto& c : a.checks) {
      INFO(c.name << " margin " << c.margin << " se " << c.std_error);
      CHECK(c.pass);
    }
    CHECK(a.all_pass());
  }
}

TEST_CASE("random valid instances") {
  const auto dist = DistributionSpec::gaussian(random_covariance(6, 10.0, 1.0, 3));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ProblemInstance inst = random_valid_instance(dist, 1.0, seed);
    CHECK_NOTHROW(inst.validate_theorem_mode());
    CHECK(inst.theta_star.dot(dist.cov().sigma() * dist.cov().sigma() * inst.psi) >= 0);
    CHECK(rho_report(inst, 0.0).rho > 0);
  }
}

TEST_CASE("line-rate decomposition matches the derivative of the cosine") {
  std::mt19937_64 gen(77);
  for (int t = 0; t < 20; ++t) {
    const Vector theta = gaussian_vector(gen, 6), v = gaussian_vector(gen, 6);
    Vector ts = gaussian_vector(gen, 6);
    ts.normalize();
    const LineRate lr = line_rate_decomposition(theta, v, ts);
    const double h = 1e-6;
    const double fd = (cosine(Vector(theta + h * v), ts) - cosine(Vector(theta - h * v), ts)) / (2 * h);
    CHECK(lr.f_prime_0 == doctest::Approx(fd).epsilon(1e-6));
    CHECK(lr.f_prime_0 == doctest::Approx((lr.A - lr.B) / theta.norm()));
  }
  // Moving along theta itself changes nothing.
  const Vector theta = Vector::Ones(3);
  const LineRate lr = line_rate_decomposition(theta, theta, Vector::Unit(3, 0));
  CHECK(std::abs(lr.f_prime_0) < 1e-15);
  CHECK_THROWS_AS(line_rate_decomposition(theta, theta, Vector::Ones(3)), UsageError);
}
