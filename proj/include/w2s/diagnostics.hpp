#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "w2s/logistic.hpp"

namespace w2s {

enum class RhoMode { Isotropic, General };
std::string to_string(RhoMode mode);

struct RhoReport {
  double rho_l = 0.0;
  double rho_v = 0.0;
  double rho = 0.0;
  double m = 0.0;
  double mean_abs_margin = 0.0;
  double epsilon_used = 0.0;
  RhoMode mode = RhoMode::Isotropic;
  NormMode norm_mode = NormMode::Euclidean;
  // Isotropic: the cancellation form. General: the ill-conditioned form with
  // the eigenspace sum weighted by lambda_E, which is what the algebra gives.
  double cancellation_lower_bound = 0.0;
  // General mode only: the ill-conditioned form with an unweighted eigenspace
  // sum. It lower-bounds rho whenever lambda_max <= 1.
  double ill_conditioned_unweighted = 0.0;
  double cos_theta0_star = 0.0;
  double rho_std_error = 0.0;  // Monte Carlo uncertainty of rho (0 for Gaussian)
  // rho exceeds zero by at least three combined standard errors.
  bool positive() const { return rho > 3.0 * rho_std_error; }
};

struct RhoOptions {
  std::optional<NormMode> norm_mode;  // default_norm_mode(dist) when empty
  Eigen::Index mc_samples = kDefaultMcSamples;
  std::uint64_t seed = 0;
  // Theorem-mode sign preconditions; general mode always enforces them.
  bool require_theorem_mode = false;
};

RhoReport rho_report(const ProblemInstance& instance, double epsilon, const RhoOptions& opts = {});

struct RefinedConstants {
  double c0 = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ScheduleOptions {
  Eigen::Index batch_size = 0;   // 0: smallest B with failure_bound <= target_failure
  double target_failure = 0.1;
  Eigen::Index mc_samples = kDefaultMcSamples;
  std::uint64_t seed = 0;
  RefinedConstants constants;
};

struct Schedule {
  double gamma = 0.0;
  double tau = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double eta = 0.0;
  std::int64_t T = 0;
  double alpha_star = 0.0;
  double delta = 0.0;
  double Delta_predicted = 0.0;
  double failure_bound = 0.0;
  double grad_norm_theta0 = 0.0;
  double grad_norm_std_error = 0.0;
  Eigen::Index batch_size = 0;
  double euler_gap_bound = 0.0;  // eta (gamma |theta0|/2 + gamma^2 |theta0|^2 / (2 G))
  double curvature_K = 0.0;
  double rho = 0.0;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  // Simplified-form quantities with the configured constants.
  double refined_tau_bound = 0.0;
  double refined_eta_bound = 0.0;
  double refined_failure_bound = 0.0;
  RefinedConstants constants;
  // Propagated Monte Carlo uncertainty (non-Gaussian only).
  std::optional<Interval> tau_interval;
  std::optional<Interval> failure_interval;
};

Schedule theorem_schedule(const ProblemInstance& instance, double epsilon, NormMode mode,
                          const ScheduleOptions& opts = {});

// 4 eta tau beta^2 lambda_max e^{tau beta^2 lambda_max / 2} d / (delta^2 B), clamped to [0, 1].
double explicit_failure_bound(const Schedule& s, double beta, Eigen::Index dim, Eigen::Index batch);
Eigen::Index batch_for_failure(const Schedule& s, double beta, Eigen::Index dim, double target);

struct AuditCheck {
  std::string name;
  std::string inequality;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;     // lhs - rhs, oriented so that >= 0 means the inequality holds
  double std_error = 0.0;  // Monte Carlo standard error of the margin
  bool pass = false;       // margin + 3 std_error >= 0
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  RhoReport rho;
  bool all_pass() const;
};

AuditReport inequality_audit(const ProblemInstance& instance, double epsilon, Eigen::Index n_mc,
                             std::uint64_t seed);

// Random instance for property checks: theorem-mode signs hold,
// <Sigma theta_star, psi>_Sigma >= 0, and rho > 0 at epsilon = 0.
ProblemInstance random_valid_instance(const DistributionSpec& dist, double beta, std::uint64_t seed);

struct LineRate {
  double A = 0.0;
  double B = 0.0;
  double f_prime_0 = 0.0;
};

// Derivative at t = 0 of t -> cos(theta + t v, theta_star), split into its
// learning term A and norm term B (Euclidean geometry, unit theta_star).
LineRate line_rate_decomposition(const Vector& theta, const Vector& v, const Vector& theta_star);

}  // namespace w2s
