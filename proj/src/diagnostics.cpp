#include "w2s/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "w2s/rng.hpp"

namespace w2s {

namespace {

constexpr double kPostconditionSlack = 1e-9;

struct RhoTerms {
  // rho_l = l0 + lm * m + le * E and similarly for rho_v; keeps rho linear in
  // the two estimated quantities so their errors propagate exactly.
  double l_const = 0.0, l_m = 0.0, l_e = 0.0;
  double v_const = 0.0, v_m = 0.0, v_e = 0.0;
  double a_e = 0.0;            // A = a_e * E
  double c_weighted = 0.0;     // (lmax - lmin) * sum_E lambda_E |<P_E t*, P_E t0~>|
  double c_unweighted = 0.0;   // (lmax - lmin) * sum_E |<P_E t*, P_E t0~>|
  double eps_const = 0.0;      // 4 lambda_max eps
};

double safe_cos(const Vector& u, const Vector& v, const Covariance& cov) {
  if (u.norm() < 1e-14 * std::max(1.0, v.norm())) return 0.0;
  return cos_sigma(u, v, cov);
}

Estimate norm_with_error(const GradientEstimate& g) {
  const double n = g.mean.norm();
  if (g.batch_means.cols() < 2 || n == 0.0) return {n, 0.0};
  const Vector u = g.mean / n;
  const Eigen::ArrayXd proj = (u.transpose() * g.batch_means).transpose().array();
  const double mean = proj.mean();
  const double var = (proj - mean).square().sum() / static_cast<double>(proj.size() - 1);
  return {n, std::sqrt(var / static_cast<double>(proj.size()))};
}

}  // namespace

std::string to_string(RhoMode mode) {
  return mode == RhoMode::Isotropic ? "isotropic" : "general";
}

RhoReport rho_report(const ProblemInstance& inst, double epsilon, const RhoOptions& opts) {
  if (!(epsilon >= 0.0)) throw UsageError("rho_report: epsilon must be nonnegative");
  const Covariance& cov = inst.cov();
  const bool isotropic = cov.is_identity();
  if (!isotropic || opts.require_theorem_mode)
    inst.validate_theorem_mode();
  else
    inst.validate();

  RhoReport rep;
  rep.mode = isotropic ? RhoMode::Isotropic : RhoMode::General;
  rep.norm_mode = opts.norm_mode.value_or(default_norm_mode(inst.dist));
  rep.epsilon_used = epsilon;
  const Estimate m = confidence_measure(inst.theta0, inst.beta, inst.dist, rep.norm_mode,
                                        opts.mc_samples, derive_seed(opts.seed, "rho-m"));
  const Estimate e = mean_abs_margin(inst.psi, inst.dist, opts.mc_samples,
                                     derive_seed(opts.seed, "rho-margin"));
  rep.m = m.value;
  rep.mean_abs_margin = e.value;

  const double c = cos_sigma(inst.theta0, inst.theta_star, cov);
  rep.cos_theta0_star = c;
  const Vector p_theta0 = proj_orth_sigma(inst.theta_star, inst.theta0, cov);
  RhoTerms t;
  if (isotropic) {
    const double cps = cosine(inst.theta_star, inst.psi);
    const double cpp = safe_cos(p_theta0, inst.psi, cov);
    const double n0 = inst.theta0.norm();
    t.l_e = 0.5 * cps;
    t.l_m = -c;
    t.l_const = -2.0 * epsilon;
    t.v_m = p_theta0.squaredNorm() / (n0 * n0);
    t.v_e = -0.5 * std::abs(cpp);
    t.v_const = -2.0 * epsilon;
    t.a_e = 0.5 * ((1.0 - c * c) * cps - c * std::abs(cpp));
    t.eps_const = 4.0 * epsilon;
  } else {
    const double lmax = cov.lambda_max();
    const double lmin = cov.lambda_min();
    const Vector s_star = cov.apply(inst.theta_star);
    const Vector t0 = inst.theta0 / norm_sigma(inst.theta0, cov);
    const Vector p_t0 = p_theta0 / norm_sigma(inst.theta0, cov);
    const double c_sp = cos_sigma(s_star, inst.psi, cov);
    const double c_pp = safe_cos(cov.apply(p_theta0), inst.psi, cov);
    t.l_e = 0.5 * lmin * c_sp;
    t.l_m = -inner_sigma(s_star, t0, cov);
    t.l_const = -2.0 * lmax * epsilon;
    t.v_m = inner_sigma(cov.apply(p_t0), t0, cov);
    t.v_e = -0.5 * lmax * std::abs(c_pp);
    t.v_const = -2.0 * lmax * epsilon;
    t.a_e = 0.5 * (lmin * (1.0 - c * c) * c_sp - lmax * c * std::abs(c_pp));
    double weighted = 0.0, unweighted = 0.0;
    for (const auto& space : cov.eigenspaces()) {
      const Vector a = space.basis.transpose() * inst.theta_star;
      const Vector b = space.basis.transpose() * t0;
      weighted += space.eigenvalue * std::abs(a.dot(b));
      unweighted += std::abs(a.dot(b));
    }
    t.c_weighted = (lmax - lmin) * weighted;
    t.c_unweighted = (lmax - lmin) * unweighted;
    t.eps_const = 4.0 * lmax * epsilon;
  }
  rep.rho_l = t.l_const + t.l_m * m.value + t.l_e * e.value;
  rep.rho_v = t.v_const + t.v_m * m.value + t.v_e * e.value;
  const double w_l = 1.0 - c * c;
  rep.rho = w_l * rep.rho_l + c * rep.rho_v;
  const double drho_dm = w_l * t.l_m + c * t.v_m;
  const double drho_de = w_l * t.l_e + c * t.v_e;
  rep.rho_std_error = std::hypot(drho_dm * m.std_error, drho_de * e.std_error);
  rep.cancellation_lower_bound =
      t.a_e * e.value - t.c_weighted * m.value - t.eps_const;
  rep.ill_conditioned_unweighted =
      isotropic ? rep.cancellation_lower_bound
                : t.a_e * e.value - t.c_unweighted * m.value - t.eps_const;
  if (rep.rho < rep.cancellation_lower_bound - kPostconditionSlack)
    throw NumericalError("rho_report: rho fell below its cancellation lower bound");
  return rep;
}

double explicit_failure_bound(const Schedule& s, double beta, Eigen::Index dim, Eigen::Index batch) {
  if (batch < 1) throw UsageError("failure bound: batch size must be positive");
  const double a = s.tau * beta * beta * s.lambda_max;
  const double v = 4.0 * s.eta * a * std::exp(0.5 * a) * static_cast<double>(dim) /
                   (s.delta * s.delta * static_cast<double>(batch));
  return std::clamp(v, 0.0, 1.0);
}

Eigen::Index batch_for_failure(const Schedule& s, double beta, Eigen::Index dim, double target) {
  if (!(target > 0.0)) throw UsageError("batch_for_failure: target must be positive");
  const double a = s.tau * beta * beta * s.lambda_max;
  const double b = 4.0 * s.eta * a * std::exp(0.5 * a) * static_cast<double>(dim) /
                   (s.delta * s.delta * target);
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(b)));
}

Schedule theorem_schedule(const ProblemInstance& inst, double epsilon, NormMode mode,
                          const ScheduleOptions& opts) {
  RhoOptions ro;
  ro.norm_mode = mode;
  ro.mc_samples = opts.mc_samples;
  ro.seed = opts.seed;
  ro.require_theorem_mode = true;
  const RhoReport rep = rho_report(inst, epsilon, ro);
  if (!(rep.rho > 0.0) || !rep.positive())
    throw DiagnosticError("rho > 0", "theorem schedule requires rho > 0, computed rho = " +
                                         std::to_string(rep.rho) + " +- " +
                                         std::to_string(rep.rho_std_error));
  const Covariance& cov = inst.cov();
  const double beta = inst.beta;
  Estimate g{};
  if (inst.dist.is_gaussian()) {
    g.value = gaussian_population_gradient(inst.theta0, inst.psi, beta, cov).norm();
  } else {
    g = norm_with_error(population_gradient(inst.theta0, inst.psi, beta, inst.dist,
                                            GradientMethod::MonteCarlo, opts.mc_samples,
                                            derive_seed(opts.seed, "schedule-gradient")));
  }
  if (!(g.value > 3.0 * g.std_error) || !(g.value > 0.0))
    throw NumericalError("theorem schedule: gradient norm at theta0 is indistinguishable from zero");

  Schedule s;
  s.constants = opts.constants;
  s.rho = rep.rho;
  s.lambda_max = cov.lambda_max();
  s.lambda_min = cov.lambda_min();
  s.grad_norm_theta0 = g.value;
  s.grad_norm_std_error = g.std_error;
  const double lmax = s.lambda_max, lmin = s.lambda_min;
  const double n0 = inst.theta0.norm();
  const double b2 = beta * beta;
  s.gamma = lmax * b2 / (lmax * b2 + 4.0);
  s.curvature_K = (2.0 / std::sqrt(3.0)) * (lmax / lmin) +
                  0.25 * b2 * std::pow(lmax, 1.5) / std::sqrt(lmin);

  const double gamma = s.gamma, K = s.curvature_K, rho = s.rho;
  auto tau_of = [&](double G) {
    const double t1 = 4.0 / (lmax * b2) * std::log(gamma * n0 / G + 1.0);
    const double t2 = beta * rho * gamma * gamma * n0 /
                      (std::sqrt(lmax) * K * (G + gamma * n0) * (G + gamma * n0));
    return std::pair{t1, t2};
  };
  const double G = g.value;
  std::tie(s.tau1, s.tau2) = tau_of(G);
  s.tau = std::min(s.tau1, s.tau2);
  const double log_term = std::log(gamma * n0 / G + 1.0);
  s.alpha_star = std::min(2.0 * rho / (std::pow(lmax, 1.5) * beta * n0) * log_term,
                          b2 * rho * rho * gamma * gamma /
                              (2.0 * lmax * K * (G + gamma * n0) * (G + gamma * n0)));
  s.delta = gamma * n0 * std::sqrt(lmin) * s.alpha_star / (8.0 * std::sqrt(lmax));
  const double denom = 0.5 * gamma * n0 + 0.5 * gamma * gamma * n0 * n0 / G;
  const double eta_max = s.delta / denom;
  s.T = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(s.tau / eta_max)));
  s.eta = s.tau / static_cast<double>(s.T);
  s.euler_gap_bound = s.eta * denom;

  const Eigen::Index d = inst.dim();
  s.batch_size = opts.batch_size > 0 ? opts.batch_size
                                     : batch_for_failure(s, beta, d, opts.target_failure);
  s.failure_bound = explicit_failure_bound(s, beta, d, s.batch_size);

  const double scale = rho / (n0 + 1.0 + epsilon);
  s.Delta_predicted = opts.constants.c2 * scale * scale;
  s.refined_tau_bound = opts.constants.c0 * rho / n0;
  s.refined_eta_bound = opts.constants.c1 * scale * scale * scale;
  s.refined_failure_bound =
      std::clamp(opts.constants.c3 * static_cast<double>(d) /
                     (static_cast<double>(s.batch_size) * s.Delta_predicted) *
                     (1.0 / (n0 * rho) + 1.0 / (rho * rho)),
                 0.0, 1.0);

  if (g.std_error > 0.0) {
    Interval tau_iv{s.tau, s.tau}, fail_iv{s.failure_bound, s.failure_bound};
    for (double Gs : {std::max(G - 3.0 * g.std_error, 1e-300), G + 3.0 * g.std_error}) {
      const auto [t1, t2] = tau_of(Gs);
      Schedule alt = s;
      alt.tau = std::min(t1, t2);
      tau_iv = {std::min(tau_iv.lo, alt.tau), std::max(tau_iv.hi, alt.tau)};
      const double f = explicit_failure_bound(alt, beta, d, s.batch_size);
      fail_iv = {std::min(fail_iv.lo, f), std::max(fail_iv.hi, f)};
    }
    s.tau_interval = tau_iv;
    s.failure_interval = fail_iv;
  }
  return s;
}

bool AuditReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.pass; });
}

AuditReport inequality_audit(const ProblemInstance& inst, double epsilon, Eigen::Index n_mc,
                             std::uint64_t seed) {
  AuditReport out;
  RhoOptions ro;
  ro.mc_samples = n_mc;
  ro.seed = derive_seed(seed, "audit-rho");
  out.rho = rho_report(inst, epsilon, ro);
  const RhoReport& r = out.rho;
  const Covariance& cov = inst.cov();
  const double beta = inst.beta;
  const double lmax = cov.lambda_max(), lmin = cov.lambda_min();
  const double n0 = inst.theta0.norm();

  const GradientEstimate g =
      population_gradient(inst.theta0, inst.psi, beta, inst.dist, GradientMethod::MonteCarlo, n_mc,
                          derive_seed(seed, "audit-gradient"));
  const Estimate gnorm = norm_with_error(g);
  const Vector grad_psi = cos_grad(inst.theta0, inst.theta_star, cov);

  auto add = [&](std::string name, std::string ineq, double lhs, double rhs, double margin,
                 double se) {
    const double roundoff = 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
    out.checks.push_back({std::move(name), std::move(ineq), lhs, rhs, margin, se,
                          margin + 3.0 * se + roundoff >= 0.0});
  };

  {
    const Eigen::ArrayXd per = -(grad_psi.transpose() * g.batch_means).transpose().array();
    const double lhs = -grad_psi.dot(g.mean);
    const double var = (per - per.mean()).square().sum() / static_cast<double>(per.size() - 1);
    const double coef = beta / (std::sqrt(lmax) * n0);
    const double rhs = coef * r.rho;
    add("first-order-lower-bound", "<grad Psi(theta0), -grad l(theta0)> >= beta rho / (lmax^1/2 |theta0|)",
        lhs, rhs, lhs - rhs,
        std::hypot(std::sqrt(var / static_cast<double>(per.size())), coef * r.rho_std_error));
  }
  {
    const double rhs = beta * std::sqrt(lmax) * (1.5 + 2.0 * epsilon);
    add("first-order-upper-bound", "|grad l(theta0)| <= beta lmax^1/2 (3/2 + 2 eps)", gnorm.value,
        rhs, rhs - gnorm.value, gnorm.std_error);
  }
  {
    const double coef = beta * std::sqrt(lmin) / lmax;
    const double rhs = coef * r.rho;
    add("grad-norm-lower-bound", "|grad l(theta0)| >= beta lmin^1/2 rho / lmax", gnorm.value, rhs,
        gnorm.value - rhs, std::hypot(gnorm.std_error, coef * r.rho_std_error));
  }
  add("rho-upper-bound", "rho <= (3/2) lmax", r.rho, 1.5 * lmax, 1.5 * lmax - r.rho,
      r.rho_std_error);
  add("ill-conditioned-inevitable", "rho >= ill-conditioned lower bound", r.rho,
      r.ill_conditioned_unweighted, r.rho - r.ill_conditioned_unweighted, r.rho_std_error);
  return out;
}

ProblemInstance random_valid_instance(const DistributionSpec& dist, double beta, std::uint64_t seed) {
  const Covariance& cov = dist.cov();
  for (std::uint64_t attempt = 0; attempt < 10'000; ++attempt) {
    RandomStream rng(derive_seed(seed, "random-instance", attempt));
    ProblemInstance inst;
    inst.dist = dist;
    inst.beta = beta;
    inst.theta_star = random_sigma_unit(cov, rng.next_u64());
    inst.psi = make_unit_with_cos(inst.theta_star, 0.3 + 0.65 * rng.uniform(), cov, rng.next_u64());
    const Vector u = make_unit_with_cos(inst.theta_star, 0.1 + 0.8 * rng.uniform(), cov, rng.next_u64());
    inst.theta0 = std::exp(std::log(0.25) + std::log(16.0) * rng.uniform()) * u / u.norm();
    const Vector s_star = cov.apply(inst.theta_star);
    if (s_star.dot(cov.apply(inst.theta0)) < 0.0 || s_star.dot(cov.apply(inst.psi)) < 0.0) continue;
    RhoOptions ro;
    ro.mc_samples = 100'000;
    ro.seed = derive_seed(seed, "random-instance-rho", attempt);
    if (rho_report(inst, 0.0, ro).positive()) return inst;
  }
  throw NumericalError("random_valid_instance: no valid instance found");
}

LineRate line_rate_decomposition(const Vector& theta, const Vector& v, const Vector& theta_star) {
  detail::check_nonzero(theta, "line_rate_decomposition theta");
  if (theta.size() != v.size() || theta.size() != theta_star.size())
    throw UsageError("line_rate_decomposition: dimension mismatch");
  if (std::abs(theta_star.norm() - 1.0) > 1e-10)
    throw UsageError("line_rate_decomposition: theta_star must be a unit vector");
  const double n = theta.norm();
  const double c = theta.dot(theta_star) / n;
  const Vector p_theta = theta - theta.dot(theta_star) * theta_star;
  const Vector p_v = v - v.dot(theta_star) * theta_star;
  LineRate out;
  out.A = (1.0 - c * c) * v.dot(theta_star);
  out.B = c / n * p_theta.dot(p_v);
  out.f_prime_0 = (out.A - out.B) / n;
  return out;
}

}  // namespace w2s
