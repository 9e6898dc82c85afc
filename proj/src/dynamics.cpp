#include "w2s/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "w2s/ellipticity.hpp"
#include "w2s/rng.hpp"

namespace w2s {

namespace {

constexpr Eigen::Index kPoolChunk = 100'000;
constexpr double kMaxStoredPoolBytes = 256.0 * 1024 * 1024;

void check_finite(const Vector& theta, const Vector& last_good, std::int64_t step,
                  std::uint64_t seed, const char* what) {
  if (!theta.allFinite())
    throw IntegrationError(std::string(what) + ": non-finite iterate at step " + std::to_string(step),
                           step, last_good, seed);
}

ProblemInstance with_theta0(const ProblemInstance& base, const Vector& theta0) {
  ProblemInstance inst = base;
  inst.theta0 = theta0;
  return inst;
}

// A unit vector orthogonal to unit q.
Vector orthogonal_unit(const Vector& q) {
  Eigen::Index j = 0;
  q.cwiseAbs().minCoeff(&j);
  Vector e = Vector::Zero(q.size());
  e(j) = 1.0;
  e -= e.dot(q) * q;
  return e / e.norm();
}

}  // namespace

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Flow: return "flow";
    case TrajectoryKind::Euler: return "euler";
    case TrajectoryKind::Sgd: return "sgd";
  }
  return "unknown";
}

StepRecord measure(const Vector& theta, const ProblemInstance& inst, std::int64_t step, double time,
                   bool keep_theta, std::uint64_t accuracy_seed) {
  const Covariance& cov = inst.cov();
  StepRecord r;
  r.step = step;
  r.time = time;
  if (keep_theta) r.theta = theta;
  r.dot_theta_star = theta.dot(inst.theta_star);
  r.euclid_norm = theta.norm();
  r.sigma_norm = norm_sigma(theta, cov);
  if (r.euclid_norm < zero_norm_threshold<double>()) {
    r.cos_sigma = 0.0;
    r.accuracy = 0.5;
    return r;
  }
  r.cos_sigma = cos_sigma(theta, inst.theta_star, cov);
  if (inst.dist.is_gaussian())
    r.accuracy = 1.0 - std::acos(r.cos_sigma) / std::numbers::pi;
  else
    r.accuracy =
        1.0 - zero_one_loss(theta, inst.theta_star, inst.dist, kAccuracyMcSamples, accuracy_seed).value;
  return r;
}

PopulationField::PopulationField(const ProblemInstance& inst, Eigen::Index pool_samples,
                                 std::uint64_t seed)
    : inst_(&inst), pool_samples_(pool_samples), seed_(seed) {
  if (inst.dist.is_gaussian()) return;
  if (pool_samples < 1) throw UsageError("PopulationField: pool size must be positive");
  const double bytes = static_cast<double>(pool_samples) * static_cast<double>(inst.dim()) * 8.0;
  if (bytes > kMaxStoredPoolBytes) return;
  auto pool = std::make_shared<SampleBatch>(pool_samples, inst.dim());
  for (Eigen::Index start = 0, c = 0; start < pool_samples; start += kPoolChunk, ++c) {
    const Eigen::Index m = std::min(kPoolChunk, pool_samples - start);
    pool->middleRows(start, m) = sample(inst.dist, m, derive_seed(seed, "flow-pool", c));
  }
  labels_ = std::make_shared<Vector>(pseudo_label(*pool, inst.psi));
  pool_ = std::move(pool);
}

Vector PopulationField::gradient(const Vector& theta) const {
  const ProblemInstance& inst = *inst_;
  if (inst.dist.is_gaussian())
    return gaussian_population_gradient(theta, inst.psi, inst.beta, inst.cov());
  if (pool_) return minibatch_gradient(theta, *pool_, *labels_, inst.beta);
  Vector g = Vector::Zero(theta.size());
  for (Eigen::Index start = 0, c = 0; start < pool_samples_; start += kPoolChunk, ++c) {
    const Eigen::Index m = std::min(kPoolChunk, pool_samples_ - start);
    const SampleBatch x = sample(inst.dist, m, derive_seed(seed_, "flow-pool", c));
    g += static_cast<double>(m) * minibatch_gradient(theta, x, pseudo_label(x, inst.psi), inst.beta);
  }
  return g / static_cast<double>(pool_samples_);
}

Trajectory gradient_flow(const ProblemInstance& inst, double tau, const IntegratorConfig& cfg) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw UsageError("gradient_flow: tau must be >= 0");
  inst.validate();
  Trajectory traj;
  traj.kind = TrajectoryKind::Flow;
  traj.accuracy_mc_samples = inst.dist.is_gaussian() ? 0 : kAccuracyMcSamples;
  const std::uint64_t acc_seed = derive_seed(cfg.seed, "flow-accuracy");
  traj.steps.push_back(measure(inst.theta0, inst, 0, 0.0, cfg.keep_iterates, acc_seed));
  if (tau == 0.0) {
    traj.config_echo = {{"tau", tau}, {"h", 0.0}, {"steps", 0}};
    return traj;
  }

  double h = tau / 1000.0;
  if (cfg.eta > 0.0) {
    const double k = std::max(1.0, std::ceil(cfg.eta / h - 1e-9));
    h = cfg.eta / k;
  }
  if (cfg.step) {
    if (!(*cfg.step > 0.0)) throw UsageError("gradient_flow: step must be positive");
    h = *cfg.step;
  }
  const auto n = static_cast<std::int64_t>(std::ceil(tau / h - 1e-9));
  traj.config_echo = {{"tau", tau}, {"h", h}, {"steps", n}, {"integrator", "rk4"}};

  const PopulationField field(inst, cfg.pool_samples, cfg.seed);
  Vector theta = inst.theta0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double hi = i + 1 == n ? tau - static_cast<double>(n - 1) * h : h;
    const Vector k1 = -field.gradient(theta);
    const Vector k2 = -field.gradient(theta + 0.5 * hi * k1);
    const Vector k3 = -field.gradient(theta + 0.5 * hi * k2);
    const Vector k4 = -field.gradient(theta + hi * k3);
    Vector next = theta + (hi / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(next, theta, i + 1, cfg.seed, "gradient_flow");
    theta = std::move(next);
    const double t = i + 1 == n ? tau : static_cast<double>(i + 1) * h;
    traj.steps.push_back(measure(theta, inst, i + 1, t, cfg.keep_iterates, acc_seed));
  }
  return traj;
}

Trajectory euler_iterates(const ProblemInstance& inst, double eta, std::int64_t T,
                          const IntegratorConfig& cfg) {
  if (!(eta > 0.0)) throw UsageError("euler_iterates: eta must be positive");
  if (T < 0) throw UsageError("euler_iterates: T must be nonnegative");
  inst.validate();
  Trajectory traj;
  traj.kind = TrajectoryKind::Euler;
  traj.accuracy_mc_samples = inst.dist.is_gaussian() ? 0 : kAccuracyMcSamples;
  traj.config_echo = {{"eta", eta}, {"steps", T}};
  const std::uint64_t acc_seed = derive_seed(cfg.seed, "euler-accuracy");
  const PopulationField field(inst, cfg.pool_samples, cfg.seed);
  Vector theta = inst.theta0;
  traj.steps.push_back(measure(theta, inst, 0, 0.0, cfg.keep_iterates, acc_seed));
  for (std::int64_t t = 0; t < T; ++t) {
    Vector next = theta - eta * field.gradient(theta);
    check_finite(next, theta, t + 1, cfg.seed, "euler_iterates");
    theta = std::move(next);
    traj.steps.push_back(
        measure(theta, inst, t + 1, eta * static_cast<double>(t + 1), cfg.keep_iterates, acc_seed));
  }
  return traj;
}

std::int64_t default_eval_every(std::int64_t steps) {
  return steps <= 10'000 ? 1 : (steps + 9'999) / 10'000;
}

Trajectory run_sft(const ProblemInstance& inst, const SftConfig& cfg, std::uint64_t seed) {
  return run_sft_group(inst, {{inst.theta0, cfg.eta}}, cfg, seed).front();
}

std::vector<Trajectory> run_sft_group(const ProblemInstance& base, const std::vector<SftMember>& members,
                                      const SftConfig& cfg, std::uint64_t seed) {
  if (members.empty()) throw UsageError("run_sft: no members");
  if (cfg.steps < 1) throw UsageError("run_sft: steps must be at least 1");
  if (cfg.batch_size < 1) throw UsageError("run_sft: batch size must be at least 1");
  if (cfg.eval_every < 0) throw UsageError("run_sft: eval_every must be nonnegative");
  const std::int64_t eval = cfg.eval_every > 0 ? cfg.eval_every : default_eval_every(cfg.steps);
  const Eigen::Index d = base.dim();
  const Eigen::Index B = cfg.batch_size;
  const double beta = base.beta;
  const Covariance& cov = base.cov();
  const bool projected = base.dist.is_gaussian() && !cfg.force_literal;
  const bool identity = cov.is_identity();
  const std::uint64_t acc_seed = derive_seed(seed, "sft-accuracy");

  std::vector<ProblemInstance> insts;
  std::vector<Vector> theta;
  std::vector<Trajectory> out(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (!(members[m].eta > 0.0)) throw UsageError("run_sft: eta must be positive");
    insts.push_back(with_theta0(base, members[m].theta0));
    insts.back().validate();
    theta.push_back(members[m].theta0);
    Trajectory& tr = out[m];
    tr.kind = TrajectoryKind::Sgd;
    tr.seed = seed;
    tr.accuracy_mc_samples = base.dist.is_gaussian() ? 0 : kAccuracyMcSamples;
    tr.config_echo = {{"eta", members[m].eta},
                      {"steps", cfg.steps},
                      {"batch_size", B},
                      {"eval_every", eval},
                      {"kernel", projected ? "projected" : "literal"}};
    tr.steps.push_back(measure(theta[m], insts[m], 0, 0.0, cfg.keep_iterates, acc_seed));
  }

  const Vector psi_w = identity ? Vector(base.psi) : cov.whiten(base.psi);
  const double psi_w_norm = psi_w.norm();
  std::vector<double> draws(projected ? static_cast<std::size_t>(2 * B + d) : 0);
  const Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(projected ? B : 0);
  Eigen::ArrayXd label(projected ? B : 0), c(projected ? B : 0);
  Vector grad(d);

  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    if (projected) {
      RandomStream rng(derive_seed(seed, "sft-kernel"), static_cast<std::uint64_t>(t));
      rng.fill_normal(draws.data(), draws.size());
      const Eigen::Map<const Eigen::ArrayXd> a(draws.data(), B);
      const Eigen::Map<const Eigen::ArrayXd> b(draws.data() + B, B);
      const Eigen::Map<const Vector> w(draws.data() + 2 * B, d);
      for (std::size_t m = 0; m < members.size(); ++m) {
        const Vector theta_w = identity ? theta[m] : cov.whiten(theta[m]);
        const double n_theta = theta_w.norm();
        const Vector q1 = n_theta > zero_norm_threshold<double>() ? Vector(theta_w / n_theta)
                                                                  : Vector(psi_w / psi_w_norm);
        const double p1 = psi_w.dot(q1);
        Vector q2 = Vector::Zero(d);
        double p2 = 0.0;
        if (d > 1) {
          const Vector r = psi_w - p1 * q1;
          p2 = r.norm();
          q2 = p2 > 1e-12 * psi_w_norm ? Vector(r / p2) : orthogonal_unit(q1);
          if (!(p2 > 1e-12 * psi_w_norm)) p2 = 0.0;
        }
        const double k = beta * n_theta;
        label = ((p1 * a + p2 * b) >= 0.0).select(ones, 0.0);
        c = beta * ((1.0 + (-k * a).exp()).inverse() - label);
        const double sa = c.matrix().dot(a.matrix());
        const double sb = c.matrix().dot(b.matrix());
        const double scc = c.matrix().squaredNorm();
        Vector gw = std::sqrt(scc) * (w - w.dot(q1) * q1 - w.dot(q2) * q2);
        gw += sa * q1 + sb * q2;
        gw /= static_cast<double>(B);
        grad = identity ? gw : cov.whiten(gw);
        Vector next = theta[m] - members[m].eta * grad;
        check_finite(next, theta[m], t + 1, seed, "run_sft");
        theta[m] = std::move(next);
      }
    } else {
      const SampleBatch x = sample(base.dist, B, derive_seed(seed, "sft-batch", static_cast<std::uint64_t>(t)));
      const Vector y = pseudo_label(x, base.psi);
      for (std::size_t m = 0; m < members.size(); ++m) {
        Vector next = theta[m] - members[m].eta * minibatch_gradient(theta[m], x, y, beta);
        check_finite(next, theta[m], t + 1, seed, "run_sft");
        theta[m] = std::move(next);
      }
    }
    if ((t + 1) % eval == 0 || t + 1 == cfg.steps) {
      for (std::size_t m = 0; m < members.size(); ++m)
        out[m].steps.push_back(measure(theta[m], insts[m], t + 1,
                                       members[m].eta * static_cast<double>(t + 1),
                                       cfg.keep_iterates, acc_seed));
    }
  }
  return out;
}

PeakGain peak_gain(const Trajectory& traj) {
  if (traj.steps.empty()) throw UsageError("peak_gain: empty trajectory");
  std::size_t best = 0;
  for (std::size_t i = 1; i < traj.steps.size(); ++i)
    if (traj.steps[i].cos_sigma > traj.steps[best].cos_sigma) best = i;
  const StepRecord& first = traj.steps.front();
  const StepRecord& top = traj.steps[best];
  return {best, top.step, top.cos_sigma - first.cos_sigma, top.accuracy - first.accuracy};
}

double max_matched_gap(const Trajectory& a, const Trajectory& b) {
  double gap = 0.0;
  std::size_t i = 0;
  for (const StepRecord& rb : b.steps) {
    const double tol = 1e-9 * std::max(1.0, std::abs(rb.time));
    while (i < a.steps.size() && a.steps[i].time < rb.time - tol) ++i;
    if (i == a.steps.size() || std::abs(a.steps[i].time - rb.time) > tol)
      throw UsageError("max_matched_gap: no record at time " + std::to_string(rb.time));
    if (rb.theta.size() == 0 || a.steps[i].theta.size() != rb.theta.size())
      throw UsageError("max_matched_gap: iterates were not kept");
    gap = std::max(gap, (a.steps[i].theta - rb.theta).norm());
  }
  return gap;
}

}  // namespace w2s
