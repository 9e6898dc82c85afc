#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "w2s/diagnostics.hpp"
#include "w2s/ellipticity.hpp"
#include "w2s/harness.hpp"
#include "w2s/rng.hpp"

namespace w2s {

namespace {

constexpr Eigen::Index kSweepEpsilonSamples = 100'000;
constexpr Eigen::Index kSweepRhoSamples = 200'000;

// Runs fn(i) for i in [0, n) on a pool of workers; the first failure by index is rethrown.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto k = static_cast<std::size_t>(std::max(1, threads));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(k, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double model_accuracy(const Vector& theta, const Vector& theta_star, const DistributionSpec& dist,
                      std::uint64_t seed) {
  if (dist.is_gaussian()) return 1.0 - arccos_loss(theta, theta_star, dist.cov());
  return 1.0 - zero_one_loss(theta, theta_star, dist, kAccuracyMcSamples, seed).value;
}

double row_rho(const ProblemInstance& inst, double epsilon, std::uint64_t seed) {
  RhoOptions ro;
  ro.mc_samples = kSweepRhoSamples;
  ro.seed = seed;
  try {
    return rho_report(inst, epsilon, ro).rho;
  } catch (const DiagnosticError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double sweep_epsilon(const DistributionSpec& dist, const Vector& theta_star, const Vector& psi,
                     std::uint64_t seed) {
  if (dist.is_gaussian()) return 0.0;
  EllipticityConfig ec;
  ec.n_directions = 16;
  return estimate_epsilon(dist, {theta_star, psi}, kSweepEpsilonSamples, ec, seed).epsilon_hat;
}

std::size_t best_index(const std::vector<Trajectory>& trajs, std::size_t begin, std::size_t count) {
  std::size_t best = begin;
  double best_gain = -std::numeric_limits<double>::infinity();
  for (std::size_t i = begin; i < begin + count; ++i) {
    const double g = peak_gain(trajs[i]).gain_cos;
    if (g > best_gain) {
      best_gain = g;
      best = i;
    }
  }
  return best;
}

ResultRow make_row(std::string id, int teacher, double teacher_accuracy, double student_norm,
                   double lr, const Trajectory& traj, double rho, double epsilon, std::uint64_t seed) {
  const PeakGain pg = peak_gain(traj);
  ResultRow r;
  r.run_id = std::move(id);
  r.teacher_id = teacher;
  r.teacher_accuracy = teacher_accuracy;
  r.student_norm = student_norm;
  r.learning_rate = lr;
  r.peak_step = pg.best_step;
  r.peak_gain_cos = pg.gain_cos;
  r.peak_gain_accuracy = pg.gain_accuracy;
  r.final_gain_cos = traj.steps.back().cos_sigma - traj.steps.front().cos_sigma;
  r.rho = rho;
  r.epsilon_used = epsilon;
  r.seed = seed;
  return r;
}

SftConfig sweep_sft_config(const ExperimentConfig& cfg) {
  SftConfig sc;
  sc.steps = cfg.max_steps;
  sc.batch_size = cfg.batch_size;
  sc.eval_every = cfg.eval_every;
  sc.keep_iterates = false;
  return sc;
}

nlohmann::json base_manifest(const ExperimentConfig& cfg, const SweepResult& res) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : res.rows) runs.push_back({{"run_id", r.run_id}, {"seed", r.seed}});
  return {{"config", cfg.to_json()},
          {"code_version", code_version()},
          {"master_seed", cfg.master_seed},
          {"runs", runs}};
}

struct Pretrained {
  Vector theta_star;
  Vector student;
  std::vector<Vector> teachers;
};

std::uint64_t finetune_seed(const ExperimentConfig& cfg, int teacher) {
  return derive_seed(cfg.master_seed, "finetune", static_cast<std::uint64_t>(teacher));
}

Pretrained pretrain_models(const ExperimentConfig& cfg, const DistributionSpec& dist,
                           std::optional<int> only_teacher = std::nullopt) {
  const PretrainConfig& pc = *cfg.pretrain;
  Pretrained p;
  p.theta_star = make_theta_star(cfg, dist);
  const SampleBatch x = sample(dist, pc.n_points, derive_seed(cfg.master_seed, "pretrain-data"));
  const Vector y = pseudo_label(x, p.theta_star);
  p.student = train_logistic(x, y, pc.epochs, pc.lr, pc.minibatch,
                             derive_seed(cfg.master_seed, "student-init"));
  const SampleBatch xs = x.topRows(pc.subset_points);
  const Vector ys = y.head(pc.subset_points);
  const Eigen::Index mb = std::min(pc.minibatch, pc.subset_points);
  p.teachers.resize(static_cast<std::size_t>(cfg.n_teachers));
  auto train_teacher = [&](std::size_t t) {
    p.teachers[t] = train_logistic(xs, ys, pc.subset_epochs, pc.lr, mb,
                                   derive_seed(cfg.master_seed, "teacher-init", t));
  };
  if (only_teacher)
    train_teacher(static_cast<std::size_t>(*only_teacher));
  else
    parallel_for(p.teachers.size(), cfg.threads, train_teacher);
  return p;
}

}  // namespace

std::string run_id(std::size_t norm_index, std::size_t accuracy_index, int teacher) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "n%zu-a%zu-t%03d", norm_index, accuracy_index, teacher);
  return buf;
}

Vector make_theta_star(const ExperimentConfig& cfg, const DistributionSpec& dist) {
  return random_sigma_unit(dist.cov(), derive_seed(cfg.master_seed, "theta-star"));
}

std::uint64_t teacher_seed(const ExperimentConfig& cfg, double teacher_accuracy, int teacher) {
  return derive_seed(mix64(cfg.master_seed ^ std::bit_cast<std::uint64_t>(teacher_accuracy)), "teacher",
                     static_cast<std::uint64_t>(teacher));
}

Vector make_teacher(const ExperimentConfig& cfg, const DistributionSpec& dist, const Vector& theta_star,
                    double teacher_accuracy, int teacher) {
  return make_unit_with_cos(theta_star, accuracy_to_cos(teacher_accuracy), dist.cov(),
                            teacher_seed(cfg, teacher_accuracy, teacher));
}

Vector make_student_direction(const ExperimentConfig& cfg, const DistributionSpec& dist,
                              const Vector& theta_star) {
  const Vector u = make_unit_with_cos(theta_star, accuracy_to_cos(cfg.student_accuracy), dist.cov(),
                                      derive_seed(cfg.master_seed, "student"));
  return u / u.norm();
}

ProblemInstance build_instance(const ExperimentConfig& cfg, std::size_t norm_index,
                               std::size_t accuracy_index, int teacher) {
  if (norm_index >= cfg.student_norms.size()) throw UsageError("build_instance: norm index out of range");
  if (accuracy_index >= cfg.teacher_accuracies.size())
    throw UsageError("build_instance: accuracy index out of range");
  ProblemInstance inst;
  inst.dist = cfg.distribution();
  inst.beta = cfg.beta;
  inst.theta_star = make_theta_star(cfg, inst.dist);
  inst.psi = make_teacher(cfg, inst.dist, inst.theta_star, cfg.teacher_accuracies[accuracy_index], teacher);
  inst.theta0 = cfg.student_norms[norm_index] * make_student_direction(cfg, inst.dist, inst.theta_star);
  return inst;
}

SweepResult run_random_teacher_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != ExperimentKind::RandomTeacher)
    throw ConfigError("experiment", "run_random_teacher_sweep requires random-teacher");
  const DistributionSpec dist = cfg.distribution();
  const Vector theta_star = make_theta_star(cfg, dist);
  const Vector student = make_student_direction(cfg, dist, theta_star);
  const std::size_t n_norms = cfg.student_norms.size();
  const std::size_t n_acc = cfg.teacher_accuracies.size();
  const std::size_t n_lr = cfg.learning_rates.size();
  const auto n_teach = static_cast<std::size_t>(cfg.n_teachers);
  const SftConfig sc = sweep_sft_config(cfg);

  struct TaskOut {
    std::vector<ResultRow> rows;
    std::vector<Trajectory> trajs;
  };
  std::vector<TaskOut> outs(n_acc * n_teach);
  parallel_for(outs.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t ai = task / n_teach;
    const int t = static_cast<int>(task % n_teach);
    const double acc = cfg.teacher_accuracies[ai];
    ProblemInstance base;
    base.dist = dist;
    base.beta = cfg.beta;
    base.theta_star = theta_star;
    base.psi = make_teacher(cfg, dist, theta_star, acc, t);
    base.theta0 = student;
    const std::uint64_t tseed = teacher_seed(cfg, acc, t);
    const std::uint64_t sft_seed = derive_seed(tseed, "sft");
    std::vector<SftMember> members;
    for (double norm : cfg.student_norms)
      for (double lr : cfg.learning_rates) members.push_back({norm * student, lr});
    std::vector<Trajectory> trajs = run_sft_group(base, members, sc, sft_seed);
    const double eps = sweep_epsilon(dist, theta_star, base.psi, derive_seed(tseed, "epsilon"));
    TaskOut& out = outs[task];
    for (std::size_t ni = 0; ni < n_norms; ++ni) {
      const std::size_t best = best_index(trajs, ni * n_lr, n_lr);
      ProblemInstance inst = base;
      inst.theta0 = members[best].theta0;
      const double rho = row_rho(inst, eps, derive_seed(tseed, "rho", ni));
      out.rows.push_back(make_row(run_id(ni, ai, t), t, acc, cfg.student_norms[ni],
                                  members[best].eta, trajs[best], rho, eps, sft_seed));
      out.trajs.push_back(std::move(trajs[best]));
    }
  });

  SweepResult res;
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (task, norm) in run_id order
  for (std::size_t ni = 0; ni < n_norms; ++ni)
    for (std::size_t task = 0; task < outs.size(); ++task) order.emplace_back(task, ni);
  for (const auto& [task, ni] : order) {
    res.rows.push_back(outs[task].rows[ni]);
    res.trajectories.push_back(std::move(outs[task].trajs[ni]));
  }
  res.manifest = base_manifest(cfg, res);
  return res;
}

Vector train_logistic(const SampleBatch& x, const Vector& y, int epochs, double lr,
                      Eigen::Index minibatch, std::uint64_t seed) {
  if (x.rows() < 1 || y.size() != x.rows()) throw UsageError("train_logistic: bad data");
  if (epochs < 0 || !(lr > 0.0) || minibatch < 1) throw UsageError("train_logistic: bad parameters");
  const Eigen::Index n = x.rows(), d = x.cols();
  Vector theta(d);
  RandomStream init(derive_seed(seed, "init"));
  init.fill_normal(theta);
  theta /= std::sqrt(static_cast<double>(d));

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  SampleBatch batch;
  Vector labels;
  for (int e = 0; e < epochs; ++e) {
    RandomStream shuffle(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(e)));
    for (std::size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[static_cast<std::size_t>(shuffle.below(i + 1))]);
    for (Eigen::Index start = 0; start < n; start += minibatch) {
      const Eigen::Index m = std::min(minibatch, n - start);
      batch.resize(m, d);
      labels.resize(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index src = idx[static_cast<std::size_t>(start + i)];
        batch.row(i) = x.row(src);
        labels(i) = y(src);
      }
      const Vector next = theta - lr * minibatch_gradient(theta, batch, labels, 1.0);
      if (!next.allFinite())
        throw IntegrationError("train_logistic: non-finite weights in epoch " + std::to_string(e), e,
                               theta, seed);
      theta = next;
    }
  }
  return theta;
}

Vector pretrain(const DistributionSpec& dist, const Vector& theta_star, Eigen::Index n_points,
                int epochs, double lr, Eigen::Index minibatch, std::uint64_t seed) {
  if (n_points < 1) throw UsageError("pretrain: n_points must be positive");
  const SampleBatch x = sample(dist, n_points, derive_seed(seed, "data"));
  return train_logistic(x, pseudo_label(x, theta_star), epochs, lr, minibatch, seed);
}

SweepResult run_shared_pretraining(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != ExperimentKind::SharedPretrain)
    throw ConfigError("experiment", "run_shared_pretraining requires shared-pretrain");
  const DistributionSpec dist = cfg.distribution();
  const Pretrained p = pretrain_models(cfg, dist);
  const SftConfig sc = sweep_sft_config(cfg);
  const auto n_teach = static_cast<std::size_t>(cfg.n_teachers);

  std::vector<ResultRow> rows(n_teach);
  std::vector<Trajectory> trajs(n_teach);
  std::vector<double> teacher_acc(n_teach);
  parallel_for(n_teach, cfg.threads, [&](std::size_t t) {
    ProblemInstance base;
    base.dist = dist;
    base.beta = cfg.beta;
    base.theta_star = p.theta_star;
    base.psi = p.teachers[t] / norm_sigma(p.teachers[t], dist.cov());
    base.theta0 = p.student;
    const std::uint64_t seed = finetune_seed(cfg, static_cast<int>(t));
    std::vector<SftMember> members;
    for (double lr : cfg.learning_rates) members.push_back({p.student, lr});
    std::vector<Trajectory> tr = run_sft_group(base, members, sc, seed);
    const std::size_t best = best_index(tr, 0, tr.size());
    teacher_acc[t] = model_accuracy(base.psi, p.theta_star, dist, derive_seed(seed, "teacher-accuracy"));
    const double eps = sweep_epsilon(dist, p.theta_star, base.psi, derive_seed(seed, "epsilon"));
    const double rho = row_rho(base, eps, derive_seed(seed, "rho"));
    char id[32];
    std::snprintf(id, sizeof id, "s-t%03zu", t);
    rows[t] = make_row(id, static_cast<int>(t), teacher_acc[t], p.student.norm(), members[best].eta,
                       tr[best], rho, eps, seed);
    trajs[t] = std::move(tr[best]);
  });

  SweepResult res;
  res.rows = std::move(rows);
  res.trajectories = std::move(trajs);
  res.manifest = base_manifest(cfg, res);
  res.manifest["student_accuracy"] =
      model_accuracy(p.student, p.theta_star, dist, derive_seed(cfg.master_seed, "student-accuracy"));
  res.manifest["teacher_accuracies"] = teacher_acc;
  return res;
}

Trajectory replay_row(const ExperimentConfig& cfg, const ResultRow& row) {
  const SftConfig base_sc = sweep_sft_config(cfg);
  SftConfig sc = base_sc;
  sc.eta = row.learning_rate;
  std::size_t ni = 0, ai = 0;
  int t = 0;
  if (std::sscanf(row.run_id.c_str(), "n%zu-a%zu-t%d", &ni, &ai, &t) == 3) {
    const ProblemInstance inst = build_instance(cfg, ni, ai, t);
    return run_sft(inst, sc, row.seed);
  }
  if (std::sscanf(row.run_id.c_str(), "s-t%d", &t) == 1) {
    const DistributionSpec dist = cfg.distribution();
    const Pretrained p = pretrain_models(cfg, dist, t);
    ProblemInstance inst;
    inst.dist = dist;
    inst.beta = cfg.beta;
    inst.theta_star = p.theta_star;
    const Vector& teacher = p.teachers[static_cast<std::size_t>(t)];
    inst.psi = teacher / norm_sigma(teacher, dist.cov());
    inst.theta0 = p.student;
    return run_sft(inst, sc, row.seed);
  }
  throw UsageError("replay_row: unrecognized run_id '" + row.run_id + "'");
}

}  // namespace w2s
