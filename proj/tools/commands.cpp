#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>

#include "w2s/diagnostics.hpp"
#include "w2s/ellipticity.hpp"
#include "w2s/harness.hpp"
#include "w2s/rng.hpp"

namespace w2s::cli {

namespace {

using nlohmann::json;

ExperimentConfig load(const CommonOptions& opts, ExperimentKind fallback) {
  ExperimentConfig cfg = opts.config.empty() ? default_config(fallback) : load_config(opts.config);
  if (opts.seed) cfg.master_seed = *opts.seed;
  cfg.threads = opts.threads;
  cfg.validate();
  return cfg;
}

void flatten(const json& j, const std::string& prefix, std::ostream& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array() && !j.empty() && j.front().is_object()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
  } else if (j.is_number_float()) {
    out << prefix << ',' << format_number(j.get<double>()) << '\n';
  } else {
    out << prefix << ',' << (j.is_string() ? j.get<std::string>() : j.dump()) << '\n';
  }
}

// Prints a report and, with --out, saves it as <name>.csv or <name>.json.
void emit(const json& report, const CommonOptions& opts, const std::string& name) {
  const OutputFormat fmt = parse_format(opts.format);
  auto write = [&](std::ostream& os) {
    if (fmt == OutputFormat::Json)
      os << report.dump(2) << '\n';
    else {
      os << "key,value\n";
      flatten(report, "", os);
    }
  };
  write(std::cout);
  if (!opts.out.empty()) {
    std::filesystem::create_directories(opts.out);
    std::ofstream f(std::filesystem::path(opts.out) / (name + (fmt == OutputFormat::Json ? ".json" : ".csv")));
    write(f);
  }
}

json to_json(const RhoReport& r) {
  return {{"rho", r.rho},
          {"rho_l", r.rho_l},
          {"rho_v", r.rho_v},
          {"rho_std_error", r.rho_std_error},
          {"m", r.m},
          {"mean_abs_margin", r.mean_abs_margin},
          {"epsilon", r.epsilon_used},
          {"mode", to_string(r.mode)},
          {"norm_mode", r.norm_mode == NormMode::Euclidean ? "euclidean" : "sigma"},
          {"cos_theta0_star", r.cos_theta0_star},
          {"cancellation_lower_bound", r.cancellation_lower_bound},
          {"ill_conditioned_unweighted", r.ill_conditioned_unweighted}};
}

json to_json(const Schedule& s) {
  json j = {{"gamma", s.gamma},
            {"tau", s.tau},
            {"tau1", s.tau1},
            {"tau2", s.tau2},
            {"eta", s.eta},
            {"T", s.T},
            {"alpha_star", s.alpha_star},
            {"delta", s.delta},
            {"Delta_predicted", s.Delta_predicted},
            {"batch_size", s.batch_size},
            {"failure_bound", s.failure_bound},
            {"euler_gap_bound", s.euler_gap_bound},
            {"curvature_K", s.curvature_K},
            {"grad_norm_theta0", s.grad_norm_theta0},
            {"refined_tau_bound", s.refined_tau_bound},
            {"refined_eta_bound", s.refined_eta_bound},
            {"refined_failure_bound", s.refined_failure_bound}};
  if (s.tau_interval) j["tau_interval"] = {s.tau_interval->lo, s.tau_interval->hi};
  if (s.failure_interval) j["failure_interval"] = {s.failure_interval->lo, s.failure_interval->hi};
  return j;
}

double instance_epsilon(const ProblemInstance& inst, std::uint64_t seed) {
  if (inst.dist.is_gaussian()) return 0.0;
  return estimate_epsilon(inst.dist, {inst.theta_star, inst.psi}, 400'000, {}, seed).epsilon_hat;
}

int run_sweep_kind(const CommonOptions& opts, ExperimentKind kind) {
  const ExperimentConfig cfg = load(opts, kind);
  if (cfg.experiment != kind)
    throw ConfigError("experiment", "expected " + to_string(kind) + ", config has " + to_string(cfg.experiment));
  const SweepResult res =
      kind == ExperimentKind::RandomTeacher ? run_random_teacher_sweep(cfg) : run_shared_pretraining(cfg);
  const std::filesystem::path out = opts.out.empty() ? "results" : opts.out;
  write_results(out, res, parse_format(opts.format));

  std::map<std::pair<double, double>, std::pair<double, int>> means;
  int positive = 0;
  for (const auto& r : res.rows) {
    auto& m = means[{r.student_norm, r.teacher_accuracy}];
    m.first += r.peak_gain_cos;
    ++m.second;
    positive += r.peak_gain_cos > 0.0;
  }
  std::cout << res.rows.size() << " runs written to " << out.string() << "; " << positive
            << " with positive peak gain\n";
  if (kind == ExperimentKind::RandomTeacher)
    for (const auto& [key, m] : means)
      std::cout << "  norm " << format_number(key.first) << ", teacher accuracy "
                << format_number(key.second) << ": mean peak cos gain "
                << format_number(m.first / m.second) << '\n';
  else
    std::cout << "  student accuracy " << format_number(res.manifest["student_accuracy"].get<double>())
              << '\n';
  return 0;
}

}  // namespace

int run_sweep(const CommonOptions& opts) { return run_sweep_kind(opts, ExperimentKind::RandomTeacher); }

int run_pretrain_sweep(const CommonOptions& opts) {
  return run_sweep_kind(opts, ExperimentKind::SharedPretrain);
}

int run_diagnose(const CommonOptions& opts, const InstanceOptions& io) {
  const ExperimentConfig cfg = load(opts, ExperimentKind::Diagnose);
  const ProblemInstance inst = build_instance(cfg, io.norm_index, io.accuracy_index, io.teacher);
  const double eps = instance_epsilon(inst, derive_seed(cfg.master_seed, "diagnose-epsilon"));
  RhoOptions ro;
  ro.seed = derive_seed(cfg.master_seed, "diagnose-rho");
  const RhoReport rep = rho_report(inst, eps, ro);
  json report = {{"instance", {{"distribution", inst.dist.describe()},
                               {"theta0_norm", inst.theta0.norm()},
                               {"teacher_accuracy", cfg.teacher_accuracies[io.accuracy_index]},
                               {"teacher", io.teacher}}},
                 {"rho", to_json(rep)}};
  try {
    ScheduleOptions so;
    so.seed = derive_seed(cfg.master_seed, "diagnose-schedule");
    report["schedule"] = to_json(theorem_schedule(inst, eps, rep.norm_mode, so));
  } catch (const DiagnosticError& e) {
    report["schedule"] = {{"unavailable", e.what()}};
  } catch (const NumericalError& e) {
    report["schedule"] = {{"unavailable", e.what()}};
  }
  emit(report, opts, "diagnose");
  return 0;
}

int run_verify(const CommonOptions& opts, const VerifyOptions& v) {
  const ExperimentConfig cfg = load(opts, ExperimentKind::Verify);
  const std::uint64_t seed = cfg.master_seed;
  const Eigen::Index d = cfg.d;
  const auto n_mc = static_cast<Eigen::Index>(v.mc_samples);
  bool all_pass = true;
  json report;

  json audit = json::array();
  for (int i = 0; i < v.instances; ++i) {
    const bool iso = i % 2 == 0;
    const DistributionSpec dist =
        iso ? DistributionSpec::isotropic_gaussian(d)
            : DistributionSpec::gaussian(random_covariance(d, 10.0, 1.0, derive_seed(seed, "verify-cov", i)));
    const ProblemInstance inst = random_valid_instance(dist, cfg.beta, derive_seed(seed, "verify-instance", i));
    const AuditReport a = inequality_audit(inst, 0.0, n_mc, derive_seed(seed, "verify-audit", i));
    json checks;
    for (const auto& c : a.checks) checks[c.name] = {{"margin", c.margin}, {"std_error", c.std_error}, {"pass", c.pass}};
    audit.push_back({{"distribution", iso ? "isotropic" : "condition-10"}, {"rho", a.rho.rho}, {"checks", checks},
                     {"pass", a.all_pass()}});
    all_pass = all_pass && a.all_pass();
  }
  report["inequality_audit"] = audit;

  int arccos_pass = 0;
  double worst_z = 0.0;
  for (int i = 0; i < v.instances; ++i) {
    const Covariance cov = random_covariance(d, 10.0, 1.0, derive_seed(seed, "verify-arccos-cov", i));
    const DistributionSpec dist = DistributionSpec::gaussian(cov);
    const Vector phi = random_sigma_unit(cov, derive_seed(seed, "verify-phi", i));
    const Vector psi = random_sigma_unit(cov, derive_seed(seed, "verify-psi", i));
    const Estimate mc = zero_one_loss(phi, psi, dist, n_mc, derive_seed(seed, "verify-arccos", i));
    const double z = std::abs(mc.value - arccos_loss(phi, psi, cov)) / mc.std_error;
    worst_z = std::max(worst_z, z);
    arccos_pass += z < 3.0;
  }
  report["arccos_law"] = {{"pass", arccos_pass}, {"total", v.instances}, {"worst_z", worst_z}};
  all_pass = all_pass && arccos_pass == v.instances;

  for (ProductMarginal m : {ProductMarginal::StudentT10Standardized, ProductMarginal::SmoothedUniform}) {
    const DistributionSpec dist = DistributionSpec::symmetric_product(d, m);
    const Covariance& cov = dist.cov();
    double worst_gap = 0.0;
    for (int i = 0; i < v.instances; ++i) {
      const Vector phi = random_sigma_unit(cov, derive_seed(seed, "verify-product-phi", i));
      const Vector psi = random_sigma_unit(cov, derive_seed(seed, "verify-product-psi", i));
      const Estimate mc = zero_one_loss(phi, psi, dist, n_mc, derive_seed(seed, "verify-product", i));
      worst_gap = std::max(worst_gap, std::abs(mc.value - arccos_loss(phi, psi, cov)));
    }
    EllipticityConfig ec;
    ec.with_noise_floor = true;
    const Vector b1 = random_sigma_unit(cov, derive_seed(seed, "verify-eps-basis", 0));
    const Vector b2 = random_sigma_unit(cov, derive_seed(seed, "verify-eps-basis", 1));
    const EllipticityEstimate e = estimate_epsilon(dist, {b1, b2}, 400'000, ec, derive_seed(seed, "verify-eps"));
    report["product_" + to_string(m)] = {{"worst_arccos_gap", worst_gap},
                                         {"arccos_gap_pass", worst_gap < 0.02},
                                         {"epsilon_hat", e.epsilon_hat},
                                         {"noise_floor", *e.noise_floor}};
    all_pass = all_pass && worst_gap < 0.02;
  }
  report["all_pass"] = all_pass;
  emit(report, opts, "verify");
  return all_pass ? 0 : 4;
}

int run_flow(const CommonOptions& opts, const InstanceOptions& io, const FlowOptions& fo) {
  const ExperimentConfig cfg = load(opts, ExperimentKind::Diagnose);
  const ProblemInstance inst = build_instance(cfg, io.norm_index, io.accuracy_index, io.teacher);
  const double eps = instance_epsilon(inst, derive_seed(cfg.master_seed, "flow-epsilon"));
  ScheduleOptions so;
  so.seed = derive_seed(cfg.master_seed, "flow-schedule");
  const Schedule s = theorem_schedule(inst, eps, default_norm_mode(inst.dist), so);

  IntegratorConfig ic;
  ic.eta = s.eta;
  ic.seed = derive_seed(cfg.master_seed, "flow-field");
  const Trajectory flow = gradient_flow(inst, s.tau, ic);
  const Trajectory euler = euler_iterates(inst, s.eta, s.T, ic);
  SftConfig sc;
  sc.eta = s.eta;
  sc.steps = s.T;
  sc.batch_size = std::min<Eigen::Index>(s.batch_size, fo.max_batch);
  const std::uint64_t sgd_seed = derive_seed(cfg.master_seed, "flow-sgd");
  const Trajectory sgd = run_sft(inst, sc, sgd_seed);

  const double flow_gain = flow.steps.back().cos_sigma - flow.steps.front().cos_sigma;
  const double gap = max_matched_gap(flow, euler);
  const double sgd_dev = (sgd.steps.back().theta - euler.steps.back().theta).norm();
  json report = {{"schedule", to_json(s)},
                 {"flow", {{"cos_gain", flow_gain}, {"alpha_star", s.alpha_star},
                           {"pass", flow_gain >= s.alpha_star}}},
                 {"euler", {{"max_gap", gap}, {"bound", s.euler_gap_bound}, {"pass", gap <= s.euler_gap_bound}}},
                 {"sgd", {{"batch_size", sc.batch_size}, {"endpoint_distance", sgd_dev}, {"delta", s.delta},
                          {"within_delta", sgd_dev <= s.delta}, {"seed", sgd_seed}}}};
  emit(report, opts, "flow");
  if (!opts.out.empty()) {
    write_trajectory(std::filesystem::path(opts.out) / "flow.csv", flow);
    write_trajectory(std::filesystem::path(opts.out) / "euler.csv", euler);
    write_trajectory(std::filesystem::path(opts.out) / "sgd.csv", sgd);
  }
  return 0;
}

}  // namespace w2s::cli
