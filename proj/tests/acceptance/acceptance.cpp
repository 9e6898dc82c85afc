// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit status 1
// if any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "w2s/diagnostics.hpp"
#include "w2s/ellipticity.hpp"
#include "w2s/harness.hpp"
#include "w2s/rng.hpp"

using namespace w2s;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Context {
  int threads = 1;
  std::string out_dir;
  std::optional<SweepResult> fig1;
  std::optional<SweepResult> strength;

  ExperimentConfig fig1_config() const {
    ExperimentConfig c = default_config(ExperimentKind::RandomTeacher);
    c.threads = threads;
    return c;
  }

  ExperimentConfig strength_config() const {
    ExperimentConfig c = fig1_config();
    c.teacher_accuracies = {0.55, 0.60, 0.65, 0.75};
    c.n_teachers = 50;
    return c;
  }

  const SweepResult& fig1_sweep() {
    if (!fig1) {
      fig1 = run_random_teacher_sweep(fig1_config());
      if (!out_dir.empty()) write_results(out_dir + "/random-teacher", *fig1);
    }
    return *fig1;
  }

  const SweepResult& strength_sweep() {
    if (!strength) {
      strength = run_random_teacher_sweep(strength_config());
      if (!out_dir.empty()) write_results(out_dir + "/teacher-strength", *strength);
    }
    return *strength;
  }
};

// Rows of the default sweep at one student norm.
std::vector<std::size_t> rows_with_norm(const SweepResult& r, double norm) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < r.rows.size(); ++i)
    if (r.rows[i].student_norm == norm) out.push_back(i);
  return out;
}

Outcome universal_improvement(Context& ctx) {
  const SweepResult& r = ctx.fig1_sweep();
  bool pass = true;
  std::string detail;
  for (double norm : ctx.fig1_config().student_norms) {
    int good = 0, total = 0;
    double worst = 1.0;
    for (std::size_t i : rows_with_norm(r, norm)) {
      ++total;
      good += r.rows[i].peak_gain_cos > 0.005;
      worst = std::min(worst, r.rows[i].peak_gain_cos);
    }
    pass = pass && total == 100 && good == 100;
    detail += fmt("norm %g: %d/%d (min gain %.4f); ", norm, good, total, worst);
  }
  return {pass, detail};
}

Outcome teacher_strength(Context& ctx) {
  std::map<std::pair<double, double>, std::pair<double, int>> cells;  // (norm, acc) -> (sum, count)
  auto add = [&](const ResultRow& row) {
    auto& c = cells[{row.student_norm, row.teacher_accuracy}];
    c.first += row.peak_gain_accuracy;
    ++c.second;
  };
  for (const auto& row : ctx.strength_sweep().rows) add(row);
  for (const auto& row : ctx.fig1_sweep().rows) add(row);

  bool pass = true;
  std::string detail;
  for (double norm : ctx.fig1_config().student_norms) {
    double prev = 0.0;
    detail += fmt("norm %g:", norm);
    for (double acc : {0.55, 0.60, 0.65, 0.70, 0.75}) {
      const auto& [sum, n] = cells[{norm, acc}];
      const double mean = n > 0 ? sum / n : 0.0;
      pass = pass && n >= 50 && mean > 0.0 && mean >= prev;
      prev = mean;
      detail += fmt(" %.4f", mean);
    }
    detail += "; ";
  }
  return {pass, detail};
}

Outcome norm_independence(Context& ctx) {
  const SweepResult& r = ctx.fig1_sweep();
  double lo = INFINITY, hi = -INFINITY;
  std::string detail = "mean peak cos gain:";
  for (double norm : ctx.fig1_config().student_norms) {
    double sum = 0.0;
    const auto idx = rows_with_norm(r, norm);
    for (std::size_t i : idx) sum += r.rows[i].peak_gain_cos;
    const double mean = sum / static_cast<double>(idx.size());
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
    detail += fmt(" %g -> %.5f", norm, mean);
  }
  const double ratio = hi / lo;
  return {lo > 0.0 && ratio <= 1.5, detail + fmt("; ratio %.4f", ratio)};
}

Outcome shared_pretraining(Context& ctx) {
  ExperimentConfig cfg = default_config(ExperimentKind::SharedPretrain);
  cfg.threads = ctx.threads;
  const SweepResult r = run_shared_pretraining(cfg);
  if (!ctx.out_dir.empty()) write_results(ctx.out_dir + "/shared-pretrain", r);
  const double student = r.manifest["student_accuracy"];
  const std::vector<double> teachers = r.manifest["teacher_accuracies"];
  double mean = 0.0;
  for (double a : teachers) mean += a;
  mean /= static_cast<double>(teachers.size());
  const auto [mn, mx] = std::minmax_element(teachers.begin(), teachers.end());
  int positive = 0;
  for (const auto& row : r.rows) positive += row.peak_gain_cos > 0.0;
  const bool pass = std::abs(student - 0.80) <= 0.05 && std::abs(mean - 0.63) <= 0.05 &&
                    teachers.size() == 100 && positive >= 95;
  return {pass, fmt("student %.4f; teachers mean %.4f (range %.4f..%.4f); positive gain %d/%zu", student,
                    mean, *mn, *mx, positive, r.rows.size())};
}

Outcome arccos_law(Context&) {
  RandomStream rng(derive_seed(2024, "arccos-law"));
  int good = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(9));
    const double cond = 1.0 + 19.0 * rng.uniform();
    const auto dist = DistributionSpec::gaussian(random_covariance(d, cond, 1.0, rng.next_u64()));
    Vector phi(d), psi(d);
    rng.fill_normal(phi);
    rng.fill_normal(psi);
    const double p = arccos_loss(phi, psi, dist.cov());
    const Eigen::Index n = 1'000'000;
    const double mc = zero_one_loss(phi, psi, dist, n, rng.next_u64()).value;
    const double z = std::abs(mc - p) / std::sqrt(p * (1 - p) / static_cast<double>(n));
    good += z < 3.0;
    worst = std::max(worst, z);
  }
  return {good == 50, fmt("%d/50 within 3 SE (max %.2f SE)", good, worst)};
}

Outcome approximate_arccos_law(Context&) {
  bool pass = true;
  std::string detail;
  for (auto m : {ProductMarginal::StudentT10Standardized, ProductMarginal::SmoothedUniform}) {
    const auto dist = DistributionSpec::symmetric_product(100, m);
    RandomStream rng(derive_seed(2024, "product-pairs", static_cast<std::uint64_t>(m)));
    std::vector<std::pair<Vector, Vector>> pairs;
    for (int i = 0; i < 50; ++i) {
      Vector phi(100), psi(100);
      rng.fill_normal(phi);
      rng.fill_normal(psi);
      // Correlate half of the pairs so the cosines span (-1, 1).
      if (i % 2) psi = phi + (0.2 + rng.uniform()) * psi / std::sqrt(100.0);
      pairs.emplace_back(phi, psi);
    }
    const auto est = zero_one_losses(pairs, dist, 1'000'000, rng.next_u64());
    double worst = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      worst = std::max(worst, std::abs(est[i].value - arccos_loss(pairs[i].first, pairs[i].second, dist.cov())));
    pass = pass && worst < 0.02;
    detail += fmt("%s: max gap %.4f; ", to_string(m).c_str(), worst);
  }
  return {pass, detail};
}

Outcome cosine_calculus(Context&) {
  RandomStream rng(derive_seed(2024, "cosine-calculus"));
  int good = 0;
  double worst_g = 0.0, worst_h = 0.0, worst_ratio = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(29));
    Matrix a(d, d);
    rng.fill_normal(a);
    const Covariance cov(Matrix(a * a.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d)));
    Vector u(d), v(d);
    rng.fill_normal(u);
    rng.fill_normal(v);
    const double h = 1e-5;
    Vector fd_g(d);
    Matrix fd_h(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      Vector up = u, um = u;
      up(j) += h;
      um(j) -= h;
      fd_g(j) = (cos_sigma(up, v, cov) - cos_sigma(um, v, cov)) / (2 * h);
      fd_h.col(j) = (cos_grad(up, v, cov) - cos_grad(um, v, cov)) / (2 * h);
    }
    const Vector g = cos_grad(u, v, cov);
    const Matrix H = cos_hess(u, v, cov);
    const double eg = (fd_g - g).norm() / g.norm();
    const double eh = (fd_h - H).norm() / H.norm();
    const double top = Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().cwiseAbs().maxCoeff();
    const double un = norm_sigma(u, cov);
    const double ratio = top / (2.0 / std::sqrt(3.0) * cov.lambda_max() / (un * un));
    good += eg < 1e-6 && eh < 1e-4 && ratio <= 1.0 + 1e-12;
    worst_g = std::max(worst_g, eg);
    worst_h = std::max(worst_h, eh);
    worst_ratio = std::max(worst_ratio, ratio);
  }
  return {good == 100, fmt("%d/100; max rel err grad %.2e, Hessian %.2e; max |H| / bound %.4f", good, worst_g,
                           worst_h, worst_ratio)};
}

Outcome inequality_audit_check(Context&) {
  std::map<std::string, int> passes;
  int all = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const bool iso = i % 2 == 0;
    const auto dist = iso ? DistributionSpec::isotropic_gaussian(10)
                          : DistributionSpec::gaussian(random_covariance(10, 10.0, 1.0, 500 + i));
    const ProblemInstance inst = random_valid_instance(dist, 1.0, derive_seed(2024, "audit", i));
    const AuditReport a = inequality_audit(inst, 0.0, 1'000'000, derive_seed(2024, "audit-mc", i));
    for (const auto& c : a.checks) passes[c.name] += c.pass;
    all += a.all_pass();
  }
  std::string detail;
  for (const auto& [name, n] : passes) detail += fmt("%s %d/100; ", name.c_str(), n);
  return {all == 100 && passes.size() == 5, detail};
}

// Desk-scale instances: small d, a strong teacher and a weak, small student.
ProblemInstance desk_instance(std::uint64_t seed) {
  RandomStream rng(derive_seed(seed, "desk-instance"));
  const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(2));
  ProblemInstance inst;
  inst.dist = DistributionSpec::isotropic_gaussian(d);
  inst.theta_star = random_sigma_unit(inst.cov(), rng.next_u64());
  inst.psi = make_unit_with_cos(inst.theta_star, 0.85 + 0.1 * rng.uniform(), inst.cov(), rng.next_u64());
  const Vector u = make_unit_with_cos(inst.theta_star, 0.1 + 0.4 * rng.uniform(), inst.cov(), rng.next_u64());
  inst.theta0 = (0.3 + 0.7 * rng.uniform()) * u / u.norm();
  return inst;
}

Outcome theorem_chain(Context&) {
  int flow_ok = 0, euler_ok = 0, sgd_ok = 0, sgd_total = 0, instances = 0;
  double min_flow_ratio = INFINITY, max_gap_ratio = 0.0;
  for (std::uint64_t i = 0; instances < 20 && i < 1000; ++i) {
    const ProblemInstance inst = desk_instance(derive_seed(2024, "chain", i));
    if (!(rho_report(inst, 0.0).rho > 0.0)) continue;
    ++instances;
    const Schedule s = theorem_schedule(inst, 0.0, NormMode::Euclidean);
    IntegratorConfig ic;
    ic.eta = s.eta;
    const Trajectory flow = gradient_flow(inst, s.tau, ic);
    const double gain = flow.steps.back().cos_sigma - flow.steps.front().cos_sigma;
    flow_ok += gain >= s.alpha_star;
    min_flow_ratio = std::min(min_flow_ratio, gain / s.alpha_star);

    const Trajectory euler = euler_iterates(inst, s.eta, s.T);
    const double gap = max_matched_gap(flow, euler);
    euler_ok += gap <= s.euler_gap_bound;
    max_gap_ratio = std::max(max_gap_ratio, gap / s.euler_gap_bound);

    SftConfig sc;
    sc.eta = s.eta;
    sc.steps = s.T;
    sc.batch_size = s.batch_size;
    sc.eval_every = s.T;
    for (std::uint64_t r = 0; r < 5; ++r) {
      const Trajectory sgd = run_sft(inst, sc, derive_seed(2024, "chain-sgd", 5 * i + r));
      ++sgd_total;
      sgd_ok += (sgd.steps.back().theta - euler.steps.back().theta).norm() <= s.delta;
    }
  }
  const bool pass = instances == 20 && flow_ok == 20 && euler_ok == 20 && sgd_total == 100 && sgd_ok >= 85;
  return {pass, fmt("%d instances; flow gain >= alpha* %d/20 (min ratio %.3f); Euler gap within bound %d/20 "
                    "(max ratio %.3f); SGD within delta %d/%d",
                    instances, flow_ok, min_flow_ratio, euler_ok, max_gap_ratio, sgd_ok, sgd_total)};
}

Outcome unlearning(Context& ctx) {
  const SweepResult& r = ctx.fig1_sweep();
  int hits = 0, total = 0;
  for (std::size_t i : rows_with_norm(r, 8.0)) {
    ++total;
    const auto& st = r.trajectories[i].steps;
    bool found = false;
    for (std::size_t k = 1; k < st.size() && !found; ++k)
      found = st[k].dot_theta_star < st[k - 1].dot_theta_star && st[k].cos_sigma > st[k - 1].cos_sigma;
    hits += found;
  }
  return {total == 100 && hits >= 90, fmt("%d/%d norm-8 runs", hits, total)};
}

// Extends each best run to ten times its peak step and compares the cosine there
// with the peak.
Outcome overtraining(Context& ctx) {
  const ExperimentConfig cfg = ctx.fig1_config();
  const SweepResult& r = ctx.fig1_sweep();
  std::map<int, std::vector<std::size_t>> by_teacher;
  for (std::size_t i = 0; i < r.rows.size(); ++i) by_teacher[r.rows[i].teacher_id].push_back(i);

  std::map<double, std::pair<int, int>> counts;  // norm -> (hurt, total)
  for (const auto& [t, idx] : by_teacher) {
    const ProblemInstance base = build_instance(cfg, 0, 0, t);
    std::vector<SftMember> members;
    std::int64_t horizon = 0;
    for (std::size_t i : idx) {
      members.push_back({r.rows[i].student_norm * base.theta0 / base.theta0.norm(), r.rows[i].learning_rate});
      horizon = std::max(horizon, 10 * r.rows[i].peak_step);
    }
    SftConfig sc;
    sc.steps = std::max<std::int64_t>(horizon, cfg.eval_every);
    sc.batch_size = cfg.batch_size;
    sc.eval_every = cfg.eval_every;
    sc.keep_iterates = false;
    const auto trajs = run_sft_group(base, members, sc, r.rows[idx.front()].seed);
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const ResultRow& row = r.rows[idx[m]];
      const std::int64_t end = 10 * row.peak_step;
      double peak = -INFINITY, final_cos = NAN;
      for (const auto& rec : trajs[m].steps) {
        if (rec.step > end) break;
        peak = std::max(peak, rec.cos_sigma);
        final_cos = rec.cos_sigma;
      }
      auto& c = counts[row.student_norm];
      c.first += final_cos < peak;
      ++c.second;
    }
  }
  bool pass = true;
  std::string detail;
  for (const auto& [norm, c] : counts) {
    pass = pass && c.second == 100 && c.first >= 95;
    detail += fmt("norm %g: %d/%d; ", norm, c.first, c.second);
  }
  return {pass, detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  Context ctx;
  app.add_option("--only", only, "Run only these criteria (1-11)");
  app.add_option("--threads", ctx.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", ctx.out_dir, "Write sweep outputs under this directory");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "universal-improvement", universal_improvement},
      {2, "teacher-strength-monotonicity", teacher_strength},
      {3, "norm-near-independence", norm_independence},
      {4, "shared-pretraining", shared_pretraining},
      {5, "arccos-law", arccos_law},
      {6, "approximate-arccos-law", approximate_arccos_law},
      {7, "cosine-calculus", cosine_calculus},
      {8, "inequality-audit", inequality_audit_check},
      {9, "theorem-chain", theorem_chain},
      {10, "unlearning", unlearning},
      {11, "overtraining", overtraining},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %2d %-30s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
