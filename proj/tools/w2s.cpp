#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "w2s/errors.hpp"

int main(int argc, char** argv) {
  using namespace w2s::cli;
  CLI::App app{"Weak-to-strong logistic regression laboratory"};
  app.require_subcommand(1);

  CommonOptions common;
  InstanceOptions inst;
  VerifyOptions verify;
  FlowOptions flow;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "YAML config file");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Override master_seed");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", common.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
  };
  auto add_instance = [&](CLI::App* sub) {
    sub->add_option("--norm-index", inst.norm_index, "Index into student_norms");
    sub->add_option("--accuracy-index", inst.accuracy_index, "Index into teacher_accuracies");
    sub->add_option("--teacher", inst.teacher, "Teacher index");
  };

  auto* sweep = app.add_subcommand("sweep", "Random-teacher sweep");
  add_common(sweep);
  auto* pre = app.add_subcommand("pretrain-sweep", "Shared-pretraining sweep");
  add_common(pre);
  auto* diag = app.add_subcommand("diagnose", "rho report and theorem schedule for one instance");
  add_common(diag);
  add_instance(diag);
  auto* ver = app.add_subcommand("verify", "Inequality audit, arccos law and ellipticity suites");
  add_common(ver);
  ver->add_option("--instances", verify.instances, "Random instances per suite")
      ->check(CLI::PositiveNumber);
  ver->add_option("--mc-samples", verify.mc_samples, "Monte Carlo samples")
      ->check(CLI::PositiveNumber);
  auto* fl = app.add_subcommand("flow", "Gradient flow vs Euler vs SGD on one instance");
  add_common(fl);
  add_instance(fl);
  fl->add_option("--max-batch", flow.max_batch, "Cap on the SGD batch size")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sweep) return run_sweep(common);
    if (*pre) return run_pretrain_sweep(common);
    if (*diag) return run_diagnose(common, inst);
    if (*ver) return run_verify(common, verify);
    if (*fl) return run_flow(common, inst, flow);
  } catch (const w2s::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const w2s::DiagnosticError& e) {
    std::cerr << "diagnostic: " << e.what() << " [" << e.inequality() << "]\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
