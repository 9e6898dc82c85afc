#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace w2s::cli {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string format = "csv";
};

struct InstanceOptions {
  std::size_t norm_index = 0;
  std::size_t accuracy_index = 0;
  int teacher = 0;
};

struct VerifyOptions {
  int instances = 20;
  long long mc_samples = 1'000'000;
};

struct FlowOptions {
  long long max_batch = 1'000'000;
};

int run_sweep(const CommonOptions& opts);
int run_pretrain_sweep(const CommonOptions& opts);
int run_diagnose(const CommonOptions& opts, const InstanceOptions& inst);
int run_verify(const CommonOptions& opts, const VerifyOptions& verify);
int run_flow(const CommonOptions& opts, const InstanceOptions& inst, const FlowOptions& flow);

}  // namespace w2s::cli
