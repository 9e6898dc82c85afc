#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2s/logistic.hpp"

namespace w2s {

enum class TrajectoryKind { Flow, Euler, Sgd };
std::string to_string(TrajectoryKind kind);

struct StepRecord {
  std::int64_t step = 0;  // iteration index (internal step for flow)
  double time = 0.0;      // eta * step, or integration time for flow
  Vector theta;           // empty when iterates are not kept
  double dot_theta_star = 0.0;
  double euclid_norm = 0.0;
  double sigma_norm = 0.0;
  double cos_sigma = 0.0;
  double accuracy = 0.0;
};

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::Sgd;
  std::vector<StepRecord> steps;
  nlohmann::json config_echo;
  std::uint64_t seed = 0;                // sgd only
  Eigen::Index accuracy_mc_samples = 0;  // 0 when accuracy uses the arccos law
};

// Metrics of theta against the instance's theta_star.
StepRecord measure(const Vector& theta, const ProblemInstance& inst, std::int64_t step, double time,
                   bool keep_theta = true, std::uint64_t accuracy_seed = 0);

inline constexpr Eigen::Index kAccuracyMcSamples = 100'000;
inline constexpr Eigen::Index kFlowPoolSamples = 1'000'000;

// -grad l as a deterministic vector field: semi-analytic for Gaussian data,
// a fixed sample pool otherwise.
class PopulationField {
 public:
  explicit PopulationField(const ProblemInstance& inst, Eigen::Index pool_samples = kFlowPoolSamples,
                           std::uint64_t seed = 0);
  Vector gradient(const Vector& theta) const;

 private:
  const ProblemInstance* inst_;
  Eigen::Index pool_samples_;
  std::uint64_t seed_;
  std::shared_ptr<const SampleBatch> pool_;
  std::shared_ptr<const Vector> labels_;
};

struct IntegratorConfig {
  double eta = 0.0;                   // schedule step; h = min(eta, tau / 1000) when > 0
  std::optional<double> step;         // overrides the rule above
  Eigen::Index pool_samples = kFlowPoolSamples;
  std::uint64_t seed = 0;             // pool seed for non-Gaussian fields
  bool keep_iterates = true;
};

// Classical RK4 on theta' = -grad l(theta) over [0, tau].
Trajectory gradient_flow(const ProblemInstance& inst, double tau, const IntegratorConfig& cfg = {});

// theta_{t+1} = theta_t - eta grad l(theta_t), T steps.
Trajectory euler_iterates(const ProblemInstance& inst, double eta, std::int64_t T,
                          const IntegratorConfig& cfg = {});

struct SftConfig {
  double eta = 0.0;
  std::int64_t steps = 0;
  Eigen::Index batch_size = 0;
  std::int64_t eval_every = 0;  // 0: 1 for steps <= 1e4, else ceil(steps / 1e4)
  bool keep_iterates = true;
  // Gaussian data normally uses the projected kernel; this forces explicit
  // batches and pseudo-labels.
  bool force_literal = false;
};

std::int64_t default_eval_every(std::int64_t steps);

Trajectory run_sft(const ProblemInstance& inst, const SftConfig& cfg, std::uint64_t seed);

struct SftMember {
  Vector theta0;
  double eta = 0.0;
};

// SFT runs that share theta_star, psi, beta, the distribution, and every random
// draw. Member i is distributed exactly as run_sft with its own theta0 and eta,
// and matches run_sft bit for bit when the group has one member.
std::vector<Trajectory> run_sft_group(const ProblemInstance& base, const std::vector<SftMember>& members,
                                      const SftConfig& cfg, std::uint64_t seed);

struct PeakGain {
  std::size_t best_index = 0;
  std::int64_t best_step = 0;
  double gain_cos = 0.0;
  double gain_accuracy = 0.0;
};

PeakGain peak_gain(const Trajectory& traj);

// max over records of b of |theta_a(t) - theta_b(t)|, pairing records with equal
// times. Both trajectories need kept iterates and every time in b must occur in a.
double max_matched_gap(const Trajectory& a, const Trajectory& b);

}  // namespace w2s
