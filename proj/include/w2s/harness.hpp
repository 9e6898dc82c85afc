#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2s/dynamics.hpp"

namespace w2s {

enum class ExperimentKind { RandomTeacher, SharedPretrain, Diagnose, Verify };
std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment(const std::string& s);

struct PretrainConfig {
  Eigen::Index n_points = 5000;
  int epochs = 25;
  double lr = 0.1;
  Eigen::Index subset_points = 1000;
  int subset_epochs = 10;
  Eigen::Index minibatch = 5000;  // full batch
};

struct DistConfig {
  DistKind kind = DistKind::IsotropicGaussian;
  ProductMarginal marginal = ProductMarginal::StudentT10Standardized;
  double condition = 10.0;   // gaussian-with-covariance only
  double lambda_max = 1.0;   // gaussian-with-covariance only
  std::uint64_t seed = 1;    // covariance eigenbasis seed
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::RandomTeacher;
  Eigen::Index d = 100;
  DistConfig dist;
  double student_accuracy = 0.8;
  std::vector<double> student_norms{0.5, 2.0, 8.0};
  std::vector<double> teacher_accuracies{0.7};
  int n_teachers = 100;
  std::vector<double> learning_rates{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  Eigen::Index batch_size = 10000;
  std::int64_t max_steps = 5000;
  std::int64_t eval_every = 5;
  double beta = 1.0;
  std::uint64_t master_seed = 0;
  std::optional<PretrainConfig> pretrain;
  int threads = 1;  // not part of the results; never echoed into seeds

  DistributionSpec distribution() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
};

ExperimentConfig default_config(ExperimentKind kind);
// Flat YAML mapping whose keys mirror the field names (dist.*, pretrain.* for
// the nested blocks). Unset keys keep the defaults of the declared experiment.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ResultRow {
  std::string run_id;
  int teacher_id = 0;
  double teacher_accuracy = 0.0;
  double student_norm = 0.0;
  double learning_rate = 0.0;
  std::int64_t peak_step = 0;
  double peak_gain_cos = 0.0;
  double peak_gain_accuracy = 0.0;
  double final_gain_cos = 0.0;
  double rho = 0.0;
  double epsilon_used = 0.0;
  std::uint64_t seed = 0;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<Trajectory> trajectories;  // best-learning-rate trajectory per row
  nlohmann::json manifest;
};

std::string run_id(std::size_t norm_index, std::size_t accuracy_index, int teacher);

// Seeds and directions shared by the sweep and by single-instance commands.
Vector make_theta_star(const ExperimentConfig& cfg, const DistributionSpec& dist);
std::uint64_t teacher_seed(const ExperimentConfig& cfg, double teacher_accuracy, int teacher);
Vector make_teacher(const ExperimentConfig& cfg, const DistributionSpec& dist, const Vector& theta_star,
                    double teacher_accuracy, int teacher);
// Student direction with the configured accuracy, unit Euclidean norm.
Vector make_student_direction(const ExperimentConfig& cfg, const DistributionSpec& dist,
                              const Vector& theta_star);
ProblemInstance build_instance(const ExperimentConfig& cfg, std::size_t norm_index = 0,
                               std::size_t accuracy_index = 0, int teacher = 0);

SweepResult run_random_teacher_sweep(const ExperimentConfig& cfg);

// Minibatch logistic SGD (beta = 1) from an N(0, 1/d) initialization with
// per-epoch reshuffling.
Vector train_logistic(const SampleBatch& x, const Vector& y, int epochs, double lr,
                      Eigen::Index minibatch, std::uint64_t seed);
Vector pretrain(const DistributionSpec& dist, const Vector& theta_star, Eigen::Index n_points,
                int epochs, double lr, Eigen::Index minibatch, std::uint64_t seed);

SweepResult run_shared_pretraining(const ExperimentConfig& cfg);

// Re-runs one summary row's best trajectory from (cfg, row).
Trajectory replay_row(const ExperimentConfig& cfg, const ResultRow& row);

enum class OutputFormat { Csv, Json };
OutputFormat parse_format(const std::string& s);

std::string code_version();
std::string format_number(double v);  // 9 significant digits
void write_summary(const std::filesystem::path& dir, const std::vector<ResultRow>& rows,
                   OutputFormat format = OutputFormat::Csv);
void write_trajectory(const std::filesystem::path& file, const Trajectory& traj);
void write_results(const std::filesystem::path& dir, const SweepResult& result,
                   OutputFormat format = OutputFormat::Csv);
std::vector<ResultRow> read_summary_csv(const std::filesystem::path& file);

}  // namespace w2s
