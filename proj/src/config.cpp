#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "w2s/harness.hpp"

namespace w2s {

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) throw ConfigError(key, "expected a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key, "cannot parse '" + node.Scalar() + "'");
  }
}

std::vector<double> real_list(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar()) return {scalar<double>(node, key)};
  if (!node.IsSequence()) throw ConfigError(key, "expected a list of numbers");
  std::vector<double> out;
  for (const auto& item : node) out.push_back(scalar<double>(item, key));
  return out;
}

bool in_open_half(double a) { return a > 0.5 && a < 1.0; }

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::RandomTeacher: return "random-teacher";
    case ExperimentKind::SharedPretrain: return "shared-pretrain";
    case ExperimentKind::Diagnose: return "diagnose";
    case ExperimentKind::Verify: return "verify";
  }
  return "unknown";
}

ExperimentKind parse_experiment(const std::string& s) {
  for (auto k : {ExperimentKind::RandomTeacher, ExperimentKind::SharedPretrain,
                 ExperimentKind::Diagnose, ExperimentKind::Verify})
    if (to_string(k) == s) return k;
  throw ConfigError("experiment", "unknown experiment '" + s + "'");
}

DistributionSpec ExperimentConfig::distribution() const {
  switch (dist.kind) {
    case DistKind::IsotropicGaussian: return DistributionSpec::isotropic_gaussian(d);
    case DistKind::GaussianWithCovariance:
      return DistributionSpec::gaussian(random_covariance(d, dist.condition, dist.lambda_max, dist.seed));
    case DistKind::SymmetricProduct: return DistributionSpec::symmetric_product(d, dist.marginal);
  }
  throw ConfigError("dist.kind", "unsupported distribution");
}

void ExperimentConfig::validate() const {
  if (d < 1) throw ConfigError("d", "must be positive");
  if (!in_open_half(student_accuracy)) throw ConfigError("student_accuracy", "must lie in (0.5, 1)");
  if (student_norms.empty()) throw ConfigError("student_norms", "must be nonempty");
  for (double n : student_norms)
    if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("student_norms", "entries must be positive");
  if (teacher_accuracies.empty()) throw ConfigError("teacher_accuracies", "must be nonempty");
  for (double a : teacher_accuracies)
    if (!in_open_half(a)) throw ConfigError("teacher_accuracies", "entries must lie in (0.5, 1)");
  if (n_teachers < 1) throw ConfigError("n_teachers", "must be positive");
  if (learning_rates.empty()) throw ConfigError("learning_rates", "must be nonempty");
  for (double lr : learning_rates)
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning_rates", "entries must be positive");
  if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (max_steps < 1) throw ConfigError("max_steps", "must be positive");
  if (eval_every < 1) throw ConfigError("eval_every", "must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta", "must be positive");
  if (threads < 1) throw ConfigError("threads", "must be positive");
  if (dist.kind == DistKind::GaussianWithCovariance) {
    if (!(dist.condition >= 1.0)) throw ConfigError("dist.condition", "must be >= 1");
    if (!(dist.lambda_max > 0.0)) throw ConfigError("dist.lambda_max", "must be positive");
  }
  if (experiment == ExperimentKind::SharedPretrain && !pretrain)
    throw ConfigError("pretrain", "shared-pretrain requires the pretrain block");
  if (pretrain) {
    const PretrainConfig& p = *pretrain;
    if (p.n_points < 1) throw ConfigError("pretrain.n_points", "must be positive");
    if (p.epochs < 0) throw ConfigError("pretrain.epochs", "must be nonnegative");
    if (!(p.lr > 0.0)) throw ConfigError("pretrain.lr", "must be positive");
    if (p.subset_points < 1 || p.subset_points > p.n_points)
      throw ConfigError("pretrain.subset_points", "must lie in [1, n_points]");
    if (p.subset_epochs < 0) throw ConfigError("pretrain.subset_epochs", "must be nonnegative");
    if (p.minibatch < 1) throw ConfigError("pretrain.minibatch", "must be positive");
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = {{"experiment", to_string(experiment)},
                      {"d", d},
                      {"dist.kind", to_string(dist.kind)},
                      {"student_accuracy", student_accuracy},
                      {"student_norms", student_norms},
                      {"teacher_accuracies", teacher_accuracies},
                      {"n_teachers", n_teachers},
                      {"learning_rates", learning_rates},
                      {"batch_size", batch_size},
                      {"max_steps", max_steps},
                      {"eval_every", eval_every},
                      {"beta", beta},
                      {"master_seed", master_seed}};
  if (dist.kind == DistKind::SymmetricProduct) j["dist.marginal"] = to_string(dist.marginal);
  if (dist.kind == DistKind::GaussianWithCovariance) {
    j["dist.condition"] = dist.condition;
    j["dist.lambda_max"] = dist.lambda_max;
    j["dist.seed"] = dist.seed;
  }
  if (pretrain) {
    j["pretrain.n_points"] = pretrain->n_points;
    j["pretrain.epochs"] = pretrain->epochs;
    j["pretrain.lr"] = pretrain->lr;
    j["pretrain.subset_points"] = pretrain->subset_points;
    j["pretrain.subset_epochs"] = pretrain->subset_epochs;
    j["pretrain.minibatch"] = pretrain->minibatch;
  }
  return j;
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  if (kind == ExperimentKind::SharedPretrain) {
    c.pretrain = PretrainConfig{};
    c.batch_size = 1000;
    c.student_norms = {1.0};
  }
  return c;
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config", std::string("YAML parse error: ") + e.what());
  }
  if (root.IsNull()) return default_config(ExperimentKind::RandomTeacher);
  if (!root.IsMap()) throw ConfigError("config", "top level must be a mapping");

  ExperimentKind kind = ExperimentKind::RandomTeacher;
  if (const auto e = root["experiment"]) kind = parse_experiment(scalar<std::string>(e, "experiment"));
  ExperimentConfig c = default_config(kind);
  auto pre = [&c]() -> PretrainConfig& {
    if (!c.pretrain) c.pretrain = PretrainConfig{};
    return *c.pretrain;
  };

  using Setter = std::function<void(const YAML::Node&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"experiment", [](const YAML::Node&, const std::string&) {}},
      {"d", [&](auto& n, auto& k) { c.d = scalar<Eigen::Index>(n, k); }},
      {"dist.kind", [&](auto& n, auto& k) {
         try {
           c.dist.kind = parse_dist_kind(scalar<std::string>(n, k));
         } catch (const UsageError& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {"dist.marginal", [&](auto& n, auto& k) {
         try {
           c.dist.marginal = parse_marginal(scalar<std::string>(n, k));
         } catch (const UsageError& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {"dist.condition", [&](auto& n, auto& k) { c.dist.condition = scalar<double>(n, k); }},
      {"dist.lambda_max", [&](auto& n, auto& k) { c.dist.lambda_max = scalar<double>(n, k); }},
      {"dist.seed", [&](auto& n, auto& k) { c.dist.seed = scalar<std::uint64_t>(n, k); }},
      {"student_accuracy", [&](auto& n, auto& k) { c.student_accuracy = scalar<double>(n, k); }},
      {"student_norms", [&](auto& n, auto& k) { c.student_norms = real_list(n, k); }},
      {"teacher_accuracies", [&](auto& n, auto& k) { c.teacher_accuracies = real_list(n, k); }},
      {"n_teachers", [&](auto& n, auto& k) { c.n_teachers = scalar<int>(n, k); }},
      {"learning_rates", [&](auto& n, auto& k) { c.learning_rates = real_list(n, k); }},
      {"batch_size", [&](auto& n, auto& k) { c.batch_size = scalar<Eigen::Index>(n, k); }},
      {"max_steps", [&](auto& n, auto& k) { c.max_steps = scalar<std::int64_t>(n, k); }},
      {"eval_every", [&](auto& n, auto& k) { c.eval_every = scalar<std::int64_t>(n, k); }},
      {"beta", [&](auto& n, auto& k) { c.beta = scalar<double>(n, k); }},
      {"master_seed", [&](auto& n, auto& k) { c.master_seed = scalar<std::uint64_t>(n, k); }},
      {"pretrain.n_points", [&](auto& n, auto& k) { pre().n_points = scalar<Eigen::Index>(n, k); }},
      {"pretrain.epochs", [&](auto& n, auto& k) { pre().epochs = scalar<int>(n, k); }},
      {"pretrain.lr", [&](auto& n, auto& k) { pre().lr = scalar<double>(n, k); }},
      {"pretrain.subset_points",
       [&](auto& n, auto& k) { pre().subset_points = scalar<Eigen::Index>(n, k); }},
      {"pretrain.subset_epochs", [&](auto& n, auto& k) { pre().subset_epochs = scalar<int>(n, k); }},
      {"pretrain.minibatch", [&](auto& n, auto& k) { pre().minibatch = scalar<Eigen::Index>(n, k); }},
  };
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(kv.second, key);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace w2s
