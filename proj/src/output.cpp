#include <cstdio>
#include <fstream>
#include <sstream>

#include "w2s/harness.hpp"

#ifndef W2S_VERSION
#define W2S_VERSION "0.0.0"
#endif

namespace w2s {

namespace {

const char* const kSummaryHeader =
    "run_id,teacher_id,teacher_accuracy,student_norm,learning_rate,peak_step,peak_gain_cos,"
    "peak_gain_accuracy,final_gain_cos,rho,epsilon_used,seed";

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  return out;
}

nlohmann::json row_json(const ResultRow& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"run_id", r.run_id},
          {"teacher_id", r.teacher_id},
          {"teacher_accuracy", num(r.teacher_accuracy)},
          {"student_norm", num(r.student_norm)},
          {"learning_rate", num(r.learning_rate)},
          {"peak_step", r.peak_step},
          {"peak_gain_cos", num(r.peak_gain_cos)},
          {"peak_gain_accuracy", num(r.peak_gain_accuracy)},
          {"final_gain_cos", num(r.final_gain_cos)},
          {"rho", num(r.rho)},
          {"epsilon_used", num(r.epsilon_used)},
          {"seed", r.seed}};
}

}  // namespace

OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw UsageError("unknown format '" + s + "' (expected csv or json)");
}

std::string code_version() { return W2S_VERSION; }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_summary(const std::filesystem::path& dir, const std::vector<ResultRow>& rows,
                   OutputFormat format) {
  std::filesystem::create_directories(dir);
  if (format == OutputFormat::Json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back(row_json(r));
    open_out(dir / "summary.json") << j.dump(2) << '\n';
    return;
  }
  auto out = open_out(dir / "summary.csv");
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.teacher_id << ',' << format_number(r.teacher_accuracy) << ','
        << format_number(r.student_norm) << ',' << format_number(r.learning_rate) << ','
        << r.peak_step << ',' << format_number(r.peak_gain_cos) << ','
        << format_number(r.peak_gain_accuracy) << ',' << format_number(r.final_gain_cos) << ','
        << format_number(r.rho) << ',' << format_number(r.epsilon_used) << ',' << r.seed << '\n';
  }
}

void write_trajectory(const std::filesystem::path& file, const Trajectory& traj) {
  auto out = open_out(file);
  out << "step,dot_theta_star,euclid_norm,sigma_norm,cos_sigma,accuracy\n";
  for (const auto& s : traj.steps)
    out << s.step << ',' << format_number(s.dot_theta_star) << ',' << format_number(s.euclid_norm)
        << ',' << format_number(s.sigma_norm) << ',' << format_number(s.cos_sigma) << ','
        << format_number(s.accuracy) << '\n';
}

void write_results(const std::filesystem::path& dir, const SweepResult& result, OutputFormat format) {
  write_summary(dir, result.rows, format);
  if (format == OutputFormat::Json && !result.rows.empty()) write_summary(dir, result.rows);
  const auto traj_dir = dir / "trajectories";
  std::filesystem::create_directories(traj_dir);
  for (std::size_t i = 0; i < result.rows.size(); ++i)
    write_trajectory(traj_dir / (result.rows[i].run_id + ".csv"), result.trajectories.at(i));
  open_out(dir / "manifest.json") << result.manifest.dump(2) << '\n';
}

std::vector<ResultRow> read_summary_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != kSummaryHeader) throw UsageError("unexpected summary header in " + file.string());
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 12) throw UsageError("malformed summary row: " + line);
    ResultRow r;
    r.run_id = f[0];
    r.teacher_id = std::stoi(f[1]);
    r.teacher_accuracy = std::stod(f[2]);
    r.student_norm = std::stod(f[3]);
    r.learning_rate = std::stod(f[4]);
    r.peak_step = std::stoll(f[5]);
    r.peak_gain_cos = std::stod(f[6]);
    r.peak_gain_accuracy = std::stod(f[7]);
    r.final_gain_cos = std::stod(f[8]);
    r.rho = std::stod(f[9]);
    r.epsilon_used = std::stod(f[10]);
    r.seed = std::stoull(f[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace w2s
