#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace w2s {

// Bad arguments: dimension mismatch, zero vectors, out-of-range parameters.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A quantity the computation depends on is degenerate (e.g. a gradient norm
// indistinguishable from zero).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A named inequality precondition of the analysis does not hold.
class DiagnosticError : public std::runtime_error {
 public:
  DiagnosticError(std::string inequality, const std::string& what)
      : std::runtime_error(what), inequality_(std::move(inequality)) {}
  const std::string& inequality() const { return inequality_; }

 private:
  std::string inequality_;
};

// A dynamical system produced a non-finite state.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, std::int64_t step,
                   Eigen::VectorXd last_good, std::uint64_t seed = 0)
      : std::runtime_error(what),
        step_(step),
        last_good_(std::move(last_good)),
        seed_(seed) {}
  std::int64_t step() const { return step_; }
  const Eigen::VectorXd& last_good() const { return last_good_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::int64_t step_;
  Eigen::VectorXd last_good_;
  std::uint64_t seed_;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace w2s
