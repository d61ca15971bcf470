#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dynbc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable tag used by the CLI error report.
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

class SizeMismatch : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "size_mismatch"; }
};

class NonElliptic : public Error {
 public:
  NonElliptic(std::string where, std::size_t index, double value)
      : Error("non-elliptic coefficient at " + where + " " + std::to_string(index) +
              " (eigenvalue " + std::to_string(value) + ")"),
        where_(std::move(where)),
        index_(index) {}
  const char* kind() const noexcept override { return "non_elliptic"; }
  const std::string& where() const noexcept { return where_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string where_;
  std::size_t index_;
};

class SolverDiverged : public Error {
 public:
  SolverDiverged(int step, double residual, double bound)
      : Error("linear solve did not reach tolerance at step " + std::to_string(step) +
              " (residual " + std::to_string(residual) + " > " + std::to_string(bound) + ")"),
        step_(step),
        residual_(residual),
        bound_(bound) {}
  const char* kind() const noexcept override { return "solver_diverged"; }
  int step() const noexcept { return step_; }
  double residual() const noexcept { return residual_; }
  double bound() const noexcept { return bound_; }

 private:
  int step_;
  double residual_, bound_;
};

class DegenerateKnownPart : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_known_part"; }
};

class SingularNormalEquations : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "singular_normal_equations"; }
};

class FilesystemError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "filesystem_error"; }
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const char* kind() const noexcept override { return "config_error"; }
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace dynbc
