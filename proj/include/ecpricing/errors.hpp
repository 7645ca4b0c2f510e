#pragma once

#include <stdexcept>
#include <string>

namespace ecpricing {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Signature parameters that admit no feasible schedule.
class InfeasibleSpec : public Error {
 public:
  InfeasibleSpec(std::string block_id, const std::string& what)
      : Error(block_id + ": " + what), block_id_(std::move(block_id)) {}
  const std::string& block_id() const noexcept { return block_id_; }

 private:
  std::string block_id_;
};

/// Malformed input: wrong lengths, bad labels, non-finite coefficients.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration or data that cannot be used.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input file that violates its schema. Carries row/column diagnostics.
class SchemaError : public ConfigError {
 public:
  SchemaError(const std::string& file, std::size_t row, const std::string& column,
              const std::string& what)
      : ConfigError(file + ":" + std::to_string(row) + " [" + column + "] " + what) {}
  explicit SchemaError(const std::string& what) : ConfigError(what) {}
};

/// A matrix factorization or similar numerical step broke down.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The optimization backend failed or returned a non-optimal status where an
/// optimum was required. `diagnostics_path` points at an exported model when
/// one was written.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::string diagnostics_path = {})
      : Error(diagnostics_path.empty() ? what : what + " (model exported to " + diagnostics_path + ")"),
        diagnostics_path_(std::move(diagnostics_path)) {}
  const std::string& diagnostics_path() const noexcept { return diagnostics_path_; }

 private:
  std::string diagnostics_path_;
};

/// A post-solve audit found the returned solution inconsistent.
class AuditError : public SolverError {
 public:
  using SolverError::SolverError;
};

}  // namespace ecpricing
