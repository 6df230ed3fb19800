#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dynembed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexMatrix = Eigen::MatrixXi;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Base of every error the library throws. The CLI maps the subclasses onto
// exit codes (usage=1, data=2, threshold=3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: dimensions out of range, inconsistent shapes, bad options.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input data that cannot be used: malformed files, empty inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Model parameters that violate the model's constraints (e.g. probability > 1).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class MemoryBudgetError : public Error {
 public:
  using Error::Error;
};

// Bytes the library may use for dense intermediates. Read from the
// DYNEMBED_MEMORY_BUDGET environment variable (bytes), default 1 GiB.
std::uint64_t memory_budget_bytes();

}  // namespace dynembed
