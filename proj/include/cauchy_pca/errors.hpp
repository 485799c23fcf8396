#pragma once

#include <stdexcept>
#include <string>

namespace cpca {

/// Raised when an iterative numerical routine hits its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed or inconsistent input data (files, directories, labels).
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input is well-formed but uses a variant we do not read (e.g. 16-bit PGM).
class UnsupportedFormatError : public IngestionError {
 public:
  using IngestionError::IngestionError;
};

}  // namespace cpca
