// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace geoadapt {

// Every error carries the process exit code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension error: " + what, 2) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("configuration error: " + what, 2) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format error: " + what, 2) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data error: " + what, 2) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract violation: " + what, 2) {}
};

class ReproducibilityError : public Error {
 public:
  explicit ReproducibilityError(const std::string& what)
      : Error("reproducibility error: " + what, 4) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error("undefined metric: " + what, 2) {}
};

// Raised when training produces a non-finite loss or gradient.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric abort: " + what, 3) {}
};

}  // namespace geoadapt
