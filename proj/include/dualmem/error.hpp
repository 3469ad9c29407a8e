// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace dualmem {

enum class ErrorKind {
  InvalidArgument,
  Parse,
  DimensionMismatch,
  DuplicateId,
  NonFinite,
  InsufficientSamples,
  NotPositiveDefinite,
  StaleDecision,
  EmptyInput,
  InfeasibleSpec,
  Io,
  Format,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::DuplicateId: return "duplicate-id";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::InsufficientSamples: return "insufficient-samples";
    case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
    case ErrorKind::StaleDecision: return "stale-decision";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::InfeasibleSpec: return "infeasible-spec";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
  }
  return "unknown";
}

/// All library failures are reported through this exception; `kind()` lets
/// callers branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}

/// Replaces the process-wide warning sink and returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  return std::exchange(warning_handler(), std::move(handler));
}

inline void warn(std::string_view msg) {
  if (auto& handler = warning_handler()) handler(msg);
}

}  // namespace dualmem
