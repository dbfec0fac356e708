// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace latentdp {

// Machine-readable error category. Serialized as the `code` field of HTTP
// error bodies.
enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNumerical,
  kNotConverged,
  kNotFound,
  kCorrupt,
  kFailedPrecondition,
  kInternal,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kNotConverged: return "not_converged";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kFailedPrecondition: return "failed_precondition";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& m) : Error(ErrorCode::kInvalidArgument, m) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& m) : Error(ErrorCode::kDimensionMismatch, m) {}
};

// Singular or indefinite systems.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& m) : Error(ErrorCode::kNumerical, m) {}
};

class NotConverged : public Error {
 public:
  NotConverged(const std::string& m, double residual)
      : Error(ErrorCode::kNotConverged, m), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& m) : Error(ErrorCode::kNotFound, m) {}
};

class CorruptData : public Error {
 public:
  explicit CorruptData(const std::string& m) : Error(ErrorCode::kCorrupt, m) {}
};

class FailedPrecondition : public Error {
 public:
  explicit FailedPrecondition(const std::string& m) : Error(ErrorCode::kFailedPrecondition, m) {}
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace latentdp
