// Copyright 2026 The fedtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedtrack {

enum class ErrorCategory {
  kConfig,
  kStructural,
  kNumerical,
  kMonotonicity,
  kDataVolume,
  kIo,
};

std::string_view to_string(ErrorCategory category);

/// Base exception for every failure surfaced by the library. The category
/// drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error(ErrorCategory::kStructural, what) {}
};

/// Raised when a loss or parameter becomes non-finite. `tensor()` names the
/// first offending tensor in layout order ("loss" if only the scalar is bad).
class NumericalError : public Error {
 public:
  NumericalError(std::string tensor, const std::string& what)
      : Error(ErrorCategory::kNumerical, what), tensor_(std::move(tensor)) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

class MonotonicityError : public Error {
 public:
  explicit MonotonicityError(const std::string& what) : Error(ErrorCategory::kMonotonicity, what) {}
};

class DataVolumeError : public Error {
 public:
  explicit DataVolumeError(const std::string& what) : Error(ErrorCategory::kDataVolume, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

/// Process exit code for the CLI. 0 is reserved for success.
int exit_code(ErrorCategory category);

}  // namespace fedtrack
