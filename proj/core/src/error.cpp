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

#include "fedtrack/error.hpp"

namespace fedtrack {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kStructural: return "structural";
    case ErrorCategory::kNumerical: return "numerical";
    case ErrorCategory::kMonotonicity: return "monotonicity";
    case ErrorCategory::kDataVolume: return "data-volume";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kStructural: return 3;
    case ErrorCategory::kNumerical: return 4;
    case ErrorCategory::kMonotonicity: return 5;
    case ErrorCategory::kDataVolume: return 6;
    case ErrorCategory::kIo: return 7;
  }
  return 1;
}

}  // namespace fedtrack
