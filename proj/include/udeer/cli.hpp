// Copyright 2026 The Udeer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

namespace udeer::cli {

/// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kIoError = 2,
  kDataError = 3,
  kConfigError = 4,
  kOrderingError = 5,
};

inline constexpr const char* kToolVersion = "0.1.0";

/// `udeer <synth|adapt|train|pseudo|eval|visualize> --config PATH [--out DIR] [--seed N]`
int run(const std::vector<std::string>& args);

}  // namespace udeer::cli
