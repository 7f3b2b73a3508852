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

#include "udeer/error.hpp"

namespace udeer {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::WrongValueCount: return "WrongValueCount";
    case ErrorCode::UnparsableNumber: return "UnparsableNumber";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::DegenerateConfig: return "DegenerateConfig";
    case ErrorCode::InvalidRadius: return "InvalidRadius";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyValidSet: return "EmptyValidSet";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::NonDivisibleResolution: return "NonDivisibleResolution";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyLabeledSet: return "EmptyLabeledSet";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace udeer
