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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "udeer/diff_engine.hpp"

namespace udeer {

/// Parameter checkpoint container (all integers little-endian):
///
///   offset 0   char[8]  magic "UDEERCK\0"
///   offset 8   u32      format version (kCheckpointVersion)
///   offset 12  u32      tensor count T
///   offset 16  u64      architecture hash
///   offset 24  u64      manifest byte length M
///   offset 32  M bytes  manifest, UTF-8, one line per tensor:
///                       "<name> <rank> <d0> ... <d{rank-1}> <offset>\n"
///                       offset counts float64 elements from the data start
///   then       f64[]    tensor data, concatenated in manifest order
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(std::span<const Parameter> params,
                                            std::uint64_t architecture_hash);

/// Restores values into `params` in place. Names, shapes and the
/// architecture hash must match exactly.
void decode_checkpoint(std::span<const std::uint8_t> bytes, std::span<Parameter> params,
                       std::uint64_t architecture_hash);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace udeer
