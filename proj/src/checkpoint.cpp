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

#include "udeer/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>
#include <string>

#include "udeer/error.hpp"

namespace udeer {
namespace {

constexpr char kMagic[8] = {'U', 'D', 'E', 'E', 'R', 'C', 'K', '\0'};
constexpr std::size_t kHeaderSize = 32;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  return v;
}

Error corrupt(const std::string& what) { return Error(ErrorCode::Io, "checkpoint: " + what); }

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(std::span<const Parameter> params,
                                            std::uint64_t architecture_hash) {
  std::string manifest;
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    manifest += p.name + ' ' + std::to_string(p.value.shape().size());
    for (auto d : p.value.shape()) manifest += ' ' + std::to_string(d);
    manifest += ' ' + std::to_string(offset) + '\n';
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_le(out, kCheckpointVersion, 4);
  put_le(out, params.size(), 4);
  put_le(out, architecture_hash, 8);
  put_le(out, manifest.size(), 8);
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.reserve(out.size() + offset * 8);
  for (const auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      put_le(out, std::bit_cast<std::uint64_t>(p.value.data()(i)), 8);
    }
  }
  return out;
}

void decode_checkpoint(std::span<const std::uint8_t> bytes, std::span<Parameter> params,
                       std::uint64_t architecture_hash) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw corrupt("bad magic");
  }
  const auto version = get_le(bytes, 8, 4);
  if (version != kCheckpointVersion) throw corrupt("unsupported version " + std::to_string(version));
  const auto count = get_le(bytes, 12, 4);
  const auto hash = get_le(bytes, 16, 8);
  const auto manifest_len = get_le(bytes, 24, 8);
  if (hash != architecture_hash || count != params.size()) {
    throw Error(ErrorCode::ArchitectureMismatch, "checkpoint was written for another architecture");
  }
  if (kHeaderSize + manifest_len > bytes.size()) throw corrupt("truncated manifest");
  const std::string manifest(reinterpret_cast<const char*>(bytes.data() + kHeaderSize),
                             manifest_len);
  const std::size_t data_start = kHeaderSize + manifest_len;

  std::istringstream lines(manifest);
  for (auto& p : params) {
    std::string name;
    std::size_t rank = 0;
    if (!(lines >> name >> rank)) throw corrupt("short manifest");
    Shape shape(rank);
    for (auto& d : shape) lines >> d;
    std::uint64_t offset = 0;
    if (!(lines >> offset)) throw corrupt("bad manifest entry for " + name);
    if (name != p.name || shape != p.value.shape()) {
      throw Error(ErrorCode::ArchitectureMismatch, "tensor " + name + " " + shape_string(shape) +
                                                       " vs " + p.name + " " +
                                                       shape_string(p.value.shape()));
    }
    const std::size_t begin = data_start + offset * 8;
    if (begin + static_cast<std::size_t>(p.value.size()) * 8 > bytes.size()) {
      throw corrupt("truncated data for " + name);
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.mutable_data()(i) = std::bit_cast<double>(get_le(bytes, begin + i * 8, 8));
    }
    p.velocity = Eigen::VectorXd::Zero(p.value.size());
  }
}

}  // namespace udeer
