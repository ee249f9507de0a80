// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cellgrade/nn/network.hpp"
#include "cellgrade/nn/spec.hpp"

// Binary checkpoint layout, all integers and floats little-endian:
//
//   "MCLS"                      4 bytes
//   version                     u32 (currently 1)
//   network spec digest         u64 (NetworkSpec::digest)
//   tensor count                u64
//   per tensor:
//     name length               u32, then that many UTF-8 bytes
//     rank                      u32
//     dims                      u64 x rank
//     values                    f32 x product(dims)
//   checksum                    u64, FNV-1a of every byte before it
//
// Tensors are the network parameters under their ParamState names, followed
// by "adam_m/<name>" and "adam_v/<name>" for trainable ones and a single
// "optimizer/step" scalar (exact up to 2^24 steps).
namespace cellgrade::checkpoint {

inline constexpr char kMagic[4] = {'M', 'C', 'L', 'S'};
inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> serialize(const nn::ParamState<float>& params,
                                    const nn::NetworkSpec& spec);

struct Loaded {
  nn::ParamState<float> params;
  std::uint64_t spec_digest = 0;
  std::uint32_t version = 0;
};

// Throws IntegrityError with distinct messages for bad magic, unsupported
// version, truncation, checksum mismatch and malformed tensor records.
Loaded deserialize(std::span<const std::uint8_t> bytes);

// Atomic write (temp file + rename).
void save_checkpoint(const nn::ParamState<float>& params, const nn::NetworkSpec& spec,
                     const std::filesystem::path& path);

Loaded load_checkpoint(const std::filesystem::path& path);

// As above, and additionally requires the digest to match `spec` and the
// tensors to match the parameter layout that spec implies.
Loaded load_checkpoint(const std::filesystem::path& path, const nn::NetworkSpec& spec);

}  // namespace cellgrade::checkpoint
