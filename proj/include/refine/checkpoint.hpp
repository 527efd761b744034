#pragma once

// Model checkpoints, little-endian:
//   "RFNE", u32 version,
//   metadata: u8 field, u32 D, u32 M, u8 fusion, u8 activation, f32 omega0,
//             u32 phi hidden, u32 head count, u32 widths..., u32 K, K strings
//   u32 tensor count, then per tensor: string name, u32 rows, u32 cols,
//   rows * cols fp32 (row-major).
// Strings are u32 length + bytes. Latents are stored as "latents" (K x D).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "refine/networks.hpp"

namespace refine {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelBundle& bundle);
ModelBundle decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

/// Bitwise equality of configuration, ids and every tensor.
bool bundles_identical(const ModelBundle& a, const ModelBundle& b);

}  // namespace refine
