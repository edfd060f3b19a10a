#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "adam.hpp"
#include "model.hpp"
#include "replay.hpp"

namespace curlcl {

// Little-endian binary layout:
//   "CURLCKPT"  u32 version  u32 flags (bit 0 snapshot, bit 1 Adam state)
//   u32 rng algorithm id  u64 step
//   u64 input_dim  u64 latent_dim  u64 k_init  u64 k_max  u64 K
//   u64 #encoder  u64[] sizes  u64 #decoder  u64[] sizes
//   f64 lr  f64 β1  f64 β2  f64 ε  u64 Adam t
//   every parameter buffer in ModelParams::buffers() order, f64 row-major
//   [Adam first moments, then second moments, same order and shapes]
//   u64 #usage  f64[] accumulated  u64 total_batches
struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> adam;
  UsageCounts usage;
  std::uint64_t step = 0;
  bool snapshot = false;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace curlcl
