#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcl/model.hpp"
#include "gcl/objectives.hpp"
#include "gcl/optimizer.hpp"

namespace gcl {

// Binary layout (all integers u64 little-endian unless noted):
//   "GCLCKPT\0"  u32 version
//   layers d_model heads vocab max_seq_len ffn_mult tie_output  seed  step
//   n_params  f64[n_params]               model tensors, canonical order
//   u8 has_head  [d_model d_proj f64[...] owner]
//   u8 has_optimizer  [opt_step beta1 beta2 eps wd  n_blocks
//                      (size f64[size] m) ... (size f64[size] v) ...]
//   fnv1a64 of every preceding byte
struct Checkpoint {
  ModelParams params;
  std::uint64_t step = 0;
  std::optional<PoolingHead> head;
  std::optional<OptimizerState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Throws InputError on bad magic, version, truncation, or checksum mismatch.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gcl
