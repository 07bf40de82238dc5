#pragma once
// Binary checkpoints. Layout, all integers little-endian:
//   magic "STAIRCKP", u32 version, u64 iteration,
//   u32 config length + config text,
//   u32 parameter count + records, u32 momentum count + records,
// where a record is u32 name length, name bytes, 4 x u32 shape, raw float32 values.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stairnet/autograd.hpp"

namespace stairnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::uint64_t iteration = 0;
  std::string config;                 // to_text() snapshot
  std::vector<TensorRecord> params;   // every store entry, trainable or not
  std::vector<TensorRecord> momentum; // trainable parameters only
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// ParseError with a byte offset for malformed input.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies named records into `store`; every store entry must be present with a matching shape.
void load_params(const std::vector<TensorRecord>& records, ParamStore<float>& store);
std::vector<TensorRecord> param_records(const ParamStore<float>& store);

}  // namespace stairnet
