#pragma once

#include <filesystem>

#include "lowlight/model.hpp"

namespace lowlight::model {

// Checkpoint layout (little-endian):
//   "LXCK" | u32 version
//   | u32 depth | u32 base_channels | u32 in_channels | u32 out_channels
//   | f32 slope | u8 base_frozen | u8 modulate_projection | u32 modulation_k
//   | u32 n_anchors  { f64 alpha1 | f64 alpha2 | f64 exposure }
//   | u32 n_provenance { str key | str value }       (str = u32 len + bytes)
//   | u32 n_tensors { str name | u8 trainable | u32 rank | u32 dims[rank]
//                     | u64 payload_offset }          (offsets in floats)
//   | f32 payload[...]
//   | u64 fnv1a of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelWeights& model, const std::filesystem::path& path);
ModelWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace lowlight::model
