#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mncd/nn.hpp"
#include "mncd/training.hpp"

namespace mncd {

// File layout:
//   8 bytes   magic "MNCDCKPT"
//   u32 LE    format version
//   u64 LE    metadata length L
//   L bytes   metadata JSON: config snapshot, step, Adam counter and a tensor
//             manifest {name, kind, shape, offset, count}
//   payload   little-endian float32 values, manifest order
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;  // f32
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;  // experiment config snapshot, "{}" when absent
  std::int64_t step = 0;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> buffers;  // BN running statistics
  std::optional<AdamState> adam;
};

Checkpoint make_checkpoint(const nn::Module& model, const AdamState* adam,
                           const std::string& config_json, std::int64_t step);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
void checkpoint_save(const std::filesystem::path& path, const nn::Module& model,
                     const AdamState* adam, const std::string& config_json, std::int64_t step);

// Throws CheckpointVersionError, CheckpointTruncatedError or CheckpointError.
Checkpoint checkpoint_load(const std::filesystem::path& path);

// Copies parameters and buffers into model (and moments into adam when both
// are present). Every model tensor must appear exactly once; a shape
// disagreement throws CheckpointShapeError naming the tensor.
void apply_checkpoint(const Checkpoint& checkpoint, nn::Module& model, AdamState* adam = nullptr);

}  // namespace mncd
