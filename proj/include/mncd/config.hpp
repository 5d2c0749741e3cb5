#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mncd/model.hpp"
#include "mncd/training.hpp"

namespace mncd {

struct SyntheticConfig {
  std::int64_t num_pairs = 32;
  std::int64_t size = 256;
  double change_fraction = 0.15;
  std::int64_t num_sites = 0;  // 0: one site per pair
};

// Everything one experiment needs. JSON form (all keys but model_id and one
// of dataset_id / dataset_root are optional):
//
//   {"model_id": "minenetcd-resnet-tiny",
//    "dataset_id": "synthetic" | "folder",
//    "dataset_root": "data/synthetic",
//    "use_changefft": true,
//    "encoder": {"backbone", "base_channels", "blocks"},
//    "decoder": {"fpn_channels", "ppm_scales"},
//    "synthetic": {"num_pairs", "size", "change_fraction", "num_sites"},
//    "split_ratios": [0.6, 0.1, 0.3],
//    "train": {"lr_max", "lr_min", "beta1", "beta2", "eps", "batch_size",
//              "total_steps", "seed"},
//    "output_dir": "runs/<model_id>"}
struct ExperimentConfig {
  std::string model_id;
  std::string dataset_id;
  std::string dataset_root;
  ModelConfig model;
  SyntheticConfig synthetic;
  std::array<double, 3> split_ratios{0.6, 0.1, 0.3};
  TrainConfig train;
  std::string output_dir;

  // Canonical JSON with every field present; parse_config(to_json()) is a
  // fixed point.
  std::string to_json() const;
  SyntheticOptions synthetic_options() const;
};

// Strict: unknown keys and type mismatches throw ConfigError naming the
// dotted field path. `overrides` are "dotted.key=value" strings applied to the
// document before validation; values parse as JSON when possible and as plain
// strings otherwise.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

}  // namespace mncd
