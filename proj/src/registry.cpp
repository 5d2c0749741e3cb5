#include "mncd/registry.hpp"

#include <filesystem>

namespace mncd {

const Registry<ModelBuilder>& model_registry() {
  static const Registry<ModelBuilder> registry = [] {
    Registry<ModelBuilder> r("model");
    r.add("minenetcd-resnet-tiny", [](const ExperimentConfig& c, DType dtype) {
      return std::make_unique<ChangeDetector>(c.model, c.train.seed, dtype);
    });
    r.add("minenetcd-resnet18", [](const ExperimentConfig& c, DType dtype) {
      if (c.model.encoder.blocks != std::array<int, 4>{2, 2, 2, 2}) {
        throw ConfigError("minenetcd-resnet18 requires encoder.blocks [2,2,2,2]");
      }
      return std::make_unique<ChangeDetector>(c.model, c.train.seed, dtype);
    });
    return r;
  }();
  return registry;
}

const Registry<DatasetBuilder>& dataset_registry() {
  static const Registry<DatasetBuilder> registry = [] {
    Registry<DatasetBuilder> r("dataset");
    r.add("synthetic", [](const ExperimentConfig& c) {
      const std::filesystem::path root = c.dataset_root;
      if (!std::filesystem::exists(root / "manifest.json")) {
        generate_synthetic_dataset(root, c.synthetic_options());
      }
      return Dataset(root);
    });
    r.add("folder", [](const ExperimentConfig& c) { return Dataset(c.dataset_root); });
    return r;
  }();
  return registry;
}

std::unique_ptr<ChangeDetector> build_model(const ExperimentConfig& config, DType dtype) {
  return model_registry().resolve(config.model_id)(config, dtype);
}

Dataset open_dataset(const ExperimentConfig& config) {
  return dataset_registry().resolve(config.dataset_id)(config);
}

}  // namespace mncd
