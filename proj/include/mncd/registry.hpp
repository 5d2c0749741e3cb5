#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mncd/config.hpp"
#include "mncd/data.hpp"
#include "mncd/model.hpp"

namespace mncd {

template <typename Builder>
class Registry {
 public:
  explicit Registry(std::string kind) : kind_(std::move(kind)) {}

  void add(const std::string& id, Builder builder) {
    if (!builders_.emplace(id, std::move(builder)).second) {
      throw ConfigError(kind_ + " id '" + id + "' registered twice");
    }
  }

  bool contains(const std::string& id) const { return builders_.count(id) != 0; }

  const Builder& resolve(const std::string& id) const {
    auto it = builders_.find(id);
    if (it == builders_.end()) {
      std::string known;
      for (const auto& [name, _] : builders_) known += (known.empty() ? "" : ", ") + name;
      throw ConfigError("unknown " + kind_ + " id '" + id + "'; available: " + known);
    }
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : builders_) out.push_back(name);
    return out;
  }

 private:
  std::string kind_;
  std::map<std::string, Builder> builders_;
};

using ModelBuilder =
    std::function<std::unique_ptr<ChangeDetector>(const ExperimentConfig&, DType)>;
// Opens (and for generated datasets, first materializes) the dataset.
using DatasetBuilder = std::function<Dataset(const ExperimentConfig&)>;

// Models: "minenetcd-resnet-tiny" (encoder exactly as configured) and
// "minenetcd-resnet18" (requires two blocks per stage, its config default).
// Datasets: "synthetic" and "folder".
const Registry<ModelBuilder>& model_registry();
const Registry<DatasetBuilder>& dataset_registry();

std::unique_ptr<ChangeDetector> build_model(const ExperimentConfig& config,
                                            DType dtype = DType::f32);
Dataset open_dataset(const ExperimentConfig& config);

}  // namespace mncd
