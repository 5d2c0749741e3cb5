#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mncd/data.hpp"
#include "mncd/model.hpp"
#include "mncd/nn.hpp"

namespace mncd {

struct TrainConfig {
  double lr_max = 1e-4;
  double lr_min = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::int64_t batch_size = 32;
  std::int64_t total_steps = 300;
  std::uint64_t seed = 8888;

  void validate() const;
};

inline constexpr double kBceClamp = 1e-7;

// Mean pixel-wise binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
// pred and target must hold the same number of pixels with matching trailing
// H,W (e.g. [N,1,H,W] against [N,1,H,W], or [1,H,W] against [H,W]).
Tensor bce_loss(const Tensor& pred, const Tensor& target);

// lr_min + (lr_max - lr_min) * (1 + cos(pi t / T)) / 2; t beyond T yields lr_min.
double cosine_lr(std::int64_t step, std::int64_t total, double lr_max, double lr_min);

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t t = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// One bias-corrected Adam update over params using their grad slots.
void adam_step(const std::vector<nn::Parameter>& params, AdamState& state, double lr,
               const AdamHyper& hyper);

struct StepLog {
  std::int64_t step = 0;
  double lr = 0;
  double loss = 0;

  // {"step":..,"lr":..,"loss":..} on one line.
  std::string to_json() const;
};

using StepCallback = std::function<void(const StepLog&)>;

// Runs steps state.t .. total_steps-1: batch -> forward -> BCE -> backward ->
// Adam at cosine_lr(step). Batches come from a seeded per-epoch shuffle of
// samples. Throws NumericError on a non-finite loss.
std::vector<StepLog> fit(ChangeDetector& model, const std::vector<SamplePair>& samples,
                         const TrainConfig& config, AdamState& state,
                         const StepCallback& on_step = {});

}  // namespace mncd
