#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mncd/model.hpp"
#include "mncd/nn.hpp"

// Central finite-difference verification of the tape's adjoints.
namespace mncd::gradcheck {

struct Options {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error; keeps near-zero gradients from
  // turning round-off into failures.
  double floor = 1e-6;
  std::uint64_t seed = 8888;
  // Minimum number of sampled parameter entries in the pipeline check.
  std::int64_t pipeline_samples = 240;
};

struct Result {
  std::string name;
  std::int64_t checked = 0;
  std::int64_t failures = 0;
  double max_rel_error = 0;
  std::string worst;  // "tensor[index]: analytic vs numeric"

  bool passed() const { return checked > 0 && failures == 0; }
};

double relative_error(double analytic, double numeric, double floor);

// Compares d(loss)/d(target) from one backward pass against central
// differences. `per_tensor` entries are sampled from each target (all of
// them when negative). Targets must be f64.
Result check(const std::string& name, const std::function<Tensor()>& loss_fn,
             const std::vector<nn::Parameter>& targets, std::int64_t per_tensor,
             std::mt19937_64& rng, const Options& options);

std::vector<Result> check_primitives(const Options& options);

// C=8, D=16, one block per stage, PPM scales {1,2}: the deepest level of a
// 64x64 input is 2x2.
ModelConfig micro_model_config(bool use_changefft = true);

// Full model at 64x64, f64, BN in train mode, BCE against a random mask.
Result check_micro_pipeline(const Options& options);

std::vector<Result> run_suite(const Options& options);

}  // namespace mncd::gradcheck
