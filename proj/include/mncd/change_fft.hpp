#pragma once

#include <array>

#include "mncd/encoder.hpp"
#include "mncd/spectral.hpp"

namespace mncd {

// Frequency-domain refinement of feature differences. Per level:
// DFT over channels -> FDConv -> complex SiLU -> FDConv -> inverse DFT -> real part.
class ChangeFft : public nn::Module {
 public:
  static constexpr double kInitNoise = 0.01;

  ChangeFft(nn::InitContext& ctx, std::array<std::int64_t, 4> level_channels);

  FeaturePyramid forward(const FeaturePyramid& diffs) const;
  Tensor forward_level(std::size_t level, const Tensor& diff) const;

  const spectral::FdconvParams& stage(std::size_t level, std::size_t index) const {
    return stages_[level][index];
  }

 private:
  std::array<std::array<spectral::FdconvParams, 2>, 4> stages_;
};

}  // namespace mncd
