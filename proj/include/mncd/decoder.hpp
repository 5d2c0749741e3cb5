#pragma once

#include <array>
#include <vector>

#include "mncd/encoder.hpp"

namespace mncd {

struct DecoderConfig {
  std::int64_t fpn_channels = 128;
  std::vector<int> ppm_scales{1, 2, 3, 6};
  std::int64_t out_channels = 1;

  void validate() const;
};

// UperNet-style head: pyramid pooling over the deepest level, top-down FPN
// fusion, and a convolutional classifier producing per-pixel change
// probabilities. Decoder convolutions are conv + ReLU without normalization.
class UperNetDecoder : public nn::Module {
 public:
  UperNetDecoder(nn::InitContext& ctx, const DecoderConfig& config,
                 std::array<std::int64_t, 4> level_channels);

  // [N, C4, h, w] -> [N, D, h, w]
  Tensor ppm(const Tensor& deepest);
  // Change-aware pyramid plus PPM output -> [N, D, H/4, W/4]
  Tensor fpn_fuse(const FeaturePyramid& pyramid, const Tensor& ppm_out);
  // [N, D, H/4, W/4] -> [N, 1, out_h, out_w] probabilities
  Tensor head(const Tensor& fused, int out_h, int out_w);
  Tensor forward(const FeaturePyramid& pyramid, int out_h, int out_w);

  std::int64_t ppm_branch_channels() const;
  nn::ConvUnit& lateral(std::size_t level) { return *lateral_[level]; }
  nn::ConvUnit& smooth(std::size_t level) { return *smooth_[level]; }
  nn::ConvUnit& fuse() { return *fuse_; }
  nn::ConvUnit& ppm_branch(std::size_t i) { return *ppm_branches_[i]; }
  nn::ConvUnit& ppm_bottleneck() { return *ppm_bottleneck_; }

 private:
  DecoderConfig config_;
  std::array<std::int64_t, 4> level_channels_;
  std::vector<nn::ConvUnit*> ppm_branches_;
  nn::ConvUnit* ppm_bottleneck_;
  std::array<nn::ConvUnit*, 3> lateral_;
  std::array<nn::ConvUnit*, 3> smooth_;
  nn::ConvUnit* fuse_;
  nn::ConvUnit* head_conv_;
  nn::ConvUnit* classifier_;
};

}  // namespace mncd
