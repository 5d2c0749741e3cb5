#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "mncd/nn.hpp"

namespace mncd {

struct EncoderConfig {
  std::string backbone = "resnet-tiny";
  std::int64_t base_channels = 64;
  std::array<int, 4> blocks{1, 1, 1, 1};
  std::int64_t in_channels = 3;

  void validate() const;
  // Channel count of each pyramid level: C, 2C, 4C, 8C.
  std::array<std::int64_t, 4> level_channels() const;
};

// Level l (0-based) holds [N, C*2^l, H/2^(l+2), W/2^(l+2)].
struct FeaturePyramid {
  std::vector<Tensor> levels;
};

// Image -> 4-level pyramid. The extension point for alternative backbones.
class Backbone : public nn::Module {
 public:
  virtual FeaturePyramid forward(const Tensor& image) = 0;
};

class BasicBlock : public nn::Module {
 public:
  BasicBlock(nn::InitContext& ctx, std::int64_t in_channels, std::int64_t out_channels,
             int stride);
  Tensor forward(const Tensor& x);

 private:
  nn::ConvUnit* conv1_;
  nn::ConvUnit* conv2_;
  nn::ConvUnit* downsample_ = nullptr;
};

// Compact residual CNN: stride-2 3x3 stem conv, stride-2 max pool, then four
// stages of basic blocks (first block of stages 2-4 strided).
class ResNetTiny : public Backbone {
 public:
  ResNetTiny(nn::InitContext& ctx, const EncoderConfig& config);
  FeaturePyramid forward(const Tensor& image) override;

 private:
  EncoderConfig config_;
  nn::ConvUnit* stem_;
  std::array<std::vector<BasicBlock*>, 4> stages_;
};

std::unique_ptr<Backbone> make_backbone(nn::InitContext& ctx, const EncoderConfig& config);

// One backbone applied to both temporal images.
class SiameseEncoder : public nn::Module {
 public:
  SiameseEncoder(nn::InitContext& ctx, const EncoderConfig& config);

  std::pair<FeaturePyramid, FeaturePyramid> forward(const Tensor& image_a,
                                                    const Tensor& image_b);
  Backbone& backbone() { return *backbone_; }

 private:
  Backbone* backbone_;
};

// Level-wise a - b.
FeaturePyramid feature_difference(const FeaturePyramid& a, const FeaturePyramid& b);

}  // namespace mncd
