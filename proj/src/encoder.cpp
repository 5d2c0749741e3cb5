#include "mncd/encoder.hpp"

namespace mncd {

void EncoderConfig::validate() const {
  if (base_channels < 8) throw ConfigError("encoder.base_channels must be >= 8");
  for (int b : blocks) {
    if (b < 1) throw ConfigError("encoder.blocks entries must be >= 1");
  }
  if (in_channels < 1) throw ConfigError("encoder.in_channels must be >= 1");
  if (backbone != "resnet-tiny") {
    throw ConfigError("encoder.backbone '" + backbone + "' is not available (known: resnet-tiny)");
  }
}

std::array<std::int64_t, 4> EncoderConfig::level_channels() const {
  return {base_channels, base_channels * 2, base_channels * 4, base_channels * 8};
}

BasicBlock::BasicBlock(nn::InitContext& ctx, std::int64_t in_channels,
                       std::int64_t out_channels, int stride) {
  conv1_ = &register_module(
      "conv1", std::make_unique<nn::ConvUnit>(ctx, in_channels, out_channels, 3, stride, true, true));
  conv2_ = &register_module(
      "conv2", std::make_unique<nn::ConvUnit>(ctx, out_channels, out_channels, 3, 1, true, false));
  if (stride != 1 || in_channels != out_channels) {
    downsample_ = &register_module(
        "downsample",
        std::make_unique<nn::ConvUnit>(ctx, in_channels, out_channels, 1, stride, true, false));
  }
}

Tensor BasicBlock::forward(const Tensor& x) {
  Tensor y = conv2_->forward(conv1_->forward(x));
  Tensor skip = downsample_ ? downsample_->forward(x) : x;
  return ops::relu(ops::add(y, skip));
}

ResNetTiny::ResNetTiny(nn::InitContext& ctx, const EncoderConfig& config) : config_(config) {
  config_.validate();
  const auto channels = config_.level_channels();
  stem_ = &register_module("stem", std::make_unique<nn::ConvUnit>(ctx, config_.in_channels,
                                                                   channels[0], 3, 2, true, true));
  std::int64_t in = channels[0];
  for (std::size_t s = 0; s < 4; ++s) {
    for (int b = 0; b < config_.blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      stages_[s].push_back(&register_module(
          "stage" + std::to_string(s + 1) + "." + std::to_string(b),
          std::make_unique<BasicBlock>(ctx, in, channels[s], stride)));
      in = channels[s];
    }
  }
}

FeaturePyramid ResNetTiny::forward(const Tensor& image) {
  if (image.ndim() != 4 || image.dim(1) != config_.in_channels) {
    throw ShapeError("backbone expects [N," + std::to_string(config_.in_channels) +
                     ",H,W] input, got " + shape_str(image.shape()));
  }
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0) {
    throw ShapeError("backbone input height and width must be divisible by 32, got " +
                     shape_str(image.shape()));
  }
  Tensor x = ops::max_pool2d(stem_->forward(image), 3, 2, 1);
  FeaturePyramid pyramid;
  for (auto& stage : stages_) {
    for (auto* block : stage) x = block->forward(x);
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

std::unique_ptr<Backbone> make_backbone(nn::InitContext& ctx, const EncoderConfig& config) {
  config.validate();
  return std::make_unique<ResNetTiny>(ctx, config);
}

SiameseEncoder::SiameseEncoder(nn::InitContext& ctx, const EncoderConfig& config) {
  backbone_ = &register_module("backbone", make_backbone(ctx, config));
}

std::pair<FeaturePyramid, FeaturePyramid> SiameseEncoder::forward(const Tensor& image_a,
                                                                  const Tensor& image_b) {
  if (image_a.shape() != image_b.shape() || image_a.ndim() != 4) {
    throw ShapeError("siamese encoder: image shapes " + shape_str(image_a.shape()) + " and " +
                     shape_str(image_b.shape()) + " must match as [N,C,H,W]");
  }
  // Both dates go through as one [2N,...] batch so BatchNorm sees the same
  // statistics for each; otherwise train-mode normalization differs between
  // the streams and unchanged regions stop cancelling in the difference.
  const auto n = image_a.dim(0);
  Shape flat = image_a.shape();
  flat[1] *= n;
  flat[0] = 1;
  Shape joint = image_a.shape();
  joint[0] = 2 * n;
  const Tensor parts[] = {ops::reshape(image_a, flat), ops::reshape(image_b, flat)};
  const FeaturePyramid both = backbone_->forward(ops::reshape(ops::concat_channels(parts), joint));
  FeaturePyramid a, b;
  for (const auto& level : both.levels) {
    a.levels.push_back(ops::slice_batch(level, 0, n));
    b.levels.push_back(ops::slice_batch(level, n, 2 * n));
  }
  return {std::move(a), std::move(b)};
}

FeaturePyramid feature_difference(const FeaturePyramid& a, const FeaturePyramid& b) {
  if (a.levels.size() != b.levels.size()) {
    throw ShapeError("feature_difference: pyramids have different level counts");
  }
  FeaturePyramid out;
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    if (a.levels[l].shape() != b.levels[l].shape()) {
      throw ShapeError("feature_difference: level " + std::to_string(l + 1) + " shape " +
                       shape_str(a.levels[l].shape()) + " vs " + shape_str(b.levels[l].shape()));
    }
    out.levels.push_back(ops::sub(a.levels[l], b.levels[l]));
  }
  return out;
}

}  // namespace mncd
