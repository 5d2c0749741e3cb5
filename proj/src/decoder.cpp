#include "mncd/decoder.hpp"

#include <algorithm>

namespace mncd {

void DecoderConfig::validate() const {
  if (fpn_channels < 8) throw ConfigError("decoder.fpn_channels must be >= 8");
  if (ppm_scales.empty()) throw ConfigError("decoder.ppm_scales must not be empty");
  for (std::size_t i = 0; i < ppm_scales.size(); ++i) {
    if (ppm_scales[i] < 1) throw ConfigError("decoder.ppm_scales entries must be >= 1");
    if (i > 0 && ppm_scales[i] <= ppm_scales[i - 1]) {
      throw ConfigError("decoder.ppm_scales must be strictly increasing");
    }
  }
  if (out_channels != 1) throw ConfigError("decoder.out_channels must be 1");
}

UperNetDecoder::UperNetDecoder(nn::InitContext& ctx, const DecoderConfig& config,
                               std::array<std::int64_t, 4> level_channels)
    : config_(config), level_channels_(level_channels) {
  config_.validate();
  const auto d = config_.fpn_channels;
  const auto branch = ppm_branch_channels();
  for (std::size_t i = 0; i < config_.ppm_scales.size(); ++i) {
    ppm_branches_.push_back(&register_module(
        "ppm.branch" + std::to_string(i),
        std::make_unique<nn::ConvUnit>(ctx, level_channels[3], branch, 1, 1, false, true)));
  }
  const auto ppm_in =
      level_channels[3] + branch * static_cast<std::int64_t>(config_.ppm_scales.size());
  ppm_bottleneck_ = &register_module(
      "ppm.bottleneck", std::make_unique<nn::ConvUnit>(ctx, ppm_in, d, 3, 1, false, true));
  for (std::size_t l = 0; l < 3; ++l) {
    lateral_[l] = &register_module(
        "fpn.lateral" + std::to_string(l + 1),
        std::make_unique<nn::ConvUnit>(ctx, level_channels[l], d, 1, 1, false, true));
  }
  for (std::size_t l = 0; l < 3; ++l) {
    smooth_[l] = &register_module("fpn.smooth" + std::to_string(l + 1),
                                  std::make_unique<nn::ConvUnit>(ctx, d, d, 3, 1, false, true));
  }
  fuse_ = &register_module("fpn.fuse",
                           std::make_unique<nn::ConvUnit>(ctx, 4 * d, d, 3, 1, false, true));
  head_conv_ =
      &register_module("head.conv", std::make_unique<nn::ConvUnit>(ctx, d, d, 3, 1, false, true));
  classifier_ = &register_module(
      "head.classifier", std::make_unique<nn::ConvUnit>(ctx, d, config_.out_channels, 1, 1, false,
                                                        false));
}

std::int64_t UperNetDecoder::ppm_branch_channels() const {
  return std::max<std::int64_t>(
      1, config_.fpn_channels / static_cast<std::int64_t>(config_.ppm_scales.size()));
}

Tensor UperNetDecoder::ppm(const Tensor& deepest) {
  if (deepest.ndim() != 4 || deepest.dim(1) != level_channels_[3]) {
    throw ShapeError("ppm: expected [N," + std::to_string(level_channels_[3]) + ",h,w], got " +
                     shape_str(deepest.shape()));
  }
  const auto h = deepest.dim(2), w = deepest.dim(3);
  std::vector<Tensor> parts{deepest};
  for (std::size_t i = 0; i < config_.ppm_scales.size(); ++i) {
    const int s = config_.ppm_scales[i];
    if (s > h || s > w) {
      throw ConfigError("ppm scale " + std::to_string(s) + " exceeds deepest feature size " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    Tensor pooled = ops::adaptive_avg_pool2d(deepest, s, s);
    parts.push_back(ops::upsample_bilinear(ppm_branches_[i]->forward(pooled),
                                           static_cast<int>(h), static_cast<int>(w)));
  }
  return ppm_bottleneck_->forward(ops::concat_channels(parts));
}

Tensor UperNetDecoder::fpn_fuse(const FeaturePyramid& pyramid, const Tensor& ppm_out) {
  if (pyramid.levels.size() != 4) {
    throw ShapeError("fpn_fuse: expected 4 pyramid levels, got " +
                     std::to_string(pyramid.levels.size()));
  }
  for (std::size_t l = 0; l < 4; ++l) {
    const auto& t = pyramid.levels[l];
    if (t.ndim() != 4 || t.dim(1) != level_channels_[l]) {
      throw ShapeError("fpn_fuse: level " + std::to_string(l + 1) + " has shape " +
                       shape_str(t.shape()) + ", expected " + std::to_string(level_channels_[l]) +
                       " channels");
    }
  }
  const auto base_h = static_cast<int>(pyramid.levels[0].dim(2));
  const auto base_w = static_cast<int>(pyramid.levels[0].dim(3));

  std::array<Tensor, 4> merged;
  merged[3] = ppm_out;
  for (int l = 2; l >= 0; --l) {
    const auto& lvl = pyramid.levels[static_cast<std::size_t>(l)];
    Tensor top = ops::upsample_bilinear(merged[static_cast<std::size_t>(l) + 1],
                                        static_cast<int>(lvl.dim(2)), static_cast<int>(lvl.dim(3)));
    merged[static_cast<std::size_t>(l)] =
        ops::add(lateral_[static_cast<std::size_t>(l)]->forward(lvl), top);
  }
  std::vector<Tensor> outs;
  for (std::size_t l = 0; l < 4; ++l) {
    Tensor y = l < 3 ? smooth_[l]->forward(merged[l]) : merged[l];
    if (l > 0) y = ops::upsample_bilinear(y, base_h, base_w);
    outs.push_back(y);
  }
  return fuse_->forward(ops::concat_channels(outs));
}

Tensor UperNetDecoder::head(const Tensor& fused, int out_h, int out_w) {
  Tensor logits = classifier_->forward(head_conv_->forward(fused));
  return ops::sigmoid(ops::upsample_bilinear(logits, out_h, out_w));
}

Tensor UperNetDecoder::forward(const FeaturePyramid& pyramid, int out_h, int out_w) {
  if (pyramid.levels.size() != 4) {
    throw ShapeError("decoder expects 4 pyramid levels");
  }
  Tensor fused = fpn_fuse(pyramid, ppm(pyramid.levels[3]));
  return head(fused, out_h, out_w);
}

}  // namespace mncd
