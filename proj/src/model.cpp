#include "mncd/model.hpp"

#include "mncd/autodiff.hpp"

namespace mncd {

ChangeDetector::ChangeDetector(const ModelConfig& config, std::uint64_t seed, DType dtype)
    : config_(config), dtype_(dtype) {
  config_.encoder.validate();
  config_.decoder.validate();
  // Each component draws from its own stream, so toggling ChangeFFT leaves
  // the encoder and decoder initialization untouched.
  std::mt19937_64 streams(seed);
  nn::InitContext enc_ctx(streams(), dtype), fft_ctx(streams(), dtype), dec_ctx(streams(), dtype);
  const auto channels = config_.encoder.level_channels();
  encoder_ =
      &register_module("encoder", std::make_unique<SiameseEncoder>(enc_ctx, config_.encoder));
  if (config_.use_changefft) {
    change_fft_ = &register_module("change_fft", std::make_unique<ChangeFft>(fft_ctx, channels));
  }
  decoder_ = &register_module(
      "decoder", std::make_unique<UperNetDecoder>(dec_ctx, config_.decoder, channels));
}

Tensor ChangeDetector::forward(const Tensor& image_a, const Tensor& image_b) {
  if (image_a.shape() != image_b.shape()) {
    throw ShapeError("image pair shapes differ: " + shape_str(image_a.shape()) + " vs " +
                     shape_str(image_b.shape()));
  }
  auto [fa, fb] = encoder_->forward(image_a, image_b);
  FeaturePyramid diffs = feature_difference(fa, fb);
  if (change_fft_) diffs = change_fft_->forward(diffs);
  return decoder_->forward(diffs, static_cast<int>(image_a.dim(2)),
                           static_cast<int>(image_a.dim(3)));
}

Tensor ChangeDetector::predict(const Tensor& image_a, const Tensor& image_b) {
  NoGradGuard guard;
  const auto previous = mode();
  set_mode(ops::NormMode::eval);
  Tensor out;
  try {
    out = forward(image_a, image_b);
  } catch (...) {
    set_mode(previous);
    throw;
  }
  set_mode(previous);
  return out;
}

Tensor threshold_map(const Tensor& probabilities, double threshold) {
  Tensor out(probabilities.shape(), probabilities.dtype());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out.set(i, probabilities.at(i) >= threshold ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace mncd
