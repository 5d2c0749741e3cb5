#pragma once

#include <memory>

#include "mncd/change_fft.hpp"
#include "mncd/decoder.hpp"
#include "mncd/encoder.hpp"

namespace mncd {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  bool use_changefft = true;
};

// Siamese encoder -> feature differences -> (ChangeFFT) -> UperNet decoder.
// Without ChangeFFT the differences feed the decoder directly.
class ChangeDetector : public nn::Module {
 public:
  ChangeDetector(const ModelConfig& config, std::uint64_t seed, DType dtype = DType::f32);

  // [N,3,H,W] x2 -> [N,1,H,W] change probabilities.
  Tensor forward(const Tensor& image_a, const Tensor& image_b);
  // Inference without gradient recording; restores the previous norm mode.
  Tensor predict(const Tensor& image_a, const Tensor& image_b);

  const ModelConfig& config() const { return config_; }
  DType dtype() const { return dtype_; }
  SiameseEncoder& encoder() { return *encoder_; }
  ChangeFft* change_fft() { return change_fft_; }
  UperNetDecoder& decoder() { return *decoder_; }

 private:
  ModelConfig config_;
  DType dtype_;
  SiameseEncoder* encoder_;
  ChangeFft* change_fft_ = nullptr;
  UperNetDecoder* decoder_;
};

// Probabilities -> {0,1} at threshold 0.5 (p >= 0.5 is changed).
Tensor threshold_map(const Tensor& probabilities, double threshold = 0.5);

}  // namespace mncd
