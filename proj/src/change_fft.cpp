#include "mncd/change_fft.hpp"

namespace mncd {

ChangeFft::ChangeFft(nn::InitContext& ctx, std::array<std::int64_t, 4> level_channels) {
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t s = 0; s < 2; ++s) {
      auto p = spectral::FdconvParams::near_identity(level_channels[l], kInitNoise, ctx.rng,
                                                     ctx.dtype);
      const std::string prefix =
          "level" + std::to_string(l + 1) + ".fdconv" + std::to_string(s + 1) + ".";
      auto& stage = stages_[l][s];
      stage.weight_re =
          register_parameter(prefix + "weight_re", p.weight_re, nn::Init::identity_complex);
      stage.weight_im =
          register_parameter(prefix + "weight_im", p.weight_im, nn::Init::identity_complex);
      stage.bias_re = register_parameter(prefix + "bias_re", p.bias_re, nn::Init::zeros);
      stage.bias_im = register_parameter(prefix + "bias_im", p.bias_im, nn::Init::zeros);
    }
  }
}

Tensor ChangeFft::forward_level(std::size_t level, const Tensor& diff) const {
  if (level >= 4) throw ArgumentError("ChangeFft: level index out of range");
  const auto& [first, second] = stages_[level];
  ComplexTensor z = spectral::dft_channels(diff);
  z = spectral::complex_silu(spectral::fdconv(z, first));
  z = spectral::fdconv(z, second);
  return spectral::idft_channels(z).re;
}

FeaturePyramid ChangeFft::forward(const FeaturePyramid& diffs) const {
  if (diffs.levels.size() != 4) {
    throw ConfigError("ChangeFft expects a 4-level pyramid, got " +
                      std::to_string(diffs.levels.size()) + " levels");
  }
  FeaturePyramid out;
  for (std::size_t l = 0; l < 4; ++l) out.levels.push_back(forward_level(l, diffs.levels[l]));
  return out;
}

}  // namespace mncd
