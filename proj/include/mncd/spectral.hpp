#pragma once

#include <cstdint>
#include <random>

#include "mncd/tensor.hpp"

// Fourier transforms along the channel axis of feature maps, and the
// complex-valued channel mixing applied to the resulting spectra.
//
// Tensors are [C,H,W] or [N,C,H,W]; the transform runs independently at each
// spatial position. Forward transform is unnormalized,
//   X[k] = sum_c x[c] * exp(-2*pi*i*k*c / C),
// and the inverse carries the 1/C factor, so idft(dft(x)) == x.
namespace mncd::spectral {

ComplexTensor dft_channels(const Tensor& x);
ComplexTensor idft_channels(const ComplexTensor& spectrum);

// Complex linear map over frequency bins plus complex bias:
//   out[k] = sum_c W[k,c] * in[c] + B[k].
struct FdconvParams {
  Tensor weight_re;  // [C, C]
  Tensor weight_im;  // [C, C]
  Tensor bias_re;    // [C]
  Tensor bias_im;    // [C]

  std::int64_t channels() const { return weight_re.dim(0); }
  // Throws ShapeError unless the weight is square and the bias matches it.
  void validate() const;

  static FdconvParams identity(std::int64_t channels, DType dtype = DType::f32);
  // Complex identity plus uniform(-noise, noise) on every weight entry, zero bias.
  static FdconvParams near_identity(std::int64_t channels, double noise, std::mt19937_64& rng,
                                    DType dtype = DType::f32);
};

ComplexTensor fdconv(const ComplexTensor& spectrum, const FdconvParams& params);

// SiLU applied independently to the real and imaginary parts.
ComplexTensor complex_silu(const ComplexTensor& z);

bool is_power_of_two(std::int64_t n);

// In-place transforms of one length-n complex vector. fft_radix2 requires a
// power-of-two length; naive_dft works for any n. Neither normalizes.
template <typename T>
void fft_radix2(T* re, T* im, std::int64_t n, bool inverse);
template <typename T>
void naive_dft(T* re, T* im, std::int64_t n, bool inverse);

}  // namespace mncd::spectral
