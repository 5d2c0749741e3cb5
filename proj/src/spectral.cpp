#include "mncd/spectral.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "mncd/autodiff.hpp"
#include "mncd/ops.hpp"

namespace mncd::spectral {

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

template <typename T>
void fft_radix2(T* re, T* im, std::int64_t n, bool inverse) {
  if (!is_power_of_two(n)) throw ArgumentError("fft_radix2: length must be a power of two");
  for (std::int64_t i = 1, j = 0; i < n; ++i) {
    std::int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::int64_t len = 2; len <= n; len <<= 1) {
    const std::int64_t half = len / 2;
    for (std::int64_t k = 0; k < half; ++k) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(len);
      const T wr = static_cast<T>(std::cos(angle));
      const T wi = static_cast<T>(std::sin(angle));
      for (std::int64_t start = 0; start < n; start += len) {
        const auto a = start + k, b = a + half;
        const T tr = re[b] * wr - im[b] * wi;
        const T ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

template <typename T>
void naive_dft(T* re, T* im, std::int64_t n, bool inverse) {
  std::vector<double> cos_t(static_cast<std::size_t>(n)), sin_t(static_cast<std::size_t>(n));
  const double sign = inverse ? 1.0 : -1.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    cos_t[static_cast<std::size_t>(i)] = std::cos(angle);
    sin_t[static_cast<std::size_t>(i)] = sign * std::sin(angle);
  }
  std::vector<T> out_re(static_cast<std::size_t>(n)), out_im(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    T acc_re = 0, acc_im = 0;
    for (std::int64_t c = 0; c < n; ++c) {
      const auto idx = static_cast<std::size_t>((k * c) % n);
      const T wr = static_cast<T>(cos_t[idx]);
      const T wi = static_cast<T>(sin_t[idx]);
      acc_re += re[c] * wr - im[c] * wi;
      acc_im += re[c] * wi + im[c] * wr;
    }
    out_re[static_cast<std::size_t>(k)] = acc_re;
    out_im[static_cast<std::size_t>(k)] = acc_im;
  }
  std::copy(out_re.begin(), out_re.end(), re);
  std::copy(out_im.begin(), out_im.end(), im);
}

template void fft_radix2<float>(float*, float*, std::int64_t, bool);
template void fft_radix2<double>(double*, double*, std::int64_t, bool);
template void naive_dft<float>(float*, float*, std::int64_t, bool);
template void naive_dft<double>(double*, double*, std::int64_t, bool);

namespace {

// Transforms every channel vector of a [N,C,P] field. in_im may be null
// (real input). Output is scaled by `scale`.
template <typename T>
void transform_field(const T* in_re, const T* in_im, T* out_re, T* out_im, std::int64_t batch,
                     std::int64_t channels, std::int64_t plane, bool inverse, double scale) {
  const bool fast = is_power_of_two(channels);
  const T s = static_cast<T>(scale);
#pragma omp parallel
  {
    std::vector<T> re(static_cast<std::size_t>(channels)), im(static_cast<std::size_t>(channels));
#pragma omp for schedule(static)
    for (std::int64_t idx = 0; idx < batch * plane; ++idx) {
      const auto n = idx / plane, p = idx % plane;
      for (std::int64_t c = 0; c < channels; ++c) {
        const auto i = (n * channels + c) * plane + p;
        re[static_cast<std::size_t>(c)] = in_re[i];
        im[static_cast<std::size_t>(c)] = in_im ? in_im[i] : T(0);
      }
      if (fast) {
        fft_radix2(re.data(), im.data(), channels, inverse);
      } else {
        naive_dft(re.data(), im.data(), channels, inverse);
      }
      for (std::int64_t c = 0; c < channels; ++c) {
        const auto i = (n * channels + c) * plane + p;
        out_re[i] = re[static_cast<std::size_t>(c)] * s;
        out_im[i] = im[static_cast<std::size_t>(c)] * s;
      }
    }
  }
}

Tensor to4d(const Tensor& x, const char* op) {
  if (x.ndim() == 3) return ops::reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.ndim() != 4) {
    throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " +
                     shape_str(x.shape()));
  }
  return x;
}

Tensor restore(const Tensor& y, const Shape& shape) {
  return y.shape() == shape ? y : ops::reshape(y, shape);
}

ComplexTensor dft4(const Tensor& x) {
  const auto n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor re(x.shape(), x.dtype()), im(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    transform_field<T>(x.values<T>().data(), nullptr, re.values<T>().data(),
                       im.values<T>().data(), n, c, plane, false, 1.0);
  });
  emit("dft_channels", {x}, {re, im}, [x, n, c, plane](std::span<const Tensor> grads) {
    // d/dx of a real-input DFT is the real part of the unnormalized inverse.
    Tensor gre = grads[0].defined() ? grads[0] : Tensor::zeros(x.shape(), x.dtype());
    Tensor gim = grads[1].defined() ? grads[1] : Tensor::zeros(x.shape(), x.dtype());
    Tensor gx(x.shape(), x.dtype()), scratch(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      transform_field<T>(gre.values<T>().data(), gim.values<T>().data(), gx.values<T>().data(),
                         scratch.values<T>().data(), n, c, plane, true, 1.0);
    });
    accumulate_grad(x, gx);
  });
  return {re, im};
}

ComplexTensor idft4(const Tensor& in_re, const Tensor& in_im) {
  const auto n = in_re.dim(0), c = in_re.dim(1), plane = in_re.dim(2) * in_re.dim(3);
  Tensor re(in_re.shape(), in_re.dtype()), im(in_re.shape(), in_re.dtype());
  const double inv_c = 1.0 / static_cast<double>(c);
  dispatch(in_re.dtype(), [&](auto tag) {
    using T = decltype(tag);
    transform_field<T>(in_re.values<T>().data(), in_im.values<T>().data(),
                       re.values<T>().data(), im.values<T>().data(), n, c, plane, true, inv_c);
  });
  emit("idft_channels", {in_re, in_im}, {re, im},
       [in_re, in_im, n, c, plane, inv_c](std::span<const Tensor> grads) {
         // Adjoint of (1/C) * conj-DFT is (1/C) * forward DFT.
         const auto& shape = in_re.shape();
         Tensor gre = grads[0].defined() ? grads[0] : Tensor::zeros(shape, in_re.dtype());
         Tensor gim = grads[1].defined() ? grads[1] : Tensor::zeros(shape, in_re.dtype());
         Tensor dre(shape, in_re.dtype()), dim(shape, in_re.dtype());
         dispatch(in_re.dtype(), [&](auto tag) {
           using T = decltype(tag);
           transform_field<T>(gre.values<T>().data(), gim.values<T>().data(),
                              dre.values<T>().data(), dim.values<T>().data(), n, c, plane, false,
                              inv_c);
         });
         accumulate_grad(in_re, dre);
         accumulate_grad(in_im, dim);
       });
  return {re, im};
}

}  // namespace

ComplexTensor dft_channels(const Tensor& x) {
  const Shape shape = x.shape();
  ComplexTensor z = dft4(to4d(x, "dft_channels"));
  return {restore(z.re, shape), restore(z.im, shape)};
}

ComplexTensor idft_channels(const ComplexTensor& spectrum) {
  if (spectrum.re.shape() != spectrum.im.shape() || spectrum.re.dtype() != spectrum.im.dtype()) {
    throw ShapeError("idft_channels: real and imaginary parts differ in shape or dtype");
  }
  const Shape shape = spectrum.re.shape();
  ComplexTensor z = idft4(to4d(spectrum.re, "idft_channels"), to4d(spectrum.im, "idft_channels"));
  return {restore(z.re, shape), restore(z.im, shape)};
}

void FdconvParams::validate() const {
  if (weight_re.ndim() != 2 || weight_re.dim(0) != weight_re.dim(1) ||
      weight_im.shape() != weight_re.shape()) {
    throw ShapeError("fdconv: weight must be a square complex matrix, got " +
                     shape_str(weight_re.shape()) + " / " + shape_str(weight_im.shape()));
  }
  const Shape bias_shape{weight_re.dim(0)};
  if (bias_re.shape() != bias_shape || bias_im.shape() != bias_shape) {
    throw ShapeError("fdconv: bias length must equal weight side " +
                     std::to_string(weight_re.dim(0)));
  }
}

FdconvParams FdconvParams::identity(std::int64_t channels, DType dtype) {
  FdconvParams p{Tensor::zeros({channels, channels}, dtype),
                 Tensor::zeros({channels, channels}, dtype), Tensor::zeros({channels}, dtype),
                 Tensor::zeros({channels}, dtype)};
  for (std::int64_t i = 0; i < channels; ++i) p.weight_re.set(i * channels + i, 1.0);
  return p;
}

FdconvParams FdconvParams::near_identity(std::int64_t channels, double noise,
                                         std::mt19937_64& rng, DType dtype) {
  FdconvParams p = identity(channels, dtype);
  std::uniform_real_distribution<double> u(-noise, noise);
  for (Tensor* w : {&p.weight_re, &p.weight_im}) {
    for (std::int64_t i = 0; i < w->numel(); ++i) w->set(i, w->at(i) + u(rng));
  }
  return p;
}

ComplexTensor fdconv(const ComplexTensor& spectrum, const FdconvParams& params) {
  params.validate();
  const Shape shape = spectrum.re.shape();
  if (spectrum.im.shape() != shape) throw ShapeError("fdconv: complex parts differ in shape");
  const Tensor fr = to4d(spectrum.re, "fdconv");
  const Tensor fi = to4d(spectrum.im, "fdconv");
  if (fr.dim(1) != params.channels()) {
    throw ShapeError("fdconv: spectrum has " + std::to_string(fr.dim(1)) +
                     " channels but weights expect " + std::to_string(params.channels()));
  }
  using ops::add;
  using ops::add_channel_bias;
  using ops::channel_mix;
  using ops::sub;
  Tensor re = add_channel_bias(
      sub(channel_mix(params.weight_re, fr), channel_mix(params.weight_im, fi)), params.bias_re);
  Tensor im = add_channel_bias(
      add(channel_mix(params.weight_im, fr), channel_mix(params.weight_re, fi)), params.bias_im);
  return {restore(re, shape), restore(im, shape)};
}

ComplexTensor complex_silu(const ComplexTensor& z) { return {ops::silu(z.re), ops::silu(z.im)}; }

}  // namespace mncd::spectral
