#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "mncd/autodiff.hpp"
#include "mncd/change_fft.hpp"
#include "mncd/gradcheck.hpp"
#include "mncd/ops.hpp"
#include "mncd/spectral.hpp"
#include "test_util.hpp"

using namespace mncd;
using test::max_abs_diff;
using test::random_tensor;

namespace {

using cd = std::complex<double>;

// O(C^2) summation along the channel axis of a [C,H,W] field.
std::vector<cd> naive_transform(const std::vector<cd>& x, bool inverse) {
  const auto n = x.size();
  std::vector<cd> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    cd s = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double a = sign * 2.0 * std::numbers::pi * double(k) * double(c) / double(n);
      s += x[c] * cd(std::cos(a), std::sin(a));
    }
    out[k] = inverse ? s / double(n) : s;
  }
  return out;
}

std::vector<cd> column(const ComplexTensor& z, std::int64_t plane, std::int64_t p) {
  const auto c = z.re.dim(0);
  std::vector<cd> v(static_cast<std::size_t>(c));
  for (std::int64_t k = 0; k < c; ++k) v[k] = {z.re.at(k * plane + p), z.im.defined() ? z.im.at(k * plane + p) : 0.0};
  return v;
}

ComplexTensor zeros_like(const Tensor& t) {
  return {Tensor::zeros(t.shape(), DType::f64), Tensor::zeros(t.shape(), DType::f64)};
}

}  // namespace

TEST(Dft, ConstantSignalIsDcOnly) {
  Tensor x = Tensor::full({8, 2, 3}, 1.5, DType::f64);
  const auto z = spectral::dft_channels(x);
  for (std::int64_t p = 0; p < 6; ++p) {
    EXPECT_NEAR(z.re.at(p), 12.0, 1e-12);
    for (std::int64_t k = 1; k < 8; ++k) {
      EXPECT_NEAR(z.re.at(k * 6 + p), 0.0, 1e-12);
      EXPECT_NEAR(z.im.at(k * 6 + p), 0.0, 1e-12);
    }
  }
}

TEST(Dft, ImpulseHasFlatSpectrum) {
  for (std::int64_t c : {8, 5}) {
    Tensor x = Tensor::zeros({c, 1, 1}, DType::f64);
    x.set(0, 1.0);
    const auto z = spectral::dft_channels(x);
    for (std::int64_t k = 0; k < c; ++k) {
      EXPECT_NEAR(z.re.at(k), 1.0, 1e-12);
      EXPECT_NEAR(z.im.at(k), 0.0, 1e-12);
    }
  }
}

TEST(Dft, MatchesNaiveOracle) {
  std::mt19937_64 rng(21);
  for (std::int64_t c : {16, 12, 7, 1}) {
    Tensor x = random_tensor({c, 3, 2}, rng);
    const auto z = spectral::dft_channels(x);
    for (std::int64_t p = 0; p < 6; ++p) {
      std::vector<cd> in(static_cast<std::size_t>(c));
      for (std::int64_t k = 0; k < c; ++k) in[k] = x.at(k * 6 + p);
      const auto ref = naive_transform(in, false);
      const auto got = column(z, 6, p);
      for (std::int64_t k = 0; k < c; ++k) EXPECT_LT(std::abs(got[k] - ref[k]), 1e-6);
    }
  }
}

TEST(Idft, InvertsDftAndMatchesOracle) {
  std::mt19937_64 rng(22);
  for (std::int64_t c : {16, 6}) {
    Tensor x = random_tensor({2, c, 2, 2}, rng);
    const auto back = spectral::idft_channels(spectral::dft_channels(x));
    EXPECT_LT(max_abs_diff(back.re, x), 1e-6);
    for (double v : back.im.to_vector()) EXPECT_LT(std::abs(v), 1e-6);

    ComplexTensor spec{random_tensor({c, 2, 2}, rng), random_tensor({c, 2, 2}, rng)};
    const auto out = spectral::idft_channels(spec);
    for (std::int64_t p = 0; p < 4; ++p) {
      const auto ref = naive_transform(column(spec, 4, p), true);
      const auto got = column(out, 4, p);
      for (std::int64_t k = 0; k < c; ++k) EXPECT_LT(std::abs(got[k] - ref[k]), 1e-6);
    }
  }
}

TEST(Idft, DcSpectrumGivesConstant) {
  ComplexTensor spec = zeros_like(Tensor({8, 1, 2}, DType::f64));
  spec.re.set(0, 8 * 0.75);
  spec.re.set(1, 8 * -2.0);
  const auto x = spectral::idft_channels(spec);
  for (std::int64_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(x.re.at(k * 2), 0.75, 1e-12);
    EXPECT_NEAR(x.re.at(k * 2 + 1), -2.0, 1e-12);
  }
}

TEST(Dft, ParsevalAndLinearity) {
  std::mt19937_64 rng(23);
  Tensor x = random_tensor({16, 4, 4}, rng), y = random_tensor({16, 4, 4}, rng);
  const auto z = spectral::dft_channels(x);
  double time = 0, freq = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    time += x.at(i) * x.at(i);
    freq += z.re.at(i) * z.re.at(i) + z.im.at(i) * z.im.at(i);
  }
  EXPECT_NEAR(time, freq / 16.0, 1e-5 * time);

  const double a = 0.3, b = -1.7;
  const auto lhs = spectral::dft_channels(ops::add(ops::scale(x, a), ops::scale(y, b)));
  const auto zy = spectral::dft_channels(y);
  EXPECT_LT(max_abs_diff(lhs.re, ops::add(ops::scale(z.re, a), ops::scale(zy.re, b))), 1e-6);
  EXPECT_LT(max_abs_diff(lhs.im, ops::add(ops::scale(z.im, a), ops::scale(zy.im, b))), 1e-6);
}

TEST(Fft, RadixTwoAgreesWithDirectTransform) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> d(-1, 1);
  for (std::int64_t n : {1, 2, 4, 32, 64}) {
    std::vector<double> re(n), im(n);
    for (std::int64_t i = 0; i < n; ++i) re[i] = d(rng), im[i] = d(rng);
    auto r2 = re, i2 = im;
    spectral::fft_radix2(re.data(), im.data(), n, false);
    spectral::naive_dft(r2.data(), i2.data(), n, false);
    for (std::int64_t i = 0; i < n; ++i) {
      EXPECT_NEAR(re[i], r2[i], 1e-10);
      EXPECT_NEAR(im[i], i2[i], 1e-10);
    }
  }
  EXPECT_TRUE(spectral::is_power_of_two(64));
  EXPECT_FALSE(spectral::is_power_of_two(12));
}

TEST(Fdconv, IdentityWeightIsIdentity) {
  std::mt19937_64 rng(25);
  ComplexTensor spec{random_tensor({2, 6, 3, 3}, rng), random_tensor({2, 6, 3, 3}, rng)};
  const auto out = spectral::fdconv(spec, spectral::FdconvParams::identity(6, DType::f64));
  EXPECT_LT(max_abs_diff(out.re, spec.re), 1e-15);
  EXPECT_LT(max_abs_diff(out.im, spec.im), 1e-15);

  // dft -> identity fdconv -> idft is the identity on real input
  Tensor x = random_tensor({8, 3, 3}, rng);
  const auto back = spectral::idft_channels(
      spectral::fdconv(spectral::dft_channels(x), spectral::FdconvParams::identity(8, DType::f64)));
  EXPECT_LT(max_abs_diff(back.re, x), 1e-6);
  for (double v : back.im.to_vector()) EXPECT_LT(std::abs(v), 1e-6);
}

TEST(Fdconv, PureBiasBroadcasts) {
  std::mt19937_64 rng(26);
  spectral::FdconvParams p{Tensor::zeros({4, 4}, DType::f64), Tensor::zeros({4, 4}, DType::f64),
                           random_tensor({4}, rng), random_tensor({4}, rng)};
  ComplexTensor spec{random_tensor({4, 2, 5}, rng), random_tensor({4, 2, 5}, rng)};
  const auto out = spectral::fdconv(spec, p);
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t q = 0; q < 10; ++q) {
      EXPECT_EQ(out.re.at(k * 10 + q), p.bias_re.at(k));
      EXPECT_EQ(out.im.at(k * 10 + q), p.bias_im.at(k));
    }
}

TEST(Fdconv, ComplexMultiplyExpansion) {
  std::mt19937_64 rng(27);
  const std::int64_t c = 3;
  spectral::FdconvParams p{random_tensor({c, c}, rng), random_tensor({c, c}, rng), random_tensor({c}, rng),
                           random_tensor({c}, rng)};
  ComplexTensor spec{random_tensor({c, 1, 1}, rng), random_tensor({c, 1, 1}, rng)};
  const auto out = spectral::fdconv(spec, p);
  for (std::int64_t k = 0; k < c; ++k) {
    cd s(p.bias_re.at(k), p.bias_im.at(k));
    for (std::int64_t j = 0; j < c; ++j) {
      s += cd(p.weight_re.at(k * c + j), p.weight_im.at(k * c + j)) * cd(spec.re.at(j), spec.im.at(j));
    }
    EXPECT_NEAR(out.re.at(k), s.real(), 1e-12);
    EXPECT_NEAR(out.im.at(k), s.imag(), 1e-12);
  }
}

TEST(Fdconv, DiagonalWeightIsCircularConvolution) {
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t c = trial % 2 ? 8 : 6;
    Tensor x = random_tensor({c, 2, 2}, rng);
    ComplexTensor d{random_tensor({c}, rng), random_tensor({c}, rng)};
    spectral::FdconvParams p{Tensor::zeros({c, c}, DType::f64), Tensor::zeros({c, c}, DType::f64),
                             Tensor::zeros({c}, DType::f64), Tensor::zeros({c}, DType::f64)};
    for (std::int64_t k = 0; k < c; ++k) {
      p.weight_re.set(k * c + k, d.re.at(k));
      p.weight_im.set(k * c + k, d.im.at(k));
    }
    const auto y = spectral::idft_channels(spectral::fdconv(spectral::dft_channels(x), p));
    // kernel g = idft(d), computed by direct summation
    std::vector<cd> dv(static_cast<std::size_t>(c));
    for (std::int64_t k = 0; k < c; ++k) dv[k] = {d.re.at(k), d.im.at(k)};
    const auto g = naive_transform(dv, true);
    for (std::int64_t q = 0; q < 4; ++q) {
      for (std::int64_t n = 0; n < c; ++n) {
        cd s = 0;
        for (std::int64_t m = 0; m < c; ++m) s += x.at(m * 4 + q) * g[(n - m + c) % c];
        EXPECT_NEAR(y.re.at(n * 4 + q), s.real(), 1e-5);
        EXPECT_NEAR(y.im.at(n * 4 + q), s.imag(), 1e-5);
      }
    }
  }
}

TEST(Fdconv, ChannelMismatchIsShapeError) {
  ComplexTensor spec{Tensor({5, 2, 2}, DType::f64), Tensor({5, 2, 2}, DType::f64)};
  EXPECT_THROW(spectral::fdconv(spec, spectral::FdconvParams::identity(4, DType::f64)), ShapeError);
}

TEST(ComplexSilu, ActsOnPartsIndependently) {
  Tensor re = Tensor::from_values({2}, {1.0, -2.0}, DType::f64), im = Tensor::from_values({2}, {0.0, 3.0}, DType::f64);
  const auto z = spectral::complex_silu({re, im});
  EXPECT_EQ(z.re.to_vector(), ops::silu(re).to_vector());
  EXPECT_EQ(z.im.to_vector(), ops::silu(im).to_vector());
}

namespace {

FeaturePyramid random_pyramid(std::array<std::int64_t, 4> channels, std::mt19937_64& rng, DType dtype) {
  FeaturePyramid p;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::int64_t s = 8 >> l;
    p.levels.push_back(random_tensor({2, channels[l], s, s}, rng, dtype));
  }
  return p;
}

}  // namespace

TEST(ChangeFft, ShapesPreservedAndZeroPropagates) {
  std::mt19937_64 rng(29);
  nn::InitContext ctx(1, DType::f64);
  ChangeFft module(ctx, {8, 16, 32, 64});
  const auto in = random_pyramid({8, 16, 32, 64}, rng, DType::f64);
  const auto out = module.forward(in);
  ASSERT_EQ(out.levels.size(), 4u);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(out.levels[l].shape(), in.levels[l].shape());

  FeaturePyramid zero;
  for (const auto& t : in.levels) zero.levels.push_back(Tensor::zeros(t.shape(), DType::f64));
  for (const auto& t : module.forward(zero).levels)
    for (double v : t.to_vector()) EXPECT_EQ(v, 0.0);

  FeaturePyramid three{{in.levels[0], in.levels[1], in.levels[2]}};
  EXPECT_THROW(module.forward(three), ConfigError);
}

TEST(ChangeFft, ParameterCountAndInitialisation) {
  nn::InitContext ctx(2, DType::f64);
  ChangeFft module(ctx, {16, 32, 64, 128});
  std::int64_t level1 = 0;
  for (const auto& p : module.parameters()) {
    if (p.name.rfind("level1.", 0) == 0) level1 += p.value.numel();
  }
  EXPECT_EQ(level1, 2 * 2 * (16 * 16 + 16));
  const auto& s = module.stage(0, 0);
  for (std::int64_t k = 0; k < 16; ++k)
    for (std::int64_t j = 0; j < 16; ++j) {
      EXPECT_NEAR(s.weight_re.at(k * 16 + j), k == j ? 1.0 : 0.0, ChangeFft::kInitNoise);
      EXPECT_LE(std::abs(s.weight_im.at(k * 16 + j)), ChangeFft::kInitNoise);
    }
  for (double v : s.bias_re.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(ChangeFft, MatchesManualComposition) {
  std::mt19937_64 rng(30);
  nn::InitContext ctx(3, DType::f64);
  ChangeFft module(ctx, {8, 16, 32, 64});
  Tensor x = random_tensor({2, 16, 4, 4}, rng);
  auto z = spectral::fdconv(spectral::dft_channels(x), module.stage(1, 0));
  z = spectral::fdconv(spectral::complex_silu(z), module.stage(1, 1));
  EXPECT_LT(max_abs_diff(module.forward_level(1, x), spectral::idft_channels(z).re), 1e-12);
}

TEST(ChangeFft, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(31);
  nn::InitContext ctx(4, DType::f64);
  ChangeFft module(ctx, {8, 16, 32, 64});
  auto input = random_pyramid({8, 16, 32, 64}, rng, DType::f64);
  std::vector<Tensor> proj;
  for (const auto& t : input.levels) proj.push_back(random_tensor(t.shape(), rng));
  auto loss = [&] {
    const auto out = module.forward(input);
    Tensor total = ops::sum(ops::mul(out.levels[0], proj[0]));
    for (std::size_t l = 1; l < 4; ++l) total = ops::add(total, ops::sum(ops::mul(out.levels[l], proj[l])));
    return total;
  };
  auto targets = module.parameters();
  for (std::size_t l = 0; l < 4; ++l) targets.push_back({"input" + std::to_string(l), input.levels[l], nn::Init::zeros});
  gradcheck::Options opts;
  const auto r = gradcheck::check("change_fft", loss, targets, 6, rng, opts);
  EXPECT_TRUE(r.passed()) << r.worst;
  EXPECT_GE(r.checked, 200);
}
