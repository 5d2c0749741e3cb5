#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <limits>
#include <random>

#include "mncd/autodiff.hpp"
#include "mncd/kernels.hpp"
#include "mncd/ops.hpp"
#include "test_util.hpp"

using namespace mncd;
using test::max_abs_diff;
using test::random_tensor;

namespace {

// Independent reference: direct nested-loop cross-correlation with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor out({n, co, oh, ow}, DType::f64);
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double s = b.defined() ? b.at(o) : 0.0;
          for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t dy = 0; dy < kh; ++dy)
              for (std::int64_t dx = 0; dx < kw; ++dx) {
                const auto iy = y * stride - pad + dy, ix = xx * stride - pad + dx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                s += w.at(((o * ci + c) * kh + dy) * kw + dx) * x.at(((a * ci + c) * h + iy) * wd + ix);
              }
          out.set(((a * co + o) * oh + y) * ow + xx, s);
        }
  return out;
}

double numeric_derivative(const std::function<double()>& f, Tensor x, std::int64_t i,
                          double h = 1e-5) {
  const double orig = x.at(i);
  x.set(i, orig + h);
  const double up = f();
  x.set(i, orig - h);
  const double down = f();
  x.set(i, orig);
  return (up - down) / (2 * h);
}

}  // namespace

TEST(Tensor, ShapeAndValues) {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_EQ(t.at(4), 5.0);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1, 2, 3}), ShapeError);
  Tensor c = t.clone();
  c.set(0, 9);
  EXPECT_EQ(t.at(0), 1.0);
  EXPECT_EQ(t.to(DType::f64).dtype(), DType::f64);
}

TEST(Tensor, GradientSlotMustMatchShape) {
  Tensor t({2, 2});
  EXPECT_THROW(t.set_grad(Tensor({3})), ShapeError);
}

TEST(Tensor, FiniteChecksFlagNonFiniteOutputs) {
  set_finite_checks(true);
  Tensor x = Tensor::from_values({2}, {1.0, std::numeric_limits<double>::infinity()}, DType::f64);
  EXPECT_THROW(ops::scale(x, 2.0), NumericError);
  set_finite_checks(false);
  EXPECT_NO_THROW(ops::scale(x, 2.0));
}

TEST(Conv2d, ScalarScaling) {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 1, 1}, 2.0);
  Tensor y = ops::conv2d(x, w, Tensor::zeros({1}));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (double v : y.to_vector()) EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, IdentityPlusBias) {
  Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ops::conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor::full({1}, 1.0));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{2, 3, 4, 5}));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(1);
  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 0}}) {
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    Tensor w = random_tensor({3, 4, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor y = ops::conv2d(x, w, b, stride, pad);
    Tensor ref = naive_conv(x, w, b, stride, pad);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LT(max_abs_diff(y, ref), 1e-6);
    // f32 path against the same oracle
    Tensor y32 = ops::conv2d(x.to(DType::f32), w.to(DType::f32), b.to(DType::f32), stride, pad);
    EXPECT_LT(max_abs_diff(y32, ref), 1e-4);
  }
}

TEST(Conv2d, OutputSizeFormulaAndUnbatchedInput) {
  std::mt19937_64 rng(2);
  for (int h : {5, 6, 7}) {
    for (int k : {1, 3}) {
      for (int s : {1, 2, 3}) {
        for (int p : {0, 1}) {
          if (h + 2 * p < k) continue;
          Tensor y = ops::conv2d(random_tensor({1, 2, h, h + 1}, rng), random_tensor({3, 2, k, k}, rng),
                                 Tensor(), s, p);
          EXPECT_EQ(y.dim(2), (h + 2 * p - k) / s + 1);
          EXPECT_EQ(y.dim(3), (h + 1 + 2 * p - k) / s + 1);
        }
      }
    }
  }
  Tensor x = random_tensor({2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  Tensor y = ops::conv2d(x, w, Tensor(), 1, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 5, 5}));
  EXPECT_LT(max_abs_diff(y, naive_conv(ops::reshape(x, {1, 2, 5, 5}), w, Tensor(), 1, 1)), 1e-12);
}

TEST(Conv2d, Errors) {
  Tensor x({1, 2, 4, 4}, DType::f64);
  EXPECT_THROW(ops::conv2d(x, Tensor({1, 3, 3, 3}, DType::f64), Tensor()), ShapeError);
  EXPECT_THROW(ops::conv2d(x, Tensor({1, 2, 5, 5}, DType::f64), Tensor()), ShapeError);
  EXPECT_THROW(ops::conv2d(x, Tensor({1, 2, 3, 3}, DType::f64), Tensor(), 0), ArgumentError);
}

TEST(BatchNorm, EvalIdentity) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Tensor rm = Tensor::zeros({3}, DType::f64), rv = Tensor::full({3}, 1.0, DType::f64);
  Tensor y = ops::batch_norm(x, Tensor::full({3}, 1.0, DType::f64), Tensor::zeros({3}, DType::f64), rm,
                             rv, ops::NormMode::eval, 0.0);
  EXPECT_LT(max_abs_diff(x, y), 1e-12);
}

TEST(BatchNorm, ConstantInputCentersToZero) {
  Tensor x = Tensor::full({2, 2, 3, 3}, 4.2, DType::f64);
  Tensor rm = Tensor::zeros({2}, DType::f64), rv = Tensor::full({2}, 1.0, DType::f64);
  Tensor y = ops::batch_norm(x, Tensor::full({2}, 1.0, DType::f64), Tensor::zeros({2}, DType::f64), rm,
                             rv, ops::NormMode::train);
  for (double v : y.to_vector()) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(BatchNorm, MatchesExplicitStatistics) {
  std::mt19937_64 rng(4);
  const std::int64_t n = 3, c = 4, h = 5, w = 2;
  Tensor x = random_tensor({n, c, h, w}, rng, DType::f64, -2, 3);
  Tensor gamma = random_tensor({c}, rng), beta = random_tensor({c}, rng);
  Tensor rm = Tensor::zeros({c}, DType::f64), rv = Tensor::full({c}, 1.0, DType::f64);
  Tensor y = ops::batch_norm(x, gamma, beta, rm, rv, ops::NormMode::train, 1e-5, 0.1);
  const double m = static_cast<double>(n * h * w);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mean = 0, var = 0;
    for (std::int64_t a = 0; a < n; ++a)
      for (std::int64_t p = 0; p < h * w; ++p) mean += x.at((a * c + ch) * h * w + p);
    mean /= m;
    for (std::int64_t a = 0; a < n; ++a)
      for (std::int64_t p = 0; p < h * w; ++p) {
        const double d = x.at((a * c + ch) * h * w + p) - mean;
        var += d * d;
      }
    const double biased = var / m, unbiased = var / (m - 1);
    for (std::int64_t a = 0; a < n; ++a)
      for (std::int64_t p = 0; p < h * w; ++p) {
        const auto i = (a * c + ch) * h * w + p;
        const double ref = (x.at(i) - mean) / std::sqrt(biased + 1e-5) * gamma.at(ch) + beta.at(ch);
        EXPECT_NEAR(y.at(i), ref, 1e-6);
      }
    EXPECT_NEAR(rm.at(ch), 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv.at(ch), 0.9 + 0.1 * unbiased, 1e-12);
  }
}

TEST(BatchNorm, DegenerateTrainBatchRejected) {
  Tensor x({1, 2, 1, 1}, DType::f64);
  Tensor rm = Tensor::zeros({2}, DType::f64), rv = Tensor::full({2}, 1.0, DType::f64);
  EXPECT_THROW(ops::batch_norm(x, Tensor::full({2}, 1.0, DType::f64), Tensor::zeros({2}, DType::f64), rm,
                               rv, ops::NormMode::train),
               ArgumentError);
}

TEST(Activation, Definitions) {
  Tensor x = Tensor::from_values({3}, {-1, 0, 2}, DType::f64);
  EXPECT_EQ(ops::relu(x).to_vector(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(ops::silu(x).at(1), 0.0);
  EXPECT_EQ(ops::sigmoid(x).at(1), 0.5);
  EXPECT_NEAR(ops::silu(x).at(2), 2.0 / (1.0 + std::exp(-2.0)), 1e-15);
  Tensor big = Tensor::from_values({2}, {-800, 800}, DType::f64);
  EXPECT_EQ(ops::sigmoid(big).to_vector(), (std::vector<double>{0.0, 1.0}));
}

TEST(Pool, MaxOfTwoByTwo) {
  Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(ops::max_pool2d(x, 2, 2).to_vector(), (std::vector<double>{4}));
}

TEST(Pool, AdaptiveOfConstant) {
  Tensor x = Tensor::full({3, 5, 7}, 2.5, DType::f64);
  Tensor y = ops::adaptive_avg_pool2d(x, 1, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 1, 1}));
  for (double v : y.to_vector()) EXPECT_NEAR(v, 2.5, 1e-15);
}

TEST(Pool, AdaptiveMatchesBinAverages) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({3, 7, 7}, rng);
  Tensor y = ops::adaptive_avg_pool2d(x, 3, 3);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3}));
  auto lo = [](int i) { return (i * 7) / 3; };
  auto hi = [](int i) { return ((i + 1) * 7 + 2) / 3; };
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        int count = 0;
        for (int r = lo(i); r < hi(i); ++r)
          for (int q = lo(j); q < hi(j); ++q, ++count) s += x.at((c * 7 + r) * 7 + q);
        EXPECT_NEAR(y.at((c * 3 + i) * 3 + j), s / count, 1e-12);
      }
}

TEST(Pool, AvgWindowAndErrors) {
  Tensor x = Tensor::from_values({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}, DType::f64);
  EXPECT_EQ(ops::avg_pool2d(x, 2, 2).to_vector(), (std::vector<double>{3.5, 5.5}));
  EXPECT_THROW(ops::adaptive_avg_pool2d(x, 0, 1), ArgumentError);
  EXPECT_THROW(ops::adaptive_avg_pool2d(x, 3, 1), ArgumentError);
}

TEST(Upsample, ConstantsStayConstant) {
  Tensor x = Tensor::full({2, 3, 2}, -1.25, DType::f64);
  for (double v : ops::upsample_bilinear(x, 7, 5).to_vector()) EXPECT_NEAR(v, -1.25, 1e-15);
  Tensor one = Tensor::full({1, 1, 1}, 3.0, DType::f64);
  Tensor y = ops::upsample_bilinear(one, 4, 4);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4}));
  for (double v : y.to_vector()) EXPECT_EQ(v, 3.0);
  EXPECT_THROW(ops::upsample_bilinear(x, 0, 5), ArgumentError);
}

TEST(Upsample, MatchesHalfPixelOracle) {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({1, 1, 2, 2}, rng);
  Tensor y = ops::upsample_bilinear(x, 4, 4);
  // Half-pixel centres: source coordinate (o + 0.5) / 2 - 0.5, clamped to [0, 1].
  auto coord = [](int o) { return std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, 1.0); };
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const double u = coord(r), v = coord(c);
      const double ref = (1 - u) * ((1 - v) * x.at(0) + v * x.at(1)) + u * ((1 - v) * x.at(2) + v * x.at(3));
      EXPECT_NEAR(y.at(r * 4 + c), ref, 1e-6);
    }
}

TEST(Linearity, ConvUpsampleAvgPool) {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({2, 3, 6, 6}, rng), w = random_tensor({2, 3, 3, 3}, rng);
  const double a = -1.7;
  EXPECT_LT(max_abs_diff(ops::conv2d(ops::scale(x, a), w, Tensor(), 1, 1),
                         ops::scale(ops::conv2d(x, w, Tensor(), 1, 1), a)),
            1e-6);
  EXPECT_LT(max_abs_diff(ops::upsample_bilinear(ops::scale(x, a), 9, 11),
                         ops::scale(ops::upsample_bilinear(x, 9, 11), a)),
            1e-6);
  EXPECT_LT(max_abs_diff(ops::avg_pool2d(ops::scale(x, a), 2, 2), ops::scale(ops::avg_pool2d(x, 2, 2), a)),
            1e-6);
}

TEST(Autodiff, SquareHasGradientSix) {
  Tensor x = Tensor::from_values({1}, {3.0}, DType::f64);
  x.set_requires_grad(true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_EQ(x.grad().item(), 6.0);
}

TEST(Autodiff, ConvSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({1, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  backward(ops::sum(ops::conv2d(x, w, Tensor(), 1, 1)));
  NoGradGuard guard;
  auto f = [&] { return ops::sum(ops::conv2d(x, w, Tensor(), 1, 1)).item(); };
  for (std::int64_t i = 0; i < w.numel(); ++i) {
    const double n = numeric_derivative(f, w, i);
    EXPECT_LT(std::abs(w.grad().at(i) - n) / std::max({std::abs(n), 1e-6}), 1e-4);
  }
  for (std::int64_t i = 0; i < x.numel(); i += 3) {
    const double n = numeric_derivative(f, x, i);
    EXPECT_LT(std::abs(x.grad().at(i) - n) / std::max({std::abs(n), 1e-6}), 1e-4);
  }
}

TEST(Autodiff, SigmoidLinearChainMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({4, 3}, rng), w = random_tensor({2, 3}, rng), b = random_tensor({2}, rng);
  for (Tensor* t : {&x, &w, &b}) t->set_requires_grad(true);
  Tensor proj = random_tensor({4, 2}, rng);
  auto loss = [&] { return ops::sum(ops::mul(ops::sigmoid(ops::linear(x, w, b)), proj)); };
  backward(loss());
  NoGradGuard guard;
  for (Tensor* t : {&x, &w, &b}) {
    for (std::int64_t i = 0; i < t->numel(); ++i) {
      const double n = numeric_derivative([&] { return loss().item(); }, *t, i);
      EXPECT_LT(std::abs(t->grad().at(i) - n) / std::max({std::abs(n), 1e-6}), 1e-4);
    }
  }
}

TEST(Autodiff, ErrorsAndTapeLifecycle) {
  Tensor x = Tensor::from_values({2}, {1, 2}, DType::f64);
  x.set_requires_grad(true);
  Tensor y = ops::scale(x, 2.0);
  EXPECT_THROW(backward(y), ArgumentError);
  GradientTape::current().clear();

  Tensor loss = ops::sum(ops::mul(x, x));
  EXPECT_GT(GradientTape::current().size(), 0u);
  backward(loss);
  EXPECT_EQ(GradientTape::current().size(), 0u);
  EXPECT_THROW(backward(loss), StateError);
}

TEST(Autodiff, UnreachableTensorsUntouchedAndNoGradSkipsRecording) {
  Tensor x = Tensor::from_values({2}, {1, 2}, DType::f64);
  Tensor unused = Tensor::from_values({2}, {3, 4}, DType::f64);
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  backward(ops::sum(x));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(unused.has_grad());
  {
    NoGradGuard guard;
    ops::sum(ops::mul(x, x));
    EXPECT_EQ(GradientTape::current().size(), 0u);
  }
  EXPECT_TRUE(grad_enabled());
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  Tensor x = Tensor::from_values({1}, {2.0}, DType::f64);
  x.set_requires_grad(true);
  // d/dx (x*x + 3x) = 2x + 3
  backward(ops::sum(ops::add(ops::mul(x, x), ops::scale(x, 3.0))));
  EXPECT_EQ(x.grad().item(), 7.0);
}

TEST(Autodiff, ConcatSliceReshapeRoundTrip) {
  std::mt19937_64 rng(10);
  Tensor a = random_tensor({2, 1, 2, 2}, rng), b = random_tensor({2, 3, 2, 2}, rng);
  const Tensor parts[] = {a, b};
  Tensor c = ops::concat_channels(parts);
  EXPECT_EQ(c.shape(), (Shape{2, 4, 2, 2}));
  EXPECT_EQ(c.at(4), b.at(0));
  Tensor s = ops::slice_batch(c, 1, 2);
  EXPECT_EQ(s.shape(), (Shape{1, 4, 2, 2}));
  EXPECT_EQ(s.at(0), a.at(4));
  EXPECT_THROW(ops::reshape(c, {5, 7}), ShapeError);
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({2, 3, 9, 9}, rng, DType::f32), w = random_tensor({4, 3, 3, 3}, rng, DType::f32);
  Tensor y1 = ops::conv2d(x, w, Tensor(), 2, 1), y2 = ops::conv2d(x, w, Tensor(), 2, 1);
  EXPECT_TRUE(test::bitwise_equal(y1, y2));
}

class KernelExec : public ::testing::Test {
 protected:
  void TearDown() override { kernels::set_default_exec(kernels::Exec::parallel); }
};

TEST_F(KernelExec, SerialAndParallelAgree) {
  std::mt19937_64 rng(12);
  kernels::ConvGeometry g{3, 5, 11, 9, 6, 3, 3, 2, 1};
  std::vector<double> in(3 * 5 * 11 * 9), w(6 * 5 * 9), bias(6), go(3 * 6 * g.out_h() * g.out_w());
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto* v : {&in, &w, &bias, &go})
    for (auto& e : *v) e = d(rng);
  using kernels::Exec;
  auto run = [&](Exec e) {
    std::vector<double> out(go.size()), gi(in.size()), gw(w.size()), gb(6);
    kernels::conv2d_forward(g, in.data(), w.data(), bias.data(), out.data(), e);
    kernels::conv2d_backward_input(g, go.data(), w.data(), gi.data(), e);
    kernels::conv2d_backward_weight(g, go.data(), in.data(), gw.data(), e);
    kernels::conv2d_backward_bias(g, go.data(), gb.data(), e);
    return std::vector<std::vector<double>>{out, gi, gw, gb};
  };
  const auto s = run(Exec::serial), p = run(Exec::parallel);
  for (std::size_t k = 0; k < s.size(); ++k)
    for (std::size_t i = 0; i < s[k].size(); ++i) EXPECT_NEAR(s[k][i], p[k][i], 1e-12);

  kernels::MixGeometry m{2, 7, 5, 13};
  std::vector<double> mw(35), mx(2 * 7 * 13), mg(2 * 5 * 13);
  for (auto* v : {&mw, &mx, &mg})
    for (auto& e : *v) e = d(rng);
  auto mix = [&](Exec e) {
    std::vector<double> out(mg.size()), gx(mx.size()), gw(mw.size());
    kernels::channel_mix_forward(m, mw.data(), mx.data(), out.data(), e);
    kernels::channel_mix_backward_input(m, mw.data(), mg.data(), gx.data(), e);
    kernels::channel_mix_backward_weight(m, mx.data(), mg.data(), gw.data(), e);
    return std::vector<std::vector<double>>{out, gx, gw};
  };
  const auto ms = mix(Exec::serial), mp = mix(Exec::parallel);
  for (std::size_t k = 0; k < ms.size(); ++k)
    for (std::size_t i = 0; i < ms[k].size(); ++i) EXPECT_NEAR(ms[k][i], mp[k][i], 1e-12);
}

TEST_F(KernelExec, ParallelResultIndependentOfThreadCount) {
  std::mt19937_64 rng(13);
  Tensor x = random_tensor({2, 6, 16, 16}, rng, DType::f32), w = random_tensor({8, 6, 3, 3}, rng, DType::f32);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  Tensor proj = random_tensor({2, 8, 16, 16}, rng, DType::f32);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    x.zero_grad();
    w.zero_grad();
    Tensor y = ops::conv2d(x, w, Tensor(), 1, 1);
    backward(ops::sum(ops::mul(y, proj)));
    return std::vector<Tensor>{y, x.grad(), w.grad()};
  };
  const int saved = omp_get_max_threads();
  const auto one = run(1), four = run(4);
  omp_set_num_threads(saved);
  for (std::size_t k = 0; k < one.size(); ++k) EXPECT_TRUE(test::bitwise_equal(one[k], four[k]));
}

TEST_F(KernelExec, SerialModeDrivesOps) {
  std::mt19937_64 rng(14);
  Tensor x = random_tensor({1, 2, 6, 6}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  Tensor par = ops::conv2d(x, w, Tensor(), 1, 1);
  kernels::set_default_exec(kernels::Exec::serial);
  EXPECT_EQ(kernels::default_exec(), kernels::Exec::serial);
  Tensor ser = ops::conv2d(x, w, Tensor(), 1, 1);
  EXPECT_LT(max_abs_diff(par, ser), 1e-12);
}

TEST(Activations, NanPropagatesThroughReluAndMaxPool) {
  const double nan = std::nan("");
  const Tensor r = ops::relu(Tensor::from_values({3}, {nan, -1.0, 2.0}, DType::f64));
  EXPECT_TRUE(std::isnan(r.at(0)));
  Tensor x = Tensor::full({1, 1, 2, 2}, 1.0, DType::f64);
  x.set(3, nan);
  EXPECT_TRUE(std::isnan(ops::max_pool2d(x, 2, 2, 0).at(0)));
}
