#include "mncd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mncd/autodiff.hpp"
#include "mncd/ops.hpp"
#include "mncd/spectral.hpp"
#include "mncd/training.hpp"

namespace mncd::gradcheck {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

Result check(const std::string& name, const std::function<Tensor()>& loss_fn,
             const std::vector<nn::Parameter>& targets, std::int64_t per_tensor,
             std::mt19937_64& rng, const Options& options) {
  for (const auto& t : targets) {
    if (t.value.dtype() != DType::f64) {
      throw ArgumentError("gradcheck: target '" + t.name + "' must be f64");
    }
    Tensor v = t.value;
    v.set_requires_grad(true);
    v.zero_grad();
  }
  backward(loss_fn());
  std::vector<Tensor> analytic;
  for (const auto& t : targets) {
    analytic.push_back(t.value.has_grad() ? t.value.grad().clone()
                                          : Tensor::zeros(t.value.shape(), DType::f64));
  }

  Result result;
  result.name = name;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor value = targets[k].value;
    const auto n = static_cast<std::size_t>(value.numel());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t take = n;
    if (per_tensor >= 0 && static_cast<std::size_t>(per_tensor) < n) {
      take = static_cast<std::size_t>(per_tensor);
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
      }
    }
    for (std::size_t s = 0; s < take; ++s) {
      const auto i = static_cast<std::int64_t>(idx[s]);
      const double original = value.at(i);
      value.set(i, original + options.step);
      const double up = loss_fn().item();
      value.set(i, original - options.step);
      const double down = loss_fn().item();
      value.set(i, original);
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k].at(i);
      const double rel = relative_error(a, numeric, options.floor);
      ++result.checked;
      if (!(rel < options.tolerance)) ++result.failures;
      if (!(rel <= result.max_rel_error)) {
        result.max_rel_error = rel;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "[%lld]: analytic %.10g vs numeric %.10g",
                      static_cast<long long>(i), a, numeric);
        result.worst = targets[k].name + buf;
      }
    }
  }
  return result;
}

namespace {

struct Case {
  std::mt19937_64& rng;

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }

  Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), DType::f64);
    for (auto& v : t.values<double>()) v = uniform(lo, hi);
    return t;
  }

  // Magnitudes in [0.05, 1] so elementwise kinks stay out of reach of the
  // finite-difference step.
  Tensor away_from_zero(Shape shape) {
    Tensor t(std::move(shape), DType::f64);
    for (auto& v : t.values<double>()) v = (uniform(0, 1) < 0.5 ? -1 : 1) * uniform(0.05, 1.0);
    return t;
  }

  // Fixed random linear functional of an op output.
  Tensor project(const Tensor& y) {
    Tensor weights = random(y.shape());
    return ops::sum(ops::mul(y, weights));
  }
  Tensor project(const ComplexTensor& z) { return ops::add(project(z.re), project(z.im)); }
};

nn::Parameter param(std::string name, Tensor t) {
  t.set_requires_grad(true);
  return {std::move(name), t, nn::Init::zeros};
}

}  // namespace

std::vector<Result> check_primitives(const Options& options) {
  std::mt19937_64 rng(options.seed);
  Case c{rng};
  std::vector<Result> out;
  // Each projection draws fresh weights, so build them once per case.
  auto run = [&](const std::string& name, const std::vector<nn::Parameter>& targets,
                 const std::function<Tensor()>& forward) {
    out.push_back(check(name, forward, targets, -1, rng, options));
  };
  auto projected = [&](const Tensor& probe) {
    return std::make_shared<Tensor>(c.random(probe.shape()));
  };

  {
    auto a = param("a", c.random({2, 3, 4})), b = param("b", c.random({2, 3, 4}));
    auto w = projected(a.value);
    run("add", {a, b}, [=] { return ops::sum(ops::mul(ops::add(a.value, b.value), *w)); });
    run("sub", {a, b}, [=] { return ops::sum(ops::mul(ops::sub(a.value, b.value), *w)); });
    run("mul", {a, b}, [=] { return ops::sum(ops::mul(ops::mul(a.value, b.value), *w)); });
    run("scale", {a}, [=] { return ops::sum(ops::mul(ops::scale(a.value, -0.7), *w)); });
    run("sum", {a}, [=] { return ops::scale(ops::sum(a.value), 1.3); });
    run("mean", {a}, [=] { return ops::scale(ops::mean(a.value), 1.3); });
    run("reshape", {a}, [=] {
      return ops::sum(ops::mul(ops::reshape(a.value, {6, 4}), ops::reshape(*w, {6, 4})));
    });
  }
  {
    auto x = param("x", c.random({2, 3, 4, 5})), b = param("bias", c.random({3}));
    auto w = projected(x.value);
    run("add_channel_bias", {x, b},
        [=] { return ops::sum(ops::mul(ops::add_channel_bias(x.value, b.value), *w)); });
  }
  {
    auto a = param("a", c.random({2, 2, 3, 3})), b = param("b", c.random({2, 3, 3, 3}));
    auto w = std::make_shared<Tensor>(c.random({2, 5, 3, 3}));
    run("concat_channels", {a, b}, [=] {
      const Tensor parts[] = {a.value, b.value};
      return ops::sum(ops::mul(ops::concat_channels(parts), *w));
    });
  }
  {
    auto x = param("x", c.random({4, 2, 3}));
    auto w = std::make_shared<Tensor>(c.random({2, 2, 3}));
    run("slice_batch", {x}, [=] { return ops::sum(ops::mul(ops::slice_batch(x.value, 1, 3), *w)); });
  }
  for (auto kind : {ops::Activation::relu, ops::Activation::silu, ops::Activation::sigmoid}) {
    auto x = param("x", c.away_from_zero({2, 3, 4}));
    auto w = projected(x.value);
    const char* label = kind == ops::Activation::relu   ? "relu"
                        : kind == ops::Activation::silu ? "silu"
                                                        : "sigmoid";
    run(label, {x}, [=] { return ops::sum(ops::mul(ops::activation(x.value, kind), *w)); });
  }
  struct ConvCase {
    const char* label;
    Shape input;
    Shape weight;
    int stride, padding;
    bool bias;
  };
  for (const ConvCase& cc : {ConvCase{"conv2d 3x3 s1 p1", {2, 3, 7, 6}, {4, 3, 3, 3}, 1, 1, true},
                             ConvCase{"conv2d 3x3 s2 p1", {2, 3, 8, 7}, {4, 3, 3, 3}, 2, 1, true},
                             ConvCase{"conv2d 1x1 s2 nobias", {2, 4, 6, 6}, {3, 4, 1, 1}, 2, 0, false},
                             ConvCase{"conv2d unbatched", {3, 5, 5}, {2, 3, 3, 3}, 1, 0, true}}) {
    auto x = param("input", c.random(cc.input));
    auto k = param("weight", c.random(cc.weight));
    std::vector<nn::Parameter> targets{x, k};
    Tensor bias;
    if (cc.bias) {
      auto b = param("bias", c.random({cc.weight[0]}));
      bias = b.value;
      targets.push_back(b);
    }
    const Tensor probe = ops::conv2d(x.value.clone(), k.value.clone(),
                                     bias.defined() ? bias.clone() : Tensor(), cc.stride, cc.padding);
    auto w = projected(probe);
    const int stride = cc.stride, padding = cc.padding;
    run(cc.label, targets, [=] {
      return ops::sum(ops::mul(ops::conv2d(x.value, k.value, bias, stride, padding), *w));
    });
  }
  {
    auto k = param("weight", c.random({4, 3})), x = param("x", c.random({2, 3, 4, 4}));
    auto w = std::make_shared<Tensor>(c.random({2, 4, 4, 4}));
    run("channel_mix", {k, x}, [=] { return ops::sum(ops::mul(ops::channel_mix(k.value, x.value), *w)); });
  }
  {
    auto x = param("x", c.random({3, 5})), k = param("weight", c.random({4, 5}));
    auto b = param("bias", c.random({4}));
    auto w = std::make_shared<Tensor>(c.random({3, 4}));
    run("linear", {x, k, b},
        [=] { return ops::sum(ops::mul(ops::linear(x.value, k.value, b.value), *w)); });
  }
  for (auto mode : {ops::NormMode::train, ops::NormMode::eval}) {
    auto x = param("x", c.random({3, 4, 3, 3}));
    auto g = param("gamma", c.random({4}, 0.5, 1.5)), b = param("beta", c.random({4}));
    auto rm = std::make_shared<Tensor>(c.random({4}));
    auto rv = std::make_shared<Tensor>(c.random({4}, 0.5, 1.5));
    auto w = projected(x.value);
    run(mode == ops::NormMode::train ? "batch_norm train" : "batch_norm eval", {x, g, b}, [=] {
      return ops::sum(ops::mul(ops::batch_norm(x.value, g.value, b.value, *rm, *rv, mode), *w));
    });
  }
  {
    auto x = param("x", c.random({2, 2, 7, 7}));
    auto w = std::make_shared<Tensor>(c.random({2, 2, 4, 4}));
    run("max_pool2d", {x}, [=] { return ops::sum(ops::mul(ops::max_pool2d(x.value, 3, 2, 1), *w)); });
  }
  {
    auto x = param("x", c.random({2, 2, 6, 6}));
    auto w = std::make_shared<Tensor>(c.random({2, 2, 3, 3}));
    run("avg_pool2d", {x}, [=] { return ops::sum(ops::mul(ops::avg_pool2d(x.value, 2, 2), *w)); });
  }
  {
    auto x = param("x", c.random({2, 2, 7, 5}));
    auto w = std::make_shared<Tensor>(c.random({2, 2, 3, 2}));
    run("adaptive_avg_pool2d", {x},
        [=] { return ops::sum(ops::mul(ops::adaptive_avg_pool2d(x.value, 3, 2), *w)); });
  }
  {
    auto x = param("x", c.random({2, 2, 3, 4}));
    auto w = std::make_shared<Tensor>(c.random({2, 2, 7, 9}));
    run("upsample_bilinear", {x},
        [=] { return ops::sum(ops::mul(ops::upsample_bilinear(x.value, 7, 9), *w)); });
  }
  for (std::int64_t channels : {8, 6}) {
    const std::string suffix = channels == 8 ? " (radix-2)" : " (direct)";
    {
      auto x = param("x", c.random({2, channels, 3, 3}));
      auto wr = projected(x.value), wi = projected(x.value);
      run("dft_channels" + suffix, {x}, [=] {
        const auto z = spectral::dft_channels(x.value);
        return ops::add(ops::sum(ops::mul(z.re, *wr)), ops::sum(ops::mul(z.im, *wi)));
      });
    }
    {
      auto re = param("re", c.random({2, channels, 3, 3})), im = param("im", c.random({2, channels, 3, 3}));
      auto wr = projected(re.value), wi = projected(re.value);
      run("idft_channels" + suffix, {re, im}, [=] {
        const auto z = spectral::idft_channels({re.value, im.value});
        return ops::add(ops::sum(ops::mul(z.re, *wr)), ops::sum(ops::mul(z.im, *wi)));
      });
    }
  }
  {
    const std::int64_t ch = 4;
    auto re = param("spectrum.re", c.random({2, ch, 3, 3})), im = param("spectrum.im", c.random({2, ch, 3, 3}));
    auto wre = param("weight_re", c.random({ch, ch})), wim = param("weight_im", c.random({ch, ch}));
    auto bre = param("bias_re", c.random({ch})), bim = param("bias_im", c.random({ch}));
    auto pr = projected(re.value), pi = projected(re.value);
    run("fdconv", {re, im, wre, wim, bre, bim}, [=] {
      const auto z = spectral::fdconv({re.value, im.value},
                                      {wre.value, wim.value, bre.value, bim.value});
      return ops::add(ops::sum(ops::mul(z.re, *pr)), ops::sum(ops::mul(z.im, *pi)));
    });
  }
  {
    auto re = param("re", c.random({2, 3, 4})), im = param("im", c.random({2, 3, 4}));
    auto pr = projected(re.value), pi = projected(re.value);
    run("complex_silu", {re, im}, [=] {
      const auto z = spectral::complex_silu({re.value, im.value});
      return ops::add(ops::sum(ops::mul(z.re, *pr)), ops::sum(ops::mul(z.im, *pi)));
    });
  }
  {
    auto p = param("pred", c.random({2, 1, 4, 4}, 0.05, 0.95));
    auto y = std::make_shared<Tensor>(Tensor({2, 1, 4, 4}, DType::f64));
    for (auto& v : y->values<double>()) v = c.uniform(0, 1) < 0.5 ? 0.0 : 1.0;
    run("bce_loss", {p}, [=] { return bce_loss(p.value, *y); });
  }
  return out;
}

ModelConfig micro_model_config(bool use_changefft) {
  ModelConfig m;
  m.encoder.base_channels = 8;
  m.encoder.blocks = {1, 1, 1, 1};
  m.decoder.fpn_channels = 16;
  m.decoder.ppm_scales = {1, 2};
  m.use_changefft = use_changefft;
  return m;
}

Result check_micro_pipeline(const Options& options) {
  std::mt19937_64 rng(options.seed);
  Case c{rng};
  ChangeDetector model(micro_model_config(true), options.seed, DType::f64);
  model.set_mode(ops::NormMode::train);
  const Tensor a = c.random({2, 3, 64, 64}, 0.0, 1.0);
  const Tensor b = c.random({2, 3, 64, 64}, 0.0, 1.0);
  Tensor mask({2, 1, 64, 64}, DType::f64);
  for (auto& v : mask.values<double>()) v = c.uniform(0, 1) < 0.3 ? 1.0 : 0.0;

  const auto params = model.parameters();
  const auto n = static_cast<std::int64_t>(params.size());
  const std::int64_t per_tensor = (options.pipeline_samples + n - 1) / n;
  return check(
      "micro pipeline", [&] { return bce_loss(model.forward(a, b), mask); }, params, per_tensor,
      rng, options);
}

std::vector<Result> run_suite(const Options& options) {
  auto results = check_primitives(options);
  results.push_back(check_micro_pipeline(options));
  return results;
}

}  // namespace mncd::gradcheck
