#include "mncd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mncd/autodiff.hpp"
#include "mncd/kernels.hpp"

namespace mncd::ops {

namespace {

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ArgumentError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                        dtype_name(b.dtype()) + ")");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_same_dtype(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_ndim(const Tensor& x, int ndim, const char* op) {
  if (x.ndim() != ndim) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(ndim) +
                     "-d tensor, got " + shape_str(x.shape()));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Runs fn on a 4-d view of x, mapping CHW inputs to a batch of one.
template <typename F>
Tensor batched(const Tensor& x, const char* op, F&& fn) {
  if (x.ndim() == 3) {
    Tensor out = fn(reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)}));
    return reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
  }
  require_ndim(x, 4, op);
  return fn(x);
}

Tensor elementwise_binary(const Tensor& a, const Tensor& b, int kind, const char* op) {
  require_same_shape(a, b, op);
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.values<T>(), y = b.values<T>();
    auto o = out.values<T>();
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] = kind == 0 ? x[i] + y[i] : kind == 1 ? x[i] - y[i] : x[i] * y[i];
    }
  });
  emit(op, {a, b}, {out}, [a, b, kind](std::span<const Tensor> grads) {
    const Tensor& g = grads[0];
    if (kind == 0) {
      accumulate_grad(a, g);
      accumulate_grad(b, g);
      return;
    }
    if (kind == 1) {
      accumulate_grad(a, g);
      if (b.requires_grad()) accumulate_grad(b, scale(g, -1.0));
      return;
    }
    NoGradGuard guard;
    if (a.requires_grad()) accumulate_grad(a, mul(g, b));
    if (b.requires_grad()) accumulate_grad(b, mul(g, a));
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, 0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, 1, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, 2, "mul"); }

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.values<T>();
    auto o = out.values<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<T>(in[i] * factor);
  });
  emit("scale", {x}, {out}, [x, factor](std::span<const Tensor> grads) {
    NoGradGuard guard;
    accumulate_grad(x, scale(grads[0], factor));
  });
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_same_dtype(x, bias, "add_channel_bias");
  if (x.ndim() < 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(1)) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " vs input " +
                     shape_str(x.shape()));
  }
  const auto n = x.dim(0), c = x.dim(1), plane = x.numel() / (n * c);
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.values<T>();
    auto b = bias.values<T>();
    auto o = out.values<T>();
    for (std::int64_t i = 0; i < n * c; ++i)
      for (std::int64_t p = 0; p < plane; ++p) o[i * plane + p] = in[i * plane + p] + b[i % c];
  });
  emit("add_channel_bias", {x, bias}, {out}, [x, bias, n, c, plane](std::span<const Tensor> grads) {
    const Tensor& g = grads[0];
    accumulate_grad(x, g);
    if (!bias.requires_grad()) return;
    Tensor gb(bias.shape(), bias.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto go = g.values<T>();
      auto dst = gb.values<T>();
      for (std::int64_t ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (std::int64_t s = 0; s < n; ++s)
          for (std::int64_t p = 0; p < plane; ++p) acc += go[(s * c + ch) * plane + p];
        dst[ch] = acc;
      }
    });
    accumulate_grad(bias, gb);
  });
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat_channels: no inputs");
  const Tensor& first = parts[0];
  if (first.ndim() < 2) throw ShapeError("concat_channels: inputs need a channel axis");
  Shape shape = first.shape();
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    require_same_dtype(first, p, "concat_channels");
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat_channels: rank mismatch");
    s[1] = shape[1];
    if (s != shape) {
      throw ShapeError("concat_channels: incompatible part " + shape_str(p.shape()) + " vs " +
                       shape_str(first.shape()));
    }
    channels += p.dim(1);
  }
  shape[1] = channels;
  const auto n = first.dim(0);
  const auto plane = first.numel() / (n * first.dim(1));
  Tensor out(shape, first.dtype());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  dispatch(first.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = out.values<T>();
    std::int64_t offset = 0;
    for (const auto& p : inputs) {
      auto in = p.values<T>();
      const auto pc = p.dim(1);
      for (std::int64_t s = 0; s < n; ++s)
        std::copy_n(in.begin() + s * pc * plane, pc * plane,
                    o.begin() + (s * channels + offset) * plane);
      offset += pc;
    }
  });
  emit("concat_channels", inputs, {out},
       [inputs, n, channels, plane](std::span<const Tensor> grads) {
         const Tensor& g = grads[0];
         std::int64_t offset = 0;
         for (const auto& p : inputs) {
           const auto pc = p.dim(1);
           if (p.requires_grad()) {
             Tensor gp(p.shape(), p.dtype());
             dispatch(g.dtype(), [&](auto tag) {
               using T = decltype(tag);
               auto go = g.values<T>();
               auto dst = gp.values<T>();
               for (std::int64_t s = 0; s < n; ++s)
                 std::copy_n(go.begin() + (s * channels + offset) * plane, pc * plane,
                             dst.begin() + s * pc * plane);
             });
             accumulate_grad(p, gp);
           }
           offset += pc;
         }
       });
  return out;
}

Tensor slice_batch(const Tensor& x, std::int64_t begin, std::int64_t end) {
  if (x.ndim() < 1 || begin < 0 || end > x.dim(0) || begin >= end) {
    throw ArgumentError("slice_batch: invalid range [" + std::to_string(begin) + "," +
                        std::to_string(end) + ") for " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  const auto row = x.numel() / shape[0];
  shape[0] = end - begin;
  Tensor out(shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.values<T>();
    std::copy_n(in.begin() + begin * row, (end - begin) * row, out.values<T>().begin());
  });
  emit("slice_batch", {x}, {out}, [x, begin, row](std::span<const Tensor> grads) {
    Tensor gx = Tensor::zeros(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto go = grads[0].values<T>();
      std::copy(go.begin(), go.end(), gx.values<T>().begin() + begin * row);
    });
    accumulate_grad(x, gx);
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), x.dtype());
  out.assign(x);
  emit("reshape", {x}, {out}, [x](std::span<const Tensor> grads) {
    Tensor gx(x.shape(), x.dtype());
    gx.assign(grads[0]);
    accumulate_grad(x, gx);
  });
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out({1}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T acc = 0;
    for (auto v : x.values<T>()) acc += v;
    out.values<T>()[0] = acc;
  });
  emit("sum", {x}, {out}, [x](std::span<const Tensor> grads) {
    accumulate_grad(x, Tensor::full(x.shape(), grads[0].item(), x.dtype()));
  });
  return out;
}

Tensor mean(const Tensor& x) {
  const auto n = static_cast<double>(x.numel());
  Tensor out({1}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T acc = 0;
    for (auto v : x.values<T>()) acc += v;
    out.values<T>()[0] = static_cast<T>(acc / n);
  });
  emit("mean", {x}, {out}, [x, n](std::span<const Tensor> grads) {
    accumulate_grad(x, Tensor::full(x.shape(), grads[0].item() / n, x.dtype()));
  });
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.values<T>();
    auto o = out.values<T>();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const T v = in[i];
      switch (kind) {
        case Activation::relu: o[i] = v <= 0 ? T(0) : v; break;  // NaN passes through
        case Activation::silu: o[i] = v * stable_sigmoid(v); break;
        case Activation::sigmoid: o[i] = stable_sigmoid(v); break;
      }
    }
  });
  const char* name = kind == Activation::relu ? "relu" : kind == Activation::silu ? "silu" : "sigmoid";
  emit(name, {x}, {out}, [x, out, kind](std::span<const Tensor> grads) {
    Tensor gx(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto in = x.values<T>();
      auto y = out.values<T>();
      auto go = grads[0].values<T>();
      auto dst = gx.values<T>();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        T d = 0;
        switch (kind) {
          case Activation::relu: d = in[i] > 0 ? T(1) : T(0); break;
          case Activation::silu: {
            const T s = stable_sigmoid(in[i]);
            d = s + in[i] * s * (T(1) - s);
            break;
          }
          case Activation::sigmoid: d = y[i] * (T(1) - y[i]); break;
        }
        dst[i] = go[i] * d;
      }
    });
    accumulate_grad(x, gx);
  });
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  return batched(input, "conv2d", [&](const Tensor& x) {
    require_same_dtype(x, weight, "conv2d");
    require_ndim(weight, 4, "conv2d weight");
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (padding < 0) throw ArgumentError("conv2d: padding must be >= 0");
    if (weight.dim(1) != x.dim(1)) {
      throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) +
                       " channels but weight expects " + std::to_string(weight.dim(1)));
    }
    if (bias.defined()) {
      require_same_dtype(x, bias, "conv2d bias");
      if (bias.ndim() != 1 || bias.dim(0) != weight.dim(0)) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " vs weight " +
                         shape_str(weight.shape()));
      }
    }
    kernels::ConvGeometry g;
    g.batch = x.dim(0);
    g.in_channels = x.dim(1);
    g.in_h = x.dim(2);
    g.in_w = x.dim(3);
    g.out_channels = weight.dim(0);
    g.kernel_h = weight.dim(2);
    g.kernel_w = weight.dim(3);
    g.stride = stride;
    g.padding = padding;
    if (g.in_h + 2 * padding < g.kernel_h || g.in_w + 2 * padding < g.kernel_w) {
      throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " does not fit input " +
                       shape_str(x.shape()) + " with padding " + std::to_string(padding));
    }
    Tensor out({g.batch, g.out_channels, g.out_h(), g.out_w()}, x.dtype());
    const auto exec = kernels::default_exec();
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      kernels::conv2d_forward<T>(g, x.values<T>().data(), weight.values<T>().data(),
                                 bias.defined() ? bias.values<T>().data() : nullptr,
                                 out.values<T>().data(), exec);
    });
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    emit("conv2d", inputs, {out}, [x, weight, bias, g, exec](std::span<const Tensor> grads) {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* go = grads[0].values<T>().data();
        if (x.requires_grad()) {
          Tensor gx(x.shape(), x.dtype());
          kernels::conv2d_backward_input<T>(g, go, weight.values<T>().data(),
                                            gx.values<T>().data(), exec);
          accumulate_grad(x, gx);
        }
        if (weight.requires_grad()) {
          Tensor gw(weight.shape(), weight.dtype());
          kernels::conv2d_backward_weight<T>(g, go, x.values<T>().data(),
                                             gw.values<T>().data(), exec);
          accumulate_grad(weight, gw);
        }
        if (bias.defined() && bias.requires_grad()) {
          Tensor gb(bias.shape(), bias.dtype());
          kernels::conv2d_backward_bias<T>(g, go, gb.values<T>().data(), exec);
          accumulate_grad(bias, gb);
        }
      });
    });
    return out;
  });
}

Tensor channel_mix(const Tensor& weight, const Tensor& x) {
  require_same_dtype(x, weight, "channel_mix");
  require_ndim(weight, 2, "channel_mix weight");
  if (x.ndim() < 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("channel_mix: weight " + shape_str(weight.shape()) + " vs input " +
                     shape_str(x.shape()));
  }
  kernels::MixGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.out_channels = weight.dim(0);
  g.plane = x.numel() / (g.batch * g.in_channels);
  Shape shape = x.shape();
  shape[1] = g.out_channels;
  Tensor out(shape, x.dtype());
  const auto exec = kernels::default_exec();
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::channel_mix_forward<T>(g, weight.values<T>().data(), x.values<T>().data(),
                                    out.values<T>().data(), exec);
  });
  emit("channel_mix", {weight, x}, {out}, [weight, x, g, exec](std::span<const Tensor> grads) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* go = grads[0].values<T>().data();
      if (x.requires_grad()) {
        Tensor gx(x.shape(), x.dtype());
        kernels::channel_mix_backward_input<T>(g, weight.values<T>().data(), go,
                                               gx.values<T>().data(), exec);
        accumulate_grad(x, gx);
      }
      if (weight.requires_grad()) {
        Tensor gw(weight.shape(), weight.dtype());
        kernels::channel_mix_backward_weight<T>(g, x.values<T>().data(), go,
                                                gw.values<T>().data(), exec);
        accumulate_grad(weight, gw);
      }
    });
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_ndim(x, 2, "linear");
  Tensor y = channel_mix(weight, x);
  return bias.defined() ? add_channel_bias(y, bias) : y;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, NormMode mode, double eps, double momentum) {
  require_ndim(x, 4, "batch_norm");
  const auto n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean),
                          static_cast<const Tensor*>(&running_var)}) {
    require_same_dtype(x, *t, "batch_norm");
    if (t->ndim() != 1 || t->dim(0) != c) {
      throw ShapeError("batch_norm: per-channel tensor " + shape_str(t->shape()) +
                       " vs input " + shape_str(x.shape()));
    }
  }
  const auto count = n * plane;
  const bool train = mode == NormMode::train;
  if (train && count < 2) {
    throw ArgumentError("batch_norm: degenerate variance, train mode needs N*H*W >= 2, got " +
                        shape_str(x.shape()));
  }
  Tensor out(x.shape(), x.dtype());
  // Normalized input and per-channel inverse std, kept for the adjoint.
  Tensor xhat(x.shape(), x.dtype());
  Tensor inv_std({c}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.values<T>();
    auto xh = xhat.values<T>();
    auto o = out.values<T>();
    auto gm = gamma.values<T>();
    auto bt = beta.values<T>();
    auto rm = running_mean.values<T>();
    auto rv = running_var.values<T>();
    auto is = inv_std.values<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double mu = 0, var = 0;
      if (train) {
        for (std::int64_t s = 0; s < n; ++s)
          for (std::int64_t p = 0; p < plane; ++p) mu += in[(s * c + ch) * plane + p];
        mu /= static_cast<double>(count);
        for (std::int64_t s = 0; s < n; ++s)
          for (std::int64_t p = 0; p < plane; ++p) {
            const double d = in[(s * c + ch) * plane + p] - mu;
            var += d * d;
          }
        var /= static_cast<double>(count);
        const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
        rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * mu);
        rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
      } else {
        mu = rm[ch];
        var = rv[ch];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
      is[ch] = inv;
      const T m = static_cast<T>(mu);
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t p = 0; p < plane; ++p) {
          const auto i = (s * c + ch) * plane + p;
          xh[i] = (in[i] - m) * inv;
          o[i] = gm[ch] * xh[i] + bt[ch];
        }
    }
  });
  emit("batch_norm", {x, gamma, beta}, {out},
       [x, gamma, beta, xhat, inv_std, train, n, c, plane](std::span<const Tensor> grads) {
         const auto count = static_cast<double>(n * plane);
         Tensor gx(x.shape(), x.dtype());
         Tensor gg(gamma.shape(), gamma.dtype());
         Tensor gb(beta.shape(), beta.dtype());
         dispatch(x.dtype(), [&](auto tag) {
           using T = decltype(tag);
           auto go = grads[0].values<T>();
           auto xh = xhat.values<T>();
           auto gm = gamma.values<T>();
           auto is = inv_std.values<T>();
           auto dx = gx.values<T>();
           auto dg = gg.values<T>();
           auto db = gb.values<T>();
           for (std::int64_t ch = 0; ch < c; ++ch) {
             double sum_g = 0, sum_gx = 0;
             for (std::int64_t s = 0; s < n; ++s)
               for (std::int64_t p = 0; p < plane; ++p) {
                 const auto i = (s * c + ch) * plane + p;
                 sum_g += go[i];
                 sum_gx += go[i] * xh[i];
               }
             dg[ch] = static_cast<T>(sum_gx);
             db[ch] = static_cast<T>(sum_g);
             const double k = static_cast<double>(gm[ch]) * is[ch];
             for (std::int64_t s = 0; s < n; ++s)
               for (std::int64_t p = 0; p < plane; ++p) {
                 const auto i = (s * c + ch) * plane + p;
                 if (train) {
                   dx[i] = static_cast<T>(
                       k * (go[i] - sum_g / count - xh[i] * sum_gx / count));
                 } else {
                   dx[i] = static_cast<T>(k * go[i]);
                 }
               }
           }
         });
         accumulate_grad(x, gx);
         accumulate_grad(gamma, gg);
         accumulate_grad(beta, gb);
       });
  return out;
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding) {
  return batched(input, "max_pool2d", [&](const Tensor& x) {
    if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
      throw ArgumentError("max_pool2d: invalid kernel/stride/padding");
    }
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h + 2 * padding < kernel || w + 2 * padding < kernel) {
      throw ShapeError("max_pool2d: window larger than input " + shape_str(x.shape()));
    }
    const auto oh = (h + 2 * padding - kernel) / stride + 1;
    const auto ow = (w + 2 * padding - kernel) / stride + 1;
    Tensor out({n, c, oh, ow}, x.dtype());
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()));
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto in = x.values<T>();
      auto o = out.values<T>();
      for (std::int64_t pl = 0; pl < n * c; ++pl)
        for (std::int64_t oy = 0; oy < oh; ++oy)
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            T best = -std::numeric_limits<T>::infinity();
            std::int64_t best_i = -1;
            for (std::int64_t ky = 0; ky < kernel; ++ky)
              for (std::int64_t kx = 0; kx < kernel; ++kx) {
                const auto iy = oy * stride - padding + ky;
                const auto ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const auto i = (pl * h + iy) * w + ix;
                if (best_i < 0 || in[i] > best || std::isnan(in[i])) {
                  best = in[i];
                  best_i = i;
                }
              }
            const auto oi = (pl * oh + oy) * ow + ox;
            o[oi] = best;
            (*argmax)[oi] = best_i;
          }
    });
    emit("max_pool2d", {x}, {out}, [x, argmax](std::span<const Tensor> grads) {
      Tensor gx = Tensor::zeros(x.shape(), x.dtype());
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto go = grads[0].values<T>();
        auto dst = gx.values<T>();
        for (std::size_t i = 0; i < go.size(); ++i) dst[(*argmax)[i]] += go[i];
      });
      accumulate_grad(x, gx);
    });
    return out;
  });
}

Tensor avg_pool2d(const Tensor& input, int kernel, int stride) {
  return batched(input, "avg_pool2d", [&](const Tensor& x) {
    if (kernel < 1 || stride < 1) throw ArgumentError("avg_pool2d: invalid kernel/stride");
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < kernel || w < kernel) {
      throw ShapeError("avg_pool2d: window larger than input " + shape_str(x.shape()));
    }
    const auto oh = (h - kernel) / stride + 1;
    const auto ow = (w - kernel) / stride + 1;
    const double area = static_cast<double>(kernel) * kernel;
    Tensor out({n, c, oh, ow}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto in = x.values<T>();
      auto o = out.values<T>();
      for (std::int64_t pl = 0; pl < n * c; ++pl)
        for (std::int64_t oy = 0; oy < oh; ++oy)
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            T acc = 0;
            for (std::int64_t ky = 0; ky < kernel; ++ky)
              for (std::int64_t kx = 0; kx < kernel; ++kx)
                acc += in[(pl * h + oy * stride + ky) * w + ox * stride + kx];
            o[(pl * oh + oy) * ow + ox] = static_cast<T>(acc / area);
          }
    });
    emit("avg_pool2d", {x}, {out}, [x, kernel, stride, oh, ow, area](std::span<const Tensor> grads) {
      const auto pls = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      Tensor gx = Tensor::zeros(x.shape(), x.dtype());
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto go = grads[0].values<T>();
        auto dst = gx.values<T>();
        for (std::int64_t pl = 0; pl < pls; ++pl)
          for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const T g = static_cast<T>(go[(pl * oh + oy) * ow + ox] / area);
              for (std::int64_t ky = 0; ky < kernel; ++ky)
                for (std::int64_t kx = 0; kx < kernel; ++kx)
                  dst[(pl * h + oy * stride + ky) * w + ox * stride + kx] += g;
            }
      });
      accumulate_grad(x, gx);
    });
    return out;
  });
}

Tensor adaptive_avg_pool2d(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("adaptive_avg_pool2d: target size must be >= 1");
  return batched(input, "adaptive_avg_pool2d", [&](const Tensor& x) {
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_h > h || out_w > w) {
      throw ArgumentError("adaptive_avg_pool2d: target " + std::to_string(out_h) + "x" +
                          std::to_string(out_w) + " exceeds input " + shape_str(x.shape()));
    }
    auto bin = [](std::int64_t i, std::int64_t len, std::int64_t bins) {
      return std::pair<std::int64_t, std::int64_t>{(i * len) / bins,
                                                   ((i + 1) * len + bins - 1) / bins};
    };
    Tensor out({n, c, out_h, out_w}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto in = x.values<T>();
      auto o = out.values<T>();
      for (std::int64_t pl = 0; pl < n * c; ++pl)
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const auto [y0, y1] = bin(oy, h, out_h);
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const auto [x0, x1] = bin(ox, w, out_w);
            T acc = 0;
            for (auto iy = y0; iy < y1; ++iy)
              for (auto ix = x0; ix < x1; ++ix) acc += in[(pl * h + iy) * w + ix];
            o[(pl * out_h + oy) * out_w + ox] =
                static_cast<T>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
          }
        }
    });
    emit("adaptive_avg_pool2d", {x}, {out}, [x, out_h, out_w, bin](std::span<const Tensor> grads) {
      const auto pls = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      Tensor gx = Tensor::zeros(x.shape(), x.dtype());
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto go = grads[0].values<T>();
        auto dst = gx.values<T>();
        for (std::int64_t pl = 0; pl < pls; ++pl)
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const auto [y0, y1] = bin(oy, h, out_h);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
              const auto [x0, x1] = bin(ox, w, out_w);
              const T g = static_cast<T>(go[(pl * out_h + oy) * out_w + ox] /
                                         static_cast<double>((y1 - y0) * (x1 - x0)));
              for (auto iy = y0; iy < y1; ++iy)
                for (auto ix = x0; ix < x1; ++ix) dst[(pl * h + iy) * w + ix] += g;
            }
          }
      });
      accumulate_grad(x, gx);
    });
    return out;
  });
}

namespace {

// Source taps for one output coordinate under half-pixel centers.
struct Taps {
  std::int64_t i0;
  std::int64_t i1;
  double frac;
};

std::vector<Taps> interpolation_taps(std::int64_t in_len, std::int64_t out_len) {
  std::vector<Taps> taps(static_cast<std::size_t>(out_len));
  const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (std::int64_t o = 0; o < out_len; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in_len - 1) i0 = in_len - 1;
    const auto i1 = std::min(i0 + 1, in_len - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("upsample_bilinear: output size must be >= 1");
  return batched(input, "upsample_bilinear", [&](const Tensor& x) {
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_h < h || out_w < w) {
      throw ArgumentError("upsample_bilinear: output " + std::to_string(out_h) + "x" +
                          std::to_string(out_w) + " smaller than input " + shape_str(x.shape()));
    }
    auto ty = std::make_shared<std::vector<Taps>>(interpolation_taps(h, out_h));
    auto tx = std::make_shared<std::vector<Taps>>(interpolation_taps(w, out_w));
    Tensor out({n, c, out_h, out_w}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto in = x.values<T>();
      auto o = out.values<T>();
      for (std::int64_t pl = 0; pl < n * c; ++pl)
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const auto& a = (*ty)[static_cast<std::size_t>(oy)];
          const T* r0 = in.data() + (pl * h + a.i0) * w;
          const T* r1 = in.data() + (pl * h + a.i1) * w;
          const T fy = static_cast<T>(a.frac);
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const auto& b = (*tx)[static_cast<std::size_t>(ox)];
            const T fx = static_cast<T>(b.frac);
            const T top = r0[b.i0] * (T(1) - fx) + r0[b.i1] * fx;
            const T bot = r1[b.i0] * (T(1) - fx) + r1[b.i1] * fx;
            o[(pl * out_h + oy) * out_w + ox] = top * (T(1) - fy) + bot * fy;
          }
        }
    });
    emit("upsample_bilinear", {x}, {out}, [x, ty, tx, out_h, out_w](std::span<const Tensor> grads) {
      const auto pls = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      Tensor gx = Tensor::zeros(x.shape(), x.dtype());
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto go = grads[0].values<T>();
        auto dst = gx.values<T>();
        for (std::int64_t pl = 0; pl < pls; ++pl)
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const auto& a = (*ty)[static_cast<std::size_t>(oy)];
            T* r0 = dst.data() + (pl * h + a.i0) * w;
            T* r1 = dst.data() + (pl * h + a.i1) * w;
            const T fy = static_cast<T>(a.frac);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
              const auto& b = (*tx)[static_cast<std::size_t>(ox)];
              const T fx = static_cast<T>(b.frac);
              const T g = go[(pl * out_h + oy) * out_w + ox];
              r0[b.i0] += g * (T(1) - fy) * (T(1) - fx);
              r0[b.i1] += g * (T(1) - fy) * fx;
              r1[b.i0] += g * fy * (T(1) - fx);
              r1[b.i1] += g * fy * fx;
            }
          }
      });
      accumulate_grad(x, gx);
    });
    return out;
  });
}

}  // namespace mncd::ops
