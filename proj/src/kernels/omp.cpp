// Production kernels. Each parallel loop owns a disjoint block of outputs and
// accumulates it in a fixed order.
#include <algorithm>

#include "mncd/kernels.hpp"

namespace mncd::kernels::detail {

namespace {

// Valid [lo, hi) range of output columns for kernel tap kx.
struct Span {
  std::int64_t lo;
  std::int64_t hi;
};

Span valid_outputs(std::int64_t out_len, std::int64_t in_len, std::int64_t stride,
                   std::int64_t padding, std::int64_t tap) {
  // ix = o * stride - padding + tap must lie in [0, in_len).
  const std::int64_t first = padding - tap;
  std::int64_t lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const std::int64_t last = in_len - 1 + padding - tap;
  std::int64_t hi = last < 0 ? 0 : last / stride + 1;
  lo = std::min(lo, out_len);
  hi = std::clamp(hi, lo, out_len);
  return {lo, hi};
}

}  // namespace

template <typename T>
void conv2d_forward_omp(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto in_plane = g.in_h * g.in_w;
  const auto out_plane = oh * ow;
  const auto planes = g.batch * g.out_channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const auto n = idx / g.out_channels;
    const auto co = idx % g.out_channels;
    T* dst = out + idx * out_plane;
    std::fill(dst, dst + out_plane, bias ? bias[co] : T(0));
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
      const T* src = in + (n * g.in_channels + ci) * in_plane;
      const T* wk = w + (co * g.in_channels + ci) * g.kernel_h * g.kernel_w;
      for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
        const auto rows = valid_outputs(oh, g.in_h, g.stride, g.padding, ky);
        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
          const T wv = wk[ky * g.kernel_w + kx];
          const auto cols = valid_outputs(ow, g.in_w, g.stride, g.padding, kx);
          for (std::int64_t oy = rows.lo; oy < rows.hi; ++oy) {
            const T* srow = src + (oy * g.stride - g.padding + ky) * g.in_w;
            T* drow = dst + oy * ow;
            if (g.stride == 1) {
              const T* s = srow - g.padding + kx;
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] += wv * s[ox];
            } else {
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox)
                drow[ox] += wv * srow[ox * g.stride - g.padding + kx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input_omp(const ConvGeometry& g, const T* grad_out, const T* w,
                               T* grad_in) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto in_plane = g.in_h * g.in_w;
  const auto out_plane = oh * ow;
  const auto planes = g.batch * g.in_channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const auto n = idx / g.in_channels;
    const auto ci = idx % g.in_channels;
    T* dst = grad_in + idx * in_plane;
    std::fill(dst, dst + in_plane, T(0));
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      const T* go = grad_out + (n * g.out_channels + co) * out_plane;
      const T* wk = w + (co * g.in_channels + ci) * g.kernel_h * g.kernel_w;
      for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
        const auto rows = valid_outputs(oh, g.in_h, g.stride, g.padding, ky);
        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
          const T wv = wk[ky * g.kernel_w + kx];
          const auto cols = valid_outputs(ow, g.in_w, g.stride, g.padding, kx);
          for (std::int64_t oy = rows.lo; oy < rows.hi; ++oy) {
            T* drow = dst + (oy * g.stride - g.padding + ky) * g.in_w;
            const T* grow = go + oy * ow;
            if (g.stride == 1) {
              T* d = drow - g.padding + kx;
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) d[ox] += wv * grow[ox];
            } else {
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox)
                drow[ox * g.stride - g.padding + kx] += wv * grow[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight_omp(const ConvGeometry& g, const T* grad_out, const T* in,
                                T* grad_w) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto in_plane = g.in_h * g.in_w;
  const auto out_plane = oh * ow;
  const auto pairs = g.out_channels * g.in_channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < pairs; ++idx) {
    const auto co = idx / g.in_channels;
    const auto ci = idx % g.in_channels;
    T* wk = grad_w + idx * g.kernel_h * g.kernel_w;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      const auto rows = valid_outputs(oh, g.in_h, g.stride, g.padding, ky);
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const auto cols = valid_outputs(ow, g.in_w, g.stride, g.padding, kx);
        T acc = 0;
        for (std::int64_t n = 0; n < g.batch; ++n) {
          const T* go = grad_out + (n * g.out_channels + co) * out_plane;
          const T* src = in + (n * g.in_channels + ci) * in_plane;
          for (std::int64_t oy = rows.lo; oy < rows.hi; ++oy) {
            const T* srow = src + (oy * g.stride - g.padding + ky) * g.in_w;
            const T* grow = go + oy * ow;
            for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox)
              acc += grow[ox] * srow[ox * g.stride - g.padding + kx];
          }
        }
        wk[ky * g.kernel_w + kx] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward_bias_omp(const ConvGeometry& g, const T* grad_out, T* grad_bias) {
  const auto plane = g.out_h() * g.out_w();
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < g.out_channels; ++co) {
    T acc = 0;
    for (std::int64_t n = 0; n < g.batch; ++n) {
      const T* go = grad_out + (n * g.out_channels + co) * plane;
      for (std::int64_t p = 0; p < plane; ++p) acc += go[p];
    }
    grad_bias[co] = acc;
  }
}

template <typename T>
void channel_mix_forward_omp(const MixGeometry& g, const T* w, const T* x, T* out) {
  const auto planes = g.batch * g.out_channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const auto n = idx / g.out_channels;
    const auto k = idx % g.out_channels;
    T* dst = out + idx * g.plane;
    std::fill(dst, dst + g.plane, T(0));
    for (std::int64_t c = 0; c < g.in_channels; ++c) {
      const T wv = w[k * g.in_channels + c];
      const T* src = x + (n * g.in_channels + c) * g.plane;
      for (std::int64_t p = 0; p < g.plane; ++p) dst[p] += wv * src[p];
    }
  }
}

template <typename T>
void channel_mix_backward_input_omp(const MixGeometry& g, const T* w, const T* grad_out,
                                    T* grad_x) {
  const auto planes = g.batch * g.in_channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const auto n = idx / g.in_channels;
    const auto c = idx % g.in_channels;
    T* dst = grad_x + idx * g.plane;
    std::fill(dst, dst + g.plane, T(0));
    for (std::int64_t k = 0; k < g.out_channels; ++k) {
      const T wv = w[k * g.in_channels + c];
      const T* go = grad_out + (n * g.out_channels + k) * g.plane;
      for (std::int64_t p = 0; p < g.plane; ++p) dst[p] += wv * go[p];
    }
  }
}

template <typename T>
void channel_mix_backward_weight_omp(const MixGeometry& g, const T* x, const T* grad_out,
                                     T* grad_w) {
  const auto pairs = g.out_channels * g.in_channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < pairs; ++idx) {
    const auto k = idx / g.in_channels;
    const auto c = idx % g.in_channels;
    T acc = 0;
    for (std::int64_t n = 0; n < g.batch; ++n) {
      const T* src = x + (n * g.in_channels + c) * g.plane;
      const T* go = grad_out + (n * g.out_channels + k) * g.plane;
      for (std::int64_t p = 0; p < g.plane; ++p) acc += src[p] * go[p];
    }
    grad_w[idx] = acc;
  }
}

#define MNCD_INSTANTIATE(T)                                                                  \
  template void conv2d_forward_omp<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void conv2d_backward_input_omp<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void conv2d_backward_weight_omp<T>(const ConvGeometry&, const T*, const T*, T*);   \
  template void conv2d_backward_bias_omp<T>(const ConvGeometry&, const T*, T*);              \
  template void channel_mix_forward_omp<T>(const MixGeometry&, const T*, const T*, T*);       \
  template void channel_mix_backward_input_omp<T>(const MixGeometry&, const T*, const T*, T*); \
  template void channel_mix_backward_weight_omp<T>(const MixGeometry&, const T*, const T*, T*);

MNCD_INSTANTIATE(float)
MNCD_INSTANTIATE(double)
#undef MNCD_INSTANTIATE

}  // namespace mncd::kernels::detail
