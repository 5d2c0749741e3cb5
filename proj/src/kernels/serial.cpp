// Reference kernels: one output element at a time, no blocking, no threads.
#include "mncd/kernels.hpp"

namespace mncd::kernels::detail {

template <typename T>
void conv2d_forward_serial(const ConvGeometry& g, const T* in, const T* w, const T* bias,
                           T* out) {
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[co] : T(0);
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const auto iy = oy * g.stride - g.padding + ky;
                const auto ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       in[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          out[((n * g.out_channels + co) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input_serial(const ConvGeometry& g, const T* grad_out, const T* w,
                                  T* grad_in) {
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t i = 0; i < g.batch * g.in_channels * g.in_h * g.in_w; ++i) grad_in[i] = 0;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const T go = grad_out[((n * g.out_channels + co) * oh + oy) * ow + ox];
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const auto iy = oy * g.stride - g.padding + ky;
                const auto ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                grad_in[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    go * w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

template <typename T>
void conv2d_backward_weight_serial(const ConvGeometry& g, const T* grad_out, const T* in,
                                   T* grad_w) {
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t co = 0; co < g.out_channels; ++co)
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
      for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
          T acc = 0;
          for (std::int64_t n = 0; n < g.batch; ++n)
            for (std::int64_t oy = 0; oy < oh; ++oy)
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const auto iy = oy * g.stride - g.padding + ky;
                const auto ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += grad_out[((n * g.out_channels + co) * oh + oy) * ow + ox] *
                       in[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          grad_w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] = acc;
        }
}

template <typename T>
void conv2d_backward_bias_serial(const ConvGeometry& g, const T* grad_out, T* grad_bias) {
  const auto plane = g.out_h() * g.out_w();
  for (std::int64_t co = 0; co < g.out_channels; ++co) {
    T acc = 0;
    for (std::int64_t n = 0; n < g.batch; ++n)
      for (std::int64_t p = 0; p < plane; ++p) acc += grad_out[(n * g.out_channels + co) * plane + p];
    grad_bias[co] = acc;
  }
}

template <typename T>
void channel_mix_forward_serial(const MixGeometry& g, const T* w, const T* x, T* out) {
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t k = 0; k < g.out_channels; ++k)
      for (std::int64_t p = 0; p < g.plane; ++p) {
        T acc = 0;
        for (std::int64_t c = 0; c < g.in_channels; ++c)
          acc += w[k * g.in_channels + c] * x[(n * g.in_channels + c) * g.plane + p];
        out[(n * g.out_channels + k) * g.plane + p] = acc;
      }
}

template <typename T>
void channel_mix_backward_input_serial(const MixGeometry& g, const T* w, const T* grad_out,
                                       T* grad_x) {
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t c = 0; c < g.in_channels; ++c)
      for (std::int64_t p = 0; p < g.plane; ++p) {
        T acc = 0;
        for (std::int64_t k = 0; k < g.out_channels; ++k)
          acc += w[k * g.in_channels + c] * grad_out[(n * g.out_channels + k) * g.plane + p];
        grad_x[(n * g.in_channels + c) * g.plane + p] = acc;
      }
}

template <typename T>
void channel_mix_backward_weight_serial(const MixGeometry& g, const T* x, const T* grad_out,
                                        T* grad_w) {
  for (std::int64_t k = 0; k < g.out_channels; ++k)
    for (std::int64_t c = 0; c < g.in_channels; ++c) {
      T acc = 0;
      for (std::int64_t n = 0; n < g.batch; ++n)
        for (std::int64_t p = 0; p < g.plane; ++p)
          acc += x[(n * g.in_channels + c) * g.plane + p] *
                 grad_out[(n * g.out_channels + k) * g.plane + p];
      grad_w[k * g.in_channels + c] = acc;
    }
}

#define MNCD_INSTANTIATE(T)                                                                     \
  template void conv2d_forward_serial<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void conv2d_backward_input_serial<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void conv2d_backward_weight_serial<T>(const ConvGeometry&, const T*, const T*, T*);   \
  template void conv2d_backward_bias_serial<T>(const ConvGeometry&, const T*, T*);              \
  template void channel_mix_forward_serial<T>(const MixGeometry&, const T*, const T*, T*);       \
  template void channel_mix_backward_input_serial<T>(const MixGeometry&, const T*, const T*, T*); \
  template void channel_mix_backward_weight_serial<T>(const MixGeometry&, const T*, const T*, T*);

MNCD_INSTANTIATE(float)
MNCD_INSTANTIATE(double)
#undef MNCD_INSTANTIATE

}  // namespace mncd::kernels::detail
