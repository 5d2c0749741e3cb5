#pragma once

#include <cstdint>

namespace mncd::kernels {

// serial: plain nested-loop reference kernels, kept for testing and
// benchmarking. parallel: OpenMP kernels used in production. Parallel kernels
// split work only across independent outputs, so their results do not depend
// on the thread count.
enum class Exec { serial, parallel };

Exec default_exec();
void set_default_exec(Exec exec);

struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t in_h = 1;
  std::int64_t in_w = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;

  std::int64_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::int64_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
};

// out[n,co,:,:] = bias[co] + sum_{ci,ky,kx} w[co,ci,ky,kx] * in[n,ci,...]
// bias may be null. All backward kernels overwrite their destination.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out,
                    Exec exec);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* w, T* grad_in,
                           Exec exec);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_w,
                            Exec exec);
template <typename T>
void conv2d_backward_bias(const ConvGeometry& g, const T* grad_out, T* grad_bias, Exec exec);

// Per-pixel channel mixing: out[n,k,p] = sum_c w[k,c] * x[n,c,p] for p over
// `plane` spatial positions.
struct MixGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t plane = 1;
};

template <typename T>
void channel_mix_forward(const MixGeometry& g, const T* w, const T* x, T* out, Exec exec);
template <typename T>
void channel_mix_backward_input(const MixGeometry& g, const T* w, const T* grad_out, T* grad_x,
                                Exec exec);
template <typename T>
void channel_mix_backward_weight(const MixGeometry& g, const T* x, const T* grad_out, T* grad_w,
                                 Exec exec);

namespace detail {

template <typename T>
void conv2d_forward_serial(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out);
template <typename T>
void conv2d_backward_input_serial(const ConvGeometry& g, const T* grad_out, const T* w,
                                  T* grad_in);
template <typename T>
void conv2d_backward_weight_serial(const ConvGeometry& g, const T* grad_out, const T* in,
                                   T* grad_w);
template <typename T>
void conv2d_backward_bias_serial(const ConvGeometry& g, const T* grad_out, T* grad_bias);
template <typename T>
void channel_mix_forward_serial(const MixGeometry& g, const T* w, const T* x, T* out);
template <typename T>
void channel_mix_backward_input_serial(const MixGeometry& g, const T* w, const T* grad_out,
                                       T* grad_x);
template <typename T>
void channel_mix_backward_weight_serial(const MixGeometry& g, const T* x, const T* grad_out,
                                        T* grad_w);

template <typename T>
void conv2d_forward_omp(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out);
template <typename T>
void conv2d_backward_input_omp(const ConvGeometry& g, const T* grad_out, const T* w, T* grad_in);
template <typename T>
void conv2d_backward_weight_omp(const ConvGeometry& g, const T* grad_out, const T* in,
                                T* grad_w);
template <typename T>
void conv2d_backward_bias_omp(const ConvGeometry& g, const T* grad_out, T* grad_bias);
template <typename T>
void channel_mix_forward_omp(const MixGeometry& g, const T* w, const T* x, T* out);
template <typename T>
void channel_mix_backward_input_omp(const MixGeometry& g, const T* w, const T* grad_out,
                                    T* grad_x);
template <typename T>
void channel_mix_backward_weight_omp(const MixGeometry& g, const T* x, const T* grad_out,
                                     T* grad_w);

}  // namespace detail

}  // namespace mncd::kernels
