#include <atomic>

#include "mncd/kernels.hpp"

namespace mncd::kernels {

namespace {
std::atomic<Exec> g_exec{Exec::parallel};
}

Exec default_exec() { return g_exec.load(); }
void set_default_exec(Exec exec) { g_exec.store(exec); }

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out,
                    Exec exec) {
  if (exec == Exec::serial) {
    detail::conv2d_forward_serial(g, in, w, bias, out);
  } else {
    detail::conv2d_forward_omp(g, in, w, bias, out);
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* w, T* grad_in,
                           Exec exec) {
  if (exec == Exec::serial) {
    detail::conv2d_backward_input_serial(g, grad_out, w, grad_in);
  } else {
    detail::conv2d_backward_input_omp(g, grad_out, w, grad_in);
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_w,
                            Exec exec) {
  if (exec == Exec::serial) {
    detail::conv2d_backward_weight_serial(g, grad_out, in, grad_w);
  } else {
    detail::conv2d_backward_weight_omp(g, grad_out, in, grad_w);
  }
}

template <typename T>
void conv2d_backward_bias(const ConvGeometry& g, const T* grad_out, T* grad_bias, Exec exec) {
  if (exec == Exec::serial) {
    detail::conv2d_backward_bias_serial(g, grad_out, grad_bias);
  } else {
    detail::conv2d_backward_bias_omp(g, grad_out, grad_bias);
  }
}

template <typename T>
void channel_mix_forward(const MixGeometry& g, const T* w, const T* x, T* out, Exec exec) {
  if (exec == Exec::serial) {
    detail::channel_mix_forward_serial(g, w, x, out);
  } else {
    detail::channel_mix_forward_omp(g, w, x, out);
  }
}

template <typename T>
void channel_mix_backward_input(const MixGeometry& g, const T* w, const T* grad_out, T* grad_x,
                                Exec exec) {
  if (exec == Exec::serial) {
    detail::channel_mix_backward_input_serial(g, w, grad_out, grad_x);
  } else {
    detail::channel_mix_backward_input_omp(g, w, grad_out, grad_x);
  }
}

template <typename T>
void channel_mix_backward_weight(const MixGeometry& g, const T* x, const T* grad_out, T* grad_w,
                                 Exec exec) {
  if (exec == Exec::serial) {
    detail::channel_mix_backward_weight_serial(g, x, grad_out, grad_w);
  } else {
    detail::channel_mix_backward_weight_omp(g, x, grad_out, grad_w);
  }
}

#define MNCD_INSTANTIATE(T)                                                                   \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*,      \
                                  Exec);                                                      \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*, Exec);  \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, Exec); \
  template void conv2d_backward_bias<T>(const ConvGeometry&, const T*, T*, Exec);             \
  template void channel_mix_forward<T>(const MixGeometry&, const T*, const T*, T*, Exec);     \
  template void channel_mix_backward_input<T>(const MixGeometry&, const T*, const T*, T*,     \
                                              Exec);                                          \
  template void channel_mix_backward_weight<T>(const MixGeometry&, const T*, const T*, T*, Exec);

MNCD_INSTANTIATE(float)
MNCD_INSTANTIATE(double)
#undef MNCD_INSTANTIATE

}  // namespace mncd::kernels
