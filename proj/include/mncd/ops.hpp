#pragma once

#include <span>
#include <vector>

#include "mncd/tensor.hpp"

// Differentiable primitives. Spatial ops take NCHW tensors; conv2d, the
// pooling ops and upsample_bilinear also accept an unbatched CHW tensor and
// return an unbatched result. All inputs to one op must share a dtype.
namespace mncd::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// x: [N,C,...], bias: [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
Tensor concat_channels(std::span<const Tensor> parts);
// Rows [begin, end) of the leading axis.
Tensor slice_batch(const Tensor& x, std::int64_t begin, std::int64_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

enum class Activation { relu, silu, sigmoid };
Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::silu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }

// weight: [C_out, C_in, kH, kW]; bias: [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

// out[n,k,h,w] = sum_c weight[k,c] * x[n,c,h,w]; a bias-free 1x1 convolution.
Tensor channel_mix(const Tensor& weight, const Tensor& x);

// x: [N, in], weight: [out, in], bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

enum class NormMode { train, eval };

// Per-channel batch normalization over (N, H, W). Train mode normalizes with
// batch statistics and updates the running estimates in place (running_var
// receives the unbiased variance); eval mode reads the running estimates.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, NormMode mode, double eps = 1e-5, double momentum = 0.1);

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding = 0);
Tensor avg_pool2d(const Tensor& x, int kernel, int stride);
// Bin i along an axis of length L covers [floor(i*L/s), ceil((i+1)*L/s)).
Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w);

// Half-pixel-center bilinear interpolation (corners not aligned).
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);

}  // namespace mncd::ops
