#include "mncd/nn.hpp"

#include <cmath>

namespace mncd::nn {

std::vector<Parameter> Module::parameters() const {
  std::vector<Parameter> params;
  std::vector<Buffer> buffers;
  collect("", params, buffers);
  return params;
}

std::vector<Buffer> Module::buffers() const {
  std::vector<Parameter> params;
  std::vector<Buffer> buffers;
  collect("", params, buffers);
  return buffers;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.value.numel();
  return n;
}

void Module::collect(const std::string& prefix, std::vector<Parameter>& params,
                     std::vector<Buffer>& buffers) const {
  for (const auto& p : params_) params.push_back({prefix + p.name, p.value, p.init});
  for (const auto& b : buffers_) buffers.push_back({prefix + b.name, b.value});
  for (const auto& c : children_) c.module->collect(prefix + c.name + ".", params, buffers);
}

void Module::set_mode(ops::NormMode mode) {
  mode_ = mode;
  for (auto& c : children_) c.module->set_mode(mode);
}

void Module::zero_grad() {
  for (auto& p : parameters()) p.value.zero_grad();
}

Tensor& Module::register_parameter(std::string name, Tensor value, Init init) {
  value.set_requires_grad(true);
  params_.push_back({std::move(name), std::move(value), init});
  return params_.back().value;
}

Tensor& Module::register_buffer(std::string name, Tensor value) {
  buffers_.push_back({std::move(name), std::move(value)});
  return buffers_.back().value;
}

Conv2d::Conv2d(InitContext& ctx, std::int64_t in_channels, std::int64_t out_channels, int kernel,
               int stride, int padding, bool bias)
    : stride_(stride), padding_(padding) {
  Tensor w({out_channels, in_channels, kernel, kernel}, ctx.dtype);
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (std::int64_t i = 0; i < w.numel(); ++i) w.set(i, normal(ctx.rng));
  weight_ = &register_parameter("weight", std::move(w), Init::kaiming_normal);
  if (bias) bias_ = &register_parameter("bias", Tensor({out_channels}, ctx.dtype), Init::zeros);
}

Tensor Conv2d::forward(const Tensor& x) const {
  return ops::conv2d(x, *weight_, bias_ ? *bias_ : Tensor(), stride_, padding_);
}

BatchNorm2d::BatchNorm2d(InitContext& ctx, std::int64_t channels, double eps, double momentum)
    : eps_(eps), momentum_(momentum) {
  gamma_ = &register_parameter("weight", Tensor::full({channels}, 1.0, ctx.dtype), Init::ones);
  beta_ = &register_parameter("bias", Tensor({channels}, ctx.dtype), Init::zeros);
  running_mean_ = &register_buffer("running_mean", Tensor({channels}, ctx.dtype));
  running_var_ = &register_buffer("running_var", Tensor::full({channels}, 1.0, ctx.dtype));
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  return ops::batch_norm(x, *gamma_, *beta_, *running_mean_, *running_var_, mode(), eps_,
                         momentum_);
}

ConvUnit::ConvUnit(InitContext& ctx, std::int64_t in_channels, std::int64_t out_channels,
                   int kernel, int stride, bool batch_norm, bool relu)
    : relu_(relu) {
  conv_ = &register_module("conv", std::make_unique<Conv2d>(ctx, in_channels, out_channels, kernel,
                                                            stride, kernel / 2, !batch_norm));
  if (batch_norm) bn_ = &register_module("bn", std::make_unique<BatchNorm2d>(ctx, out_channels));
}

Tensor ConvUnit::forward(const Tensor& x) {
  Tensor y = conv_->forward(x);
  if (bn_) y = bn_->forward(y);
  return relu_ ? ops::relu(y) : y;
}

}  // namespace mncd::nn
