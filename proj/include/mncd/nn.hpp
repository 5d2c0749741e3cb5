#pragma once

#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mncd/ops.hpp"
#include "mncd/tensor.hpp"

namespace mncd::nn {

enum class Init { kaiming_normal, zeros, ones, identity_complex, uniform };

struct Parameter {
  std::string name;  // dotted path, unique within a model
  Tensor value;
  Init init = Init::zeros;
};

// Non-trainable state that still belongs in checkpoints (BN running stats).
struct Buffer {
  std::string name;
  Tensor value;
};

// Seeded source of initial parameter values; fixes the model dtype.
struct InitContext {
  std::mt19937_64 rng;
  DType dtype = DType::f32;

  explicit InitContext(std::uint64_t seed, DType dtype = DType::f32) : rng(seed), dtype(dtype) {}
};

class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  // Depth-first in registration order, names prefixed by the owning path.
  std::vector<Parameter> parameters() const;
  std::vector<Buffer> buffers() const;
  std::int64_t parameter_count() const;

  void set_mode(ops::NormMode mode);
  ops::NormMode mode() const { return mode_; }
  void zero_grad();

 protected:
  Tensor& register_parameter(std::string name, Tensor value, Init init);
  Tensor& register_buffer(std::string name, Tensor value);
  template <typename M>
  M& register_module(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    children_.push_back({std::move(name), std::move(module)});
    return ref;
  }

 private:
  void collect(const std::string& prefix, std::vector<Parameter>& params,
               std::vector<Buffer>& buffers) const;

  struct Child {
    std::string name;
    std::unique_ptr<Module> module;
  };

  // deque: registered references stay valid as more are added.
  std::deque<Parameter> params_;
  std::deque<Buffer> buffers_;
  std::vector<Child> children_;
  ops::NormMode mode_ = ops::NormMode::train;
};

class Conv2d : public Module {
 public:
  Conv2d(InitContext& ctx, std::int64_t in_channels, std::int64_t out_channels, int kernel,
         int stride = 1, int padding = 0, bool bias = true);

  Tensor forward(const Tensor& x) const;
  Tensor& weight() { return *weight_; }
  Tensor& bias() { return *bias_; }
  bool has_bias() const { return bias_ != nullptr; }

 private:
  Tensor* weight_ = nullptr;
  Tensor* bias_ = nullptr;
  int stride_;
  int padding_;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d(InitContext& ctx, std::int64_t channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x);

 private:
  Tensor* gamma_;
  Tensor* beta_;
  Tensor* running_mean_;
  Tensor* running_var_;
  double eps_;
  double momentum_;
};

// conv -> (optional BN) -> (optional ReLU)
class ConvUnit : public Module {
 public:
  ConvUnit(InitContext& ctx, std::int64_t in_channels, std::int64_t out_channels, int kernel,
           int stride, bool batch_norm, bool relu);

  Tensor forward(const Tensor& x);
  Conv2d& conv() { return *conv_; }

 private:
  Conv2d* conv_;
  BatchNorm2d* bn_ = nullptr;
  bool relu_;
};

}  // namespace mncd::nn
