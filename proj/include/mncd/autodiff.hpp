#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mncd/tensor.hpp"

namespace mncd {

// Receives one gradient per recorded output (undefined when the output was
// not reached) and accumulates into the inputs via accumulate_grad().
using BackwardFn = std::function<void(std::span<const Tensor> output_grads)>;

// Define-by-run record of differentiable operations.
//
// There is one tape per thread. Operations are appended only when gradient
// recording is enabled and at least one input requires a gradient.
// backward() replays the entries in reverse order and then clears the tape,
// releasing every stored intermediate.
class GradientTape {
 public:
  static GradientTape& current();

  void record(std::string op, std::vector<Tensor> inputs, std::vector<Tensor> outputs,
              BackwardFn backward);
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    std::vector<Tensor> outputs;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
};

// Populates grad on every requires_grad tensor reachable from a scalar loss.
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Adds contribution into target's grad slot (allocating it on first use).
// No-op when target does not require a gradient.
void accumulate_grad(const Tensor& target, const Tensor& contribution);

// Records op on the current tape when needed, marks outputs as requiring
// gradients, and applies finite checks. Every primitive ends with this call.
void emit(const char* op, std::vector<Tensor> inputs, std::vector<Tensor> outputs,
          BackwardFn backward);

namespace testing {
// Scales the incoming adjoint of every entry named op by factor during
// replay. Used to prove the gradient checker detects a broken adjoint.
void set_adjoint_fault(std::string op, double factor = 1.5);
void clear_adjoint_fault();
}  // namespace testing

}  // namespace mncd
