#include "mncd/autodiff.hpp"

#include <mutex>

namespace mncd {

namespace {

thread_local bool t_grad_enabled = true;

struct AdjointFault {
  std::mutex mu;
  std::string op;
  double factor = 1.0;
};

AdjointFault& fault() {
  static AdjointFault f;
  return f;
}

Tensor scaled_copy(const Tensor& t, double factor) {
  Tensor out = t.clone();
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (auto& x : out.values<T>()) x = static_cast<T>(x * factor);
  });
  return out;
}

}  // namespace

GradientTape& GradientTape::current() {
  thread_local GradientTape tape;
  return tape;
}

void GradientTape::record(std::string op, std::vector<Tensor> inputs,
                          std::vector<Tensor> outputs, BackwardFn backward) {
  entries_.push_back({std::move(op), std::move(inputs), std::move(outputs), std::move(backward)});
}

void GradientTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ArgumentError("backward requires a scalar loss");
  }
  std::ptrdiff_t last = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(entries_.size()) - 1; i >= 0; --i) {
    for (const auto& out : entries_[static_cast<std::size_t>(i)].outputs) {
      if (out.is_same(loss)) {
        last = i;
        break;
      }
    }
    if (last >= 0) break;
  }
  if (last < 0) {
    throw StateError("loss is not on the gradient tape (already consumed or never recorded)");
  }

  std::string fault_op;
  double fault_factor = 1.0;
  {
    std::lock_guard lock(fault().mu);
    fault_op = fault().op;
    fault_factor = fault().factor;
  }

  Tensor seed = Tensor::full(loss.shape(), 1.0, loss.dtype());
  accumulate_grad(loss, seed);

  std::vector<Tensor> grads;
  for (std::ptrdiff_t i = last; i >= 0; --i) {
    auto& entry = entries_[static_cast<std::size_t>(i)];
    grads.clear();
    bool any = false;
    for (const auto& out : entry.outputs) {
      Tensor g = out.has_grad() ? out.grad() : Tensor();
      if (g.defined()) {
        any = true;
        if (!fault_op.empty() && entry.op == fault_op) g = scaled_copy(g, fault_factor);
      }
      grads.push_back(std::move(g));
    }
    if (any) entry.backward(grads);
  }
  clear();
}

void backward(const Tensor& loss) { GradientTape::current().backward(loss); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void accumulate_grad(const Tensor& target, const Tensor& contribution) {
  if (!target.requires_grad()) return;
  if (contribution.shape() != target.shape()) {
    throw ShapeError("gradient contribution " + shape_str(contribution.shape()) +
                     " does not match tensor " + shape_str(target.shape()));
  }
  Tensor t = target;
  if (!t.has_grad()) {
    Tensor g = Tensor::zeros(t.shape(), t.dtype());
    g.assign(contribution);
    t.set_grad(std::move(g));
    return;
  }
  Tensor g = t.grad();
  dispatch(g.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = g.values<T>();
    auto src = contribution.values<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

void emit(const char* op, std::vector<Tensor> inputs, std::vector<Tensor> outputs,
          BackwardFn backward) {
  if (finite_checks_enabled()) {
    for (const auto& out : outputs) check_finite(out, op);
  }
  if (!t_grad_enabled) return;
  bool needed = false;
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) {
      needed = true;
      break;
    }
  }
  if (!needed) return;
  for (auto& out : outputs) out.set_requires_grad(true);
  GradientTape::current().record(op, std::move(inputs), std::move(outputs), std::move(backward));
}

namespace testing {

void set_adjoint_fault(std::string op, double factor) {
  std::lock_guard lock(fault().mu);
  fault().op = std::move(op);
  fault().factor = factor;
}

void clear_adjoint_fault() {
  std::lock_guard lock(fault().mu);
  fault().op.clear();
  fault().factor = 1.0;
}

}  // namespace testing

}  // namespace mncd
