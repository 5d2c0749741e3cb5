#include "mncd/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace mncd {

namespace {

std::atomic<bool> g_finite_checks{false};

void validate_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
  }
}

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* dtype_name(DType dtype) { return dtype == DType::f64 ? "f64" : "f32"; }

Tensor::Tensor(Shape shape, DType dtype) : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  impl_->shape = std::move(shape);
  if (dtype == DType::f64) {
    impl_->data = std::vector<double>(n, 0.0);
  } else {
    impl_->data = std::vector<float>(n, 0.0f);
  }
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  Tensor t(std::move(shape), dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(t.shape()));
  }
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto out = t.values<T>();
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()),
                     dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

TensorImpl& Tensor::checked() const {
  if (!impl_) throw StateError("use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int n = static_cast<int>(s.size());
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw ShapeError("axis out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

DType Tensor::dtype() const {
  return std::holds_alternative<std::vector<double>>(checked().data) ? DType::f64 : DType::f32;
}

double Tensor::at(std::int64_t i) const {
  return dispatch(dtype(), [&](auto tag) -> double {
    return static_cast<double>(values<decltype(tag)>()[static_cast<std::size_t>(i)]);
  });
}

void Tensor::set(std::int64_t i, double value) {
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    values<T>()[static_cast<std::size_t>(i)] = static_cast<T>(value);
  });
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ArgumentError("item() on tensor of shape " + shape_str(shape()));
  }
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&](auto tag) {
    auto v = values<decltype(tag)>();
    return std::vector<double>(v.begin(), v.end());
  });
}

void Tensor::fill(double value) {
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (auto& x : values<T>()) x = static_cast<T>(value);
  });
}

void Tensor::assign(const Tensor& src) {
  if (src.numel() != numel()) {
    throw ShapeError("assign: " + shape_str(src.shape()) + " into " + shape_str(shape()));
  }
  dispatch(dtype(), [&](auto dst_tag) {
    using D = decltype(dst_tag);
    auto out = values<D>();
    dispatch(src.dtype(), [&](auto src_tag) {
      auto in = src.values<decltype(src_tag)>();
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<D>(in[i]);
    });
  });
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  checked().requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return checked().grad.defined(); }

Tensor Tensor::grad() const { return checked().grad; }

void Tensor::set_grad(Tensor grad) {
  if (grad.defined() && grad.shape() != shape()) {
    throw ShapeError("gradient shape " + shape_str(grad.shape()) + " differs from tensor " +
                     shape_str(shape()));
  }
  checked().grad = std::move(grad);
}

void Tensor::zero_grad() { checked().grad = Tensor(); }

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = shape();
  t.impl_->data = checked().data;
  return t;
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor t(shape(), target);
  t.assign(*this);
  return t;
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }

bool finite_checks_enabled() { return g_finite_checks.load(); }

void check_finite(const Tensor& t, const char* op) {
  dispatch(t.dtype(), [&](auto tag) {
    for (auto x : t.values<decltype(tag)>()) {
      if (!std::isfinite(x)) {
        throw NumericError(std::string("non-finite value produced by ") + op);
      }
    }
  });
}

}  // namespace mncd
