#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mncd/error.hpp"

namespace mncd {

enum class DType { f32, f64 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
const char* dtype_name(DType dtype);

// Calls f(float{}) or f(double{}) according to dtype.
template <typename F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f64) {
    return f(double{});
  }
  return f(float{});
}

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct TensorImpl;

// Dense row-major array with an optional gradient slot.
//
// Tensor is a shared handle: copies alias the same storage, which is what the
// tape relies on to route adjoints back to parameters. Use clone() for a deep
// copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::f32);

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;
  int ndim() const;
  std::int64_t numel() const;
  DType dtype() const;

  template <typename T>
  std::span<T> values();
  template <typename T>
  std::span<const T> values() const;

  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  double item() const;
  std::vector<double> to_vector() const;
  void fill(double value);
  // Copies values from src (same numel, any dtype) into this tensor.
  void assign(const Tensor& src);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  Tensor grad() const;
  void set_grad(Tensor grad);
  void zero_grad();

  Tensor clone() const;
  Tensor to(DType dtype) const;
  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }
  const TensorImpl* impl() const { return impl_.get(); }

 private:
  TensorImpl& checked() const;

  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> data;
  bool requires_grad = false;
  Tensor grad;
};

template <typename T>
std::span<T> Tensor::values() {
  auto* v = std::get_if<std::vector<T>>(&checked().data);
  if (v == nullptr) {
    throw ArgumentError("tensor dtype mismatch on typed access");
  }
  return {v->data(), v->size()};
}

template <typename T>
std::span<const T> Tensor::values() const {
  const auto* v = std::get_if<std::vector<T>>(&checked().data);
  if (v == nullptr) {
    throw ArgumentError("tensor dtype mismatch on typed access");
  }
  return {v->data(), v->size()};
}

// Complex field stored as two real tensors of identical shape.
struct ComplexTensor {
  Tensor re;
  Tensor im;

  const Shape& shape() const { return re.shape(); }
};

// NaN/Inf screening of every op output. Off by default.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
void check_finite(const Tensor& t, const char* op);

}  // namespace mncd
