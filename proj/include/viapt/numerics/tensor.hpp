#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "viapt/numerics/error.hpp"

namespace viapt {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

std::string to_string(DType dtype);
std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. Rank-0 tensors (shape {}) hold one scalar.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);
  Tensor(Shape shape, std::initializer_list<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// 2-D helpers; throw DimensionError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_.back() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * shape_.back() + c];
  }

  /// Value of a rank-0 or single-element tensor.
  T item() const;

  Tensor reshaped(Shape shape) const;
  void fill(T value);
  bool all_finite() const noexcept;

  /// Convert element type (used for oracle comparisons across precisions).
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Bitwise comparison (distinguishes -0.0 from 0.0 and treats equal NaN
/// payloads as equal).
template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace viapt
