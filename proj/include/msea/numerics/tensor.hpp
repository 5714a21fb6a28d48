#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msea/error.hpp"

namespace msea::num {

/// Rank-1 or rank-2 shape. A scalar is the rank-1 shape {1}.
class Shape {
 public:
  constexpr Shape() = default;
  constexpr explicit Shape(std::size_t n) : rank_{1}, dims_{n, 1} {}
  constexpr Shape(std::size_t rows, std::size_t cols) : rank_{2}, dims_{rows, cols} {}

  static constexpr Shape scalar() { return Shape{1}; }

  [[nodiscard]] constexpr std::size_t rank() const { return rank_; }
  [[nodiscard]] constexpr std::size_t rows() const { return dims_[0]; }
  [[nodiscard]] constexpr std::size_t cols() const { return rank_ == 2 ? dims_[1] : 1; }
  [[nodiscard]] constexpr std::size_t size() const {
    return rank_ == 0 ? 0 : (rank_ == 1 ? dims_[0] : dims_[0] * dims_[1]);
  }
  [[nodiscard]] constexpr bool is_vector() const { return rank_ == 1; }
  [[nodiscard]] constexpr bool is_matrix() const { return rank_ == 2; }
  [[nodiscard]] constexpr bool is_scalar() const { return rank_ == 1 && dims_[0] == 1; }
  [[nodiscard]] constexpr bool empty() const { return rank_ == 0; }

  [[nodiscard]] std::vector<std::size_t> dims() const {
    if (rank_ == 0) return {};
    if (rank_ == 1) return {dims_[0]};
    return {dims_[0], dims_[1]};
  }

  [[nodiscard]] std::string str() const {
    if (rank_ == 0) return "[]";
    if (rank_ == 1) return "[" + std::to_string(dims_[0]) + "]";
    return "[" + std::to_string(dims_[0]) + "x" + std::to_string(dims_[1]) + "]";
  }

  friend constexpr bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.size() == b.size() &&
           (a.rank_ < 2 || a.dims_[0] == b.dims_[0]);
  }

 private:
  std::size_t rank_ = 0;
  std::array<std::size_t, 2> dims_{0, 0};
};

/// Dense row-major array with an optional same-shape gradient buffer.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_{shape}, data_(shape.size(), fill) {
    check_positive();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_{shape}, data_(std::move(data)) {
    check_positive();
    if (data_.size() != shape_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor(Shape{values.size()}, std::vector<T>(values));
  }

  static Tensor scalar(T value) { return Tensor(Shape::scalar(), std::vector<T>{value}); }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return Tensor(Shape{rows, cols}, std::vector<T>(values));
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::size_t rows() const { return shape_.rows(); }
  [[nodiscard]] std::size_t cols() const { return shape_.cols(); }
  [[nodiscard]] bool empty() const { return shape_.empty(); }

  [[nodiscard]] std::span<T> data() { return data_; }
  [[nodiscard]] std::span<const T> data() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols() + c]; }

  [[nodiscard]] bool tracks_grad() const { return tracking_; }

  /// Allocates a zeroed gradient buffer; leaves registered on a tape accumulate into it.
  void enable_grad() {
    tracking_ = true;
    grad_.assign(data_.size(), T{0});
  }
  void disable_grad() {
    tracking_ = false;
    grad_.clear();
    grad_.shrink_to_fit();
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }

  [[nodiscard]] std::span<T> grad() { return grad_; }
  [[nodiscard]] std::span<const T> grad() const { return grad_; }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_positive() const {
    if (shape_.rank() == 0) return;
    if (shape_.rows() == 0 || shape_.cols() == 0) {
      throw DimensionError("tensor dimensions must be positive, got " + shape_.str());
    }
  }

  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
  bool tracking_ = false;
};

}  // namespace msea::num
