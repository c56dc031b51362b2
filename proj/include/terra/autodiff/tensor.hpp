#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "terra/core/error.hpp"

namespace terra::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

/// Dense row-major array. Image tensors are laid out NCHW.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
      throw InvalidArgument("tensor data size " + std::to_string(data_.size()) +
                            " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// NCHW element access.
  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  const T& at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }

  T item() const {
    if (data_.size() != 1) throw InvalidArgument("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (int64_t d : shape_) {
      if (d <= 0) throw InvalidArgument("tensor extents must be positive, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace terra::ad
