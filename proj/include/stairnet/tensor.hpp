#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stairnet/errors.hpp"

namespace stairnet {

/// Batch x channel x height x width extents. Every extent is at least 1.
struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const;
};

/// Dense rank-4 array in NCHW layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0));
  Tensor(Shape4 shape, std::vector<T> values);

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  std::size_t index(int ni, int ci, int hi, int wi) const {
    return ((static_cast<std::size_t>(ni) * shape_.c + ci) * shape_.h + hi) * shape_.w + wi;
  }
  T& at(int ni, int ci, int hi, int wi) { return data_[index(ni, ci, hi, wi)]; }
  const T& at(int ni, int ci, int hi, int wi) const { return data_[index(ni, ci, hi, wi)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the (ni, ci) plane.
  T* plane(int ni, int ci) { return data_.data() + index(ni, ci, 0, 0); }
  const T* plane(int ni, int ci) const { return data_.data() + index(ni, ci, 0, 0); }

  void fill(T v);
  /// Same data, new extents with equal element count.
  Tensor reshaped(Shape4 s) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

void validate_shape(const Shape4& s);

/// Throws DimensionError naming `what` when the shapes differ.
void require_same_shape(const Shape4& a, const Shape4& b, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace stairnet
