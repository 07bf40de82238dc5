#include "stairnet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace stairnet {

std::string Shape4::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

void validate_shape(const Shape4& s) {
  if (s.n < 1) throw DimensionError("tensor batch extent must be >= 1, got " + s.str());
  if (s.c < 1) throw DimensionError("tensor channel extent must be >= 1, got " + s.str());
  if (s.h < 1) throw DimensionError("tensor height extent must be >= 1, got " + s.str());
  if (s.w < 1) throw DimensionError("tensor width extent must be >= 1, got " + s.str());
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (a == b) return;
  const char* axis = a.n != b.n ? "batch" : a.c != b.c ? "channel" : a.h != b.h ? "height" : "width";
  throw DimensionError(std::string(what) + ": " + axis + " mismatch (" + a.str() + " vs " + b.str() +
                       ")");
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, T fill) : shape_(shape) {
  validate_shape(shape_);
  data_.assign(shape_.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
  validate_shape(shape_);
  if (data_.size() != shape_.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape4 s) const {
  validate_shape(s);
  if (s.numel() != shape_.numel()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " + s.str());
  }
  return Tensor<T>(s, data_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace stairnet
