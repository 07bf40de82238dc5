#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "stairnet/autograd.hpp"
#include "stairnet/tensor.hpp"

namespace stairnet::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename T>
double inner(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

/// Adds uniform noise to every trainable parameter so zero-initialized biases
/// do not sit relu inputs exactly on the kink during finite differences.
template <typename T>
void jitter_params(ParamStore<T>& store, std::uint64_t seed, double amplitude = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  for (int i = 0; i < store.size(); ++i) {
    if (!store.trainable(i)) continue;
    Tensor<T>& v = store.value(i);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += static_cast<T>(dist(rng));
  }
}

}  // namespace stairnet::testing
