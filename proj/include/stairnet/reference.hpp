#pragma once
// Serial reference implementations, written straight from the definitions.
// Used as oracles by the tests and as the baseline in the kernel benchmark.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "stairnet/tensor.hpp"

namespace stairnet::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, int stride, int pad) {
  const int k = w.h();
  const int oh = (x.h() + 2 * pad - k) / stride + 1;
  const int ow = (x.w() + 2 * pad - k) / stride + 1;
  Tensor<T> y({x.n(), w.n(), oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (int c = 0; c < x.c(); ++c)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b) {
                const int r = i * stride - pad + a;
                const int s = j * stride - pad + b;
                if (r < 0 || r >= x.h() || s < 0 || s >= x.w()) continue;
                acc += w.at(o, c, a, b) * x.at(n, c, r, s);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

/// Scatter form of the conv2d input gradient.
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& dy, const Tensor<T>& w, const Shape4& x_shape, int stride,
                            int pad) {
  const int k = w.h();
  Tensor<T> dx(x_shape);
  for (int n = 0; n < dy.n(); ++n)
    for (int o = 0; o < dy.c(); ++o)
      for (int i = 0; i < dy.h(); ++i)
        for (int j = 0; j < dy.w(); ++j)
          for (int c = 0; c < x_shape.c; ++c)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b) {
                const int r = i * stride - pad + a;
                const int s = j * stride - pad + b;
                if (r < 0 || r >= x_shape.h || s < 0 || s >= x_shape.w) continue;
                dx.at(n, c, r, s) += w.at(o, c, a, b) * dy.at(n, o, i, j);
              }
  return dx;
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& dy, const Tensor<T>& x, const Shape4& w_shape, int stride,
                             int pad) {
  const int k = w_shape.h;
  Tensor<T> dw(w_shape);
  for (int n = 0; n < dy.n(); ++n)
    for (int o = 0; o < dy.c(); ++o)
      for (int i = 0; i < dy.h(); ++i)
        for (int j = 0; j < dy.w(); ++j)
          for (int c = 0; c < x.c(); ++c)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b) {
                const int r = i * stride - pad + a;
                const int s = j * stride - pad + b;
                if (r < 0 || r >= x.h() || s < 0 || s >= x.w()) continue;
                dw.at(o, c, a, b) += dy.at(n, o, i, j) * x.at(n, c, r, s);
              }
  return dw;
}

/// Transposed convolution by direct stamping, weights (in_ch x out_ch x k x k), uncropped.
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, int stride, int pad) {
  const int k = w.h();
  const int oh = (x.h() - 1) * stride - 2 * pad + k;
  const int ow = (x.w() - 1) * stride - 2 * pad + k;
  Tensor<T> y({x.n(), w.c(), oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j)
          for (int o = 0; o < w.c(); ++o)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b) {
                const int r = i * stride - pad + a;
                const int s = j * stride - pad + b;
                if (r < 0 || r >= oh || s < 0 || s >= ow) continue;
                y.at(n, o, r, s) += x.at(n, c, i, j) * w.at(c, o, a, b);
              }
  if (!bias.empty())
    for (int n = 0; n < y.n(); ++n)
      for (int o = 0; o < y.c(); ++o)
        for (int r = 0; r < oh; ++r)
          for (int s = 0; s < ow; ++s) y.at(n, o, r, s) += bias[o];
  return y;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride) {
  const int oh = (x.h() - k) / stride + 1;
  const int ow = (x.w() - k) / stride + 1;
  Tensor<T> y({x.n(), x.c(), oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T best = x.at(n, c, i * stride, j * stride);
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) best = std::max(best, x.at(n, c, i * stride + a, j * stride + b));
          y.at(n, c, i, j) = best;
        }
  return y;
}

/// Training-mode batch normalization with two-pass statistics.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps) {
  Tensor<T> y(x.shape());
  const double cnt = static_cast<double>(x.n()) * x.h() * x.w();
  for (int c = 0; c < x.c(); ++c) {
    double mean = 0;
    for (int n = 0; n < x.n(); ++n)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) mean += x.at(n, c, i, j);
    mean /= cnt;
    double var = 0;
    for (int n = 0; n < x.n(); ++n)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) var += (x.at(n, c, i, j) - mean) * (x.at(n, c, i, j) - mean);
    var /= cnt;
    for (int n = 0; n < x.n(); ++n)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j)
          y.at(n, c, i, j) = static_cast<T>(gamma[c] * (x.at(n, c, i, j) - mean) / std::sqrt(var + eps) + beta[c]);
  }
  return y;
}

/// Half-pixel bilinear resize evaluated point by point.
template <typename T>
Tensor<T> bilinear(const Tensor<T>& x, int out_h, int out_w) {
  Tensor<T> y({x.n(), x.c(), out_h, out_w});
  auto src = [](int o, int in, int out, int& lo, int& hi, double& f) {
    double s = (o + 0.5) * in / out - 0.5;
    if (s < 0) s = 0;
    lo = std::min(static_cast<int>(s), in - 1);
    hi = std::min(lo + 1, in - 1);
    f = s - lo;
  };
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          int y0, y1, x0, x1;
          double fy, fx;
          src(i, x.h(), out_h, y0, y1, fy);
          src(j, x.w(), out_w, x0, x1, fx);
          const double v = (1 - fy) * ((1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1)) +
                           fy * ((1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1));
          y.at(n, c, i, j) = static_cast<T>(v);
        }
  return y;
}

}  // namespace stairnet::reference
