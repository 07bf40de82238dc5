#pragma once
// OpenMP-parallel numeric kernels behind the differentiable ops.
//
// Parallel loops only split independent outputs (images, channels or output
// rows); every floating-point sum runs in a fixed serial order, so results are
// bit-identical for any thread count. The serial oracles these kernels are
// tested against live in reference.hpp.

#include <cstdint>
#include <span>
#include <vector>

#include "stairnet/tensor.hpp"

namespace stairnet::kernels {

/// Output extents of a cross-correlation; throws DimensionError naming the axis.
Shape4 conv_output_shape(const Shape4& x, const Shape4& weights, int stride, int pad);

/// Uncropped output extents of a transposed convolution with weights
/// (in_ch x out_ch x k x k).
Shape4 deconv_full_shape(const Shape4& x, const Shape4& weights, int stride, int pad);

/// C[M x N] += A[M x K] * B[K x N], row-major with leading dimensions.
template <typename T>
void gemm_accumulate(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights, std::span<const T> bias,
                         int stride, int pad);

/// Gradient of conv2d with respect to its input. Also the transposed-conv core.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& weights, const Shape4& x_shape,
                                int stride, int pad);

/// Accumulates the weight gradient into dweights and the bias gradient into dbias.
template <typename T>
void conv2d_backward_weight(const Tensor<T>& dy, const Tensor<T>& x, int stride, int pad,
                            Tensor<T>& dweights, std::span<T> dbias);

/// Transposed convolution (weights in_ch x out_ch x k x k), uncropped.
template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& x, const Tensor<T>& weights, std::span<const T> bias,
                           int stride, int pad);

template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& x, int h, int w);

/// Zero-pads on the bottom/right back to (h, w). Inverse-adjoint of crop_top_left.
template <typename T>
Tensor<T> pad_bottom_right(const Tensor<T>& x, int h, int w);

/// Per-channel statistics saved by the training-mode forward for backward.
template <typename T>
struct BatchNormSaved {
  std::vector<T> mean;
  std::vector<T> var;  // biased batch variance
  std::vector<T> inv_std;
};

template <typename T>
Tensor<T> batchnorm_train_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  T epsilon, BatchNormSaved<T>& saved);

template <typename T>
Tensor<T> batchnorm_inference_forward(const Tensor<T>& x, std::span<const T> gamma,
                                      std::span<const T> beta, std::span<const T> running_mean,
                                      std::span<const T> running_var, T epsilon);

/// dx for either mode (pass running-stat inv_std as `saved` in inference mode),
/// accumulating dgamma and dbeta.
template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& x, std::span<const T> gamma,
                             const BatchNormSaved<T>& saved, bool batch_stats, std::span<T> dgamma,
                             std::span<T> dbeta);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& x);

/// Floor-mode max pooling. argmax receives the flat input index of each output.
template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, int k, int stride, std::vector<std::int64_t>& argmax);

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& dy, const Shape4& x_shape,
                             const std::vector<std::int64_t>& argmax);

enum class EltwiseMode { kSum, kMax, kProduct };

template <typename T>
Tensor<T> eltwise_forward(const Tensor<T>& a, const Tensor<T>& b, EltwiseMode mode);

template <typename T>
void eltwise_backward(const Tensor<T>& dy, const Tensor<T>& a, const Tensor<T>& b, EltwiseMode mode,
                      Tensor<T>& da, Tensor<T>& db);

/// Bilinear resize with half-pixel centers (align_corners = false).
template <typename T>
Tensor<T> bilinear_forward(const Tensor<T>& x, int out_h, int out_w);

template <typename T>
Tensor<T> bilinear_backward(const Tensor<T>& dy, const Shape4& x_shape);

}  // namespace stairnet::kernels
