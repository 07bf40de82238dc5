#include "stairnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace stairnet::kernels {
namespace {

[[noreturn]] void dim_error(const std::string& msg) { throw DimensionError(msg); }

template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            T* col) {
  const int out_plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + (static_cast<std::size_t>(c) * k * k + kh * k + kw) * out_plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          T* dst = row + oh * out_w;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            T* x) {
  const int out_plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + (static_cast<std::size_t>(c) * k * k + kh * k + kw) * out_plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          T* dst = xc + static_cast<std::size_t>(ih) * w;
          const T* src = row + oh * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void transpose(const T* src, int rows, int cols, T* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

bool is_pointwise(int k, int stride, int pad) { return k == 1 && stride == 1 && pad == 0; }

}  // namespace

Shape4 conv_output_shape(const Shape4& x, const Shape4& weights, int stride, int pad) {
  if (weights.h != weights.w) dim_error("conv2d: kernel must be square, got " + weights.str());
  if (stride < 1) dim_error("conv2d: stride must be positive");
  if (pad < 0) dim_error("conv2d: pad must be non-negative");
  if (x.c != weights.c) {
    dim_error("conv2d: channel mismatch, input has " + std::to_string(x.c) + " channels, weights expect " +
              std::to_string(weights.c));
  }
  const int k = weights.h;
  const int eh = x.h + 2 * pad - k;
  const int ew = x.w + 2 * pad - k;
  if (eh < 0) dim_error("conv2d: height " + std::to_string(x.h) + " too small for kernel " + std::to_string(k));
  if (ew < 0) dim_error("conv2d: width " + std::to_string(x.w) + " too small for kernel " + std::to_string(k));
  return {x.n, weights.n, eh / stride + 1, ew / stride + 1};
}

Shape4 deconv_full_shape(const Shape4& x, const Shape4& weights, int stride, int pad) {
  if (weights.h != weights.w) dim_error("deconv2d: kernel must be square, got " + weights.str());
  if (x.c != weights.n) {
    dim_error("deconv2d: channel mismatch, input has " + std::to_string(x.c) +
              " channels, weights expect " + std::to_string(weights.n));
  }
  const int k = weights.h;
  const int h = (x.h - 1) * stride - 2 * pad + k;
  const int w = (x.w - 1) * stride - 2 * pad + k;
  if (h < 1) dim_error("deconv2d: height collapses to " + std::to_string(h));
  if (w < 1) dim_error("deconv2d: width collapses to " + std::to_string(w));
  return {x.n, weights.c, h, w};
}

namespace {

// C[MR x NR] += A[MR x K] * B[K x NR] with the C tile held in registers.
template <typename T, int MR, int NR>
inline void gemm_tile(int K, const T* __restrict A, int lda, const T* __restrict B, int ldb, T* __restrict C,
                      int ldc) {
  T acc[MR][NR] = {};
  for (int kk = 0; kk < K; ++kk) {
    const T* b = B + static_cast<std::size_t>(kk) * ldb;
    for (int r = 0; r < MR; ++r) {
      const T a = A[static_cast<std::size_t>(r) * lda + kk];
      for (int j = 0; j < NR; ++j) acc[r][j] += a * b[j];
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int j = 0; j < NR; ++j) C[static_cast<std::size_t>(r) * ldc + j] += acc[r][j];
}

template <typename T>
inline void gemm_edge(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    T* __restrict c = C + static_cast<std::size_t>(i) * ldc;
    const T* a = A + static_cast<std::size_t>(i) * lda;
    for (int kk = 0; kk < K; ++kk) {
      const T av = a[kk];
      const T* __restrict b = B + static_cast<std::size_t>(kk) * ldb;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm_accumulate(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
  constexpr int kMR = 6;
  constexpr int kNR = 32;
  constexpr int kBlockK = 256;
  const int n_full = N - N % kNR;
  const int m_full = M - M % kMR;
  for (int k0 = 0; k0 < K; k0 += kBlockK) {
    const int kb = std::min(kBlockK, K - k0);
    const T* Ak = A + k0;
    const T* Bk = B + static_cast<std::size_t>(k0) * ldb;
    for (int j = 0; j < n_full; j += kNR) {
      for (int i = 0; i < m_full; i += kMR)
        gemm_tile<T, kMR, kNR>(kb, Ak + static_cast<std::size_t>(i) * lda, lda, Bk + j, ldb,
                               C + static_cast<std::size_t>(i) * ldc + j, ldc);
      if (m_full < M)
        gemm_edge(M - m_full, kNR, kb, Ak + static_cast<std::size_t>(m_full) * lda, lda, Bk + j, ldb,
                  C + static_cast<std::size_t>(m_full) * ldc + j, ldc);
    }
    if (n_full < N) gemm_edge(M, N - n_full, kb, Ak, lda, Bk + n_full, ldb, C + n_full, ldc);
  }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights, std::span<const T> bias,
                         int stride, int pad) {
  const Shape4 ys = conv_output_shape(x.shape(), weights.shape(), stride, pad);
  if (!bias.empty() && static_cast<int>(bias.size()) != weights.n()) {
    dim_error("conv2d: bias length " + std::to_string(bias.size()) + " does not match out channels " +
              std::to_string(weights.n()));
  }
  Tensor<T> y(ys);
  const int k = weights.h();
  const int ci = x.c();
  const int co = weights.n();
  const int kdim = ci * k * k;
  const int out_plane = ys.h * ys.w;
  const bool pointwise = is_pointwise(k, stride, pad);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < x.n(); ++n) {
    std::vector<T> col;
    const T* b_mat = x.plane(n, 0);
    if (!pointwise) {
      col.resize(static_cast<std::size_t>(kdim) * out_plane);
      im2col(x.plane(n, 0), ci, x.h(), x.w(), k, stride, pad, ys.h, ys.w, col.data());
      b_mat = col.data();
    }
    T* out = y.plane(n, 0);
    if (!bias.empty()) {
      for (int o = 0; o < co; ++o) std::fill(out + static_cast<std::size_t>(o) * out_plane, out + static_cast<std::size_t>(o + 1) * out_plane, bias[o]);
    }
    gemm_accumulate(co, out_plane, kdim, weights.data(), kdim, b_mat, out_plane, out, out_plane);
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& weights, const Shape4& x_shape,
                                int stride, int pad) {
  const Shape4 ys = conv_output_shape(x_shape, weights.shape(), stride, pad);
  require_same_shape(dy.shape(), ys, "conv2d backward: output gradient");
  const int k = weights.h();
  const int ci = x_shape.c;
  const int co = weights.n();
  const int kdim = ci * k * k;
  const int out_plane = ys.h * ys.w;
  const bool pointwise = is_pointwise(k, stride, pad);

  std::vector<T> wt(static_cast<std::size_t>(kdim) * co);
  transpose(weights.data(), co, kdim, wt.data());

  Tensor<T> dx(x_shape);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < x_shape.n; ++n) {
    if (pointwise) {
      gemm_accumulate(kdim, out_plane, co, wt.data(), co, dy.plane(n, 0), out_plane, dx.plane(n, 0), out_plane);
      continue;
    }
    std::vector<T> col(static_cast<std::size_t>(kdim) * out_plane, T(0));
    gemm_accumulate(kdim, out_plane, co, wt.data(), co, dy.plane(n, 0), out_plane, col.data(), out_plane);
    col2im(col.data(), ci, x_shape.h, x_shape.w, k, stride, pad, ys.h, ys.w, dx.plane(n, 0));
  }
  return dx;
}

template <typename T>
void conv2d_backward_weight(const Tensor<T>& dy, const Tensor<T>& x, int stride, int pad,
                            Tensor<T>& dweights, std::span<T> dbias) {
  const Shape4 ys = conv_output_shape(x.shape(), dweights.shape(), stride, pad);
  require_same_shape(dy.shape(), ys, "conv2d backward: output gradient");
  const int k = dweights.h();
  const int ci = x.c();
  const int co = dweights.n();
  const int kdim = ci * k * k;
  const int out_plane = ys.h * ys.w;
  const bool pointwise = is_pointwise(k, stride, pad);

  std::vector<T> col(static_cast<std::size_t>(kdim) * out_plane);
  std::vector<T> col_t(col.size());
  constexpr int kRows = 24;
  const int row_blocks = (co + kRows - 1) / kRows;
  // Images are reduced in index order; only output-channel rows run in parallel.
  for (int n = 0; n < x.n(); ++n) {
    if (pointwise) {
      transpose(x.plane(n, 0), kdim, out_plane, col_t.data());
    } else {
      im2col(x.plane(n, 0), ci, x.h(), x.w(), k, stride, pad, ys.h, ys.w, col.data());
      transpose(col.data(), kdim, out_plane, col_t.data());
    }
    const T* g = dy.plane(n, 0);
#pragma omp parallel for schedule(static)
    for (int rb = 0; rb < row_blocks; ++rb) {
      const int r0 = rb * kRows;
      const int rows = std::min(kRows, co - r0);
      gemm_accumulate(rows, kdim, out_plane, g + static_cast<std::size_t>(r0) * out_plane, out_plane,
                      col_t.data(), kdim, dweights.data() + static_cast<std::size_t>(r0) * kdim, kdim);
    }
    if (!dbias.empty()) {
      for (int o = 0; o < co; ++o) {
        const T* go = g + static_cast<std::size_t>(o) * out_plane;
        T s = T(0);
        for (int j = 0; j < out_plane; ++j) s += go[j];
        dbias[o] += s;
      }
    }
  }
}

template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& x, const Tensor<T>& weights, std::span<const T> bias,
                           int stride, int pad) {
  const Shape4 full = deconv_full_shape(x.shape(), weights.shape(), stride, pad);
  if (!bias.empty() && static_cast<int>(bias.size()) != weights.c()) {
    dim_error("deconv2d: bias length " + std::to_string(bias.size()) + " does not match out channels " +
              std::to_string(weights.c()));
  }
  Tensor<T> y = conv2d_backward_input(x, weights, full, stride, pad);
  if (!bias.empty()) {
    const std::size_t plane = full.plane();
    for (int n = 0; n < full.n; ++n)
      for (int o = 0; o < full.c; ++o) {
        T* p = y.plane(n, o);
        for (std::size_t j = 0; j < plane; ++j) p[j] += bias[o];
      }
  }
  return y;
}

template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& x, int h, int w) {
  if (h > x.h()) dim_error("crop: target height " + std::to_string(h) + " exceeds " + std::to_string(x.h()));
  if (w > x.w()) dim_error("crop: target width " + std::to_string(w) + " exceeds " + std::to_string(x.w()));
  Tensor<T> y({x.n(), x.c(), h, w});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < h; ++i) std::memcpy(&y.at(n, c, i, 0), &x.at(n, c, i, 0), sizeof(T) * w);
  return y;
}

template <typename T>
Tensor<T> pad_bottom_right(const Tensor<T>& x, int h, int w) {
  if (h < x.h()) dim_error("pad: target height " + std::to_string(h) + " below " + std::to_string(x.h()));
  if (w < x.w()) dim_error("pad: target width " + std::to_string(w) + " below " + std::to_string(x.w()));
  Tensor<T> y({x.n(), x.c(), h, w});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < x.h(); ++i) std::memcpy(&y.at(n, c, i, 0), &x.at(n, c, i, 0), sizeof(T) * x.w());
  return y;
}

template <typename T>
Tensor<T> batchnorm_train_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  T epsilon, BatchNormSaved<T>& saved) {
  const int C = x.c();
  if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C) {
    dim_error("batchnorm: channel mismatch, input has " + std::to_string(C) + " channels, parameters have " +
              std::to_string(gamma.size()));
  }
  saved.mean.assign(C, T(0));
  saved.var.assign(C, T(0));
  saved.inv_std.assign(C, T(0));
  Tensor<T> y(x.shape());
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(plane) * x.n();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      for (std::size_t j = 0; j < plane; ++j) sum += p[j];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = p[j] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const T m = static_cast<T>(mean);
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
    saved.mean[c] = m;
    saved.var[c] = static_cast<T>(var);
    saved.inv_std[c] = is;
    const T g = gamma[c] * is;
    const T b = beta[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      T* q = y.plane(n, c);
      for (std::size_t j = 0; j < plane; ++j) q[j] = (p[j] - m) * g + b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_inference_forward(const Tensor<T>& x, std::span<const T> gamma,
                                      std::span<const T> beta, std::span<const T> running_mean,
                                      std::span<const T> running_var, T epsilon) {
  const int C = x.c();
  if (static_cast<int>(gamma.size()) != C || static_cast<int>(running_mean.size()) != C) {
    dim_error("batchnorm: channel mismatch, input has " + std::to_string(C) + " channels, parameters have " +
              std::to_string(gamma.size()));
  }
  Tensor<T> y(x.shape());
  const std::size_t plane = x.shape().plane();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const T is = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + epsilon));
    const T g = gamma[c] * is;
    const T m = running_mean[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      T* q = y.plane(n, c);
      for (std::size_t j = 0; j < plane; ++j) q[j] = (p[j] - m) * g + beta[c];
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& x, std::span<const T> gamma,
                             const BatchNormSaved<T>& saved, bool batch_stats, std::span<T> dgamma,
                             std::span<T> dbeta) {
  require_same_shape(dy.shape(), x.shape(), "batchnorm backward");
  const int C = x.c();
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(plane) * x.n();
  Tensor<T> dx(x.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double m = saved.mean[c];
    const double is = saved.inv_std[c];
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      const T* g = dy.plane(n, c);
      for (std::size_t j = 0; j < plane; ++j) {
        sum_dy += g[j];
        sum_dy_xhat += g[j] * ((p[j] - m) * is);
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    const double gi = gamma[c] * is;
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      const T* g = dy.plane(n, c);
      T* q = dx.plane(n, c);
      if (batch_stats) {
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (std::size_t j = 0; j < plane; ++j) {
          const double xhat = (p[j] - m) * is;
          q[j] = static_cast<T>(gi * (g[j] - mean_dy - xhat * mean_dy_xhat));
        }
      } else {
        for (std::size_t j = 0; j < plane; ++j) q[j] = static_cast<T>(gi * g[j]);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::size_t n = x.size();
  const T* p = x.data();
  T* q = y.data();
  for (std::size_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& x) {
  require_same_shape(dy.shape(), x.shape(), "relu backward");
  Tensor<T> dx(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, int k, int stride, std::vector<std::int64_t>& argmax) {
  if (k < 1 || stride < 1) dim_error("maxpool2d: window and stride must be positive");
  if (x.h() < k) dim_error("maxpool2d: window " + std::to_string(k) + " larger than height " + std::to_string(x.h()));
  if (x.w() < k) dim_error("maxpool2d: window " + std::to_string(k) + " larger than width " + std::to_string(x.w()));
  const int oh = (x.h() - k) / stride + 1;
  const int ow = (x.w() - k) / stride + 1;
  Tensor<T> y({x.n(), x.c(), oh, ow});
  argmax.assign(y.size(), 0);
  const int planes = x.n() * x.c();
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const std::size_t in_base = static_cast<std::size_t>(pc) * x.h() * x.w();
    const std::size_t out_base = static_cast<std::size_t>(pc) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        std::size_t best = in_base + static_cast<std::size_t>(i * stride) * x.w() + j * stride;
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) {
            const std::size_t idx = in_base + static_cast<std::size_t>(i * stride + a) * x.w() + j * stride + b;
            if (x[idx] > x[best]) best = idx;
          }
        y[out_base + i * ow + j] = x[best];
        argmax[out_base + i * ow + j] = static_cast<std::int64_t>(best);
      }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& dy, const Shape4& x_shape,
                             const std::vector<std::int64_t>& argmax) {
  if (argmax.size() != dy.size()) dim_error("maxpool2d backward: argmax length mismatch");
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[static_cast<std::size_t>(argmax[i])] += dy[i];
  return dx;
}

template <typename T>
Tensor<T> eltwise_forward(const Tensor<T>& a, const Tensor<T>& b, EltwiseMode mode) {
  require_same_shape(a.shape(), b.shape(), "eltwise");
  Tensor<T> y(a.shape());
  const std::size_t n = a.size();
  switch (mode) {
    case EltwiseMode::kSum:
      for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
      break;
    case EltwiseMode::kMax:
      for (std::size_t i = 0; i < n; ++i) y[i] = a[i] >= b[i] ? a[i] : b[i];
      break;
    case EltwiseMode::kProduct:
      for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
      break;
  }
  return y;
}

template <typename T>
void eltwise_backward(const Tensor<T>& dy, const Tensor<T>& a, const Tensor<T>& b, EltwiseMode mode,
                      Tensor<T>& da, Tensor<T>& db) {
  require_same_shape(dy.shape(), a.shape(), "eltwise backward");
  da = Tensor<T>(a.shape());
  db = Tensor<T>(b.shape());
  const std::size_t n = a.size();
  switch (mode) {
    case EltwiseMode::kSum:
      for (std::size_t i = 0; i < n; ++i) {
        da[i] = dy[i];
        db[i] = dy[i];
      }
      break;
    case EltwiseMode::kMax:
      for (std::size_t i = 0; i < n; ++i) {
        if (a[i] >= b[i]) {
          da[i] = dy[i];
        } else {
          db[i] = dy[i];
        }
      }
      break;
    case EltwiseMode::kProduct:
      for (std::size_t i = 0; i < n; ++i) {
        da[i] = dy[i] * b[i];
        db[i] = dy[i] * a[i];
      }
      break;
  }
}

namespace {

template <typename T>
struct InterpTable {
  std::vector<int> lo, hi;
  std::vector<T> frac;
};

template <typename T>
InterpTable<T> interp_table(int in, int out) {
  InterpTable<T> t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int l = static_cast<int>(src);
    if (l > in - 1) l = in - 1;
    t.lo[o] = l;
    t.hi[o] = std::min(l + 1, in - 1);
    t.frac[o] = static_cast<T>(src - l);
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_forward(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < x.h()) dim_error("bilinear: target height " + std::to_string(out_h) + " smaller than input " + std::to_string(x.h()));
  if (out_w < x.w()) dim_error("bilinear: target width " + std::to_string(out_w) + " smaller than input " + std::to_string(x.w()));
  const auto th = interp_table<T>(x.h(), out_h);
  const auto tw = interp_table<T>(x.w(), out_w);
  Tensor<T> y({x.n(), x.c(), out_h, out_w});
  const int planes = x.n() * x.c();
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const T* src = x.data() + static_cast<std::size_t>(pc) * x.h() * x.w();
    T* dst = y.data() + static_cast<std::size_t>(pc) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      const T fy = th.frac[i];
      const T* r0 = src + static_cast<std::size_t>(th.lo[i]) * x.w();
      const T* r1 = src + static_cast<std::size_t>(th.hi[i]) * x.w();
      for (int j = 0; j < out_w; ++j) {
        const T fx = tw.frac[j];
        const T top = r0[tw.lo[j]] * (T(1) - fx) + r0[tw.hi[j]] * fx;
        const T bot = r1[tw.lo[j]] * (T(1) - fx) + r1[tw.hi[j]] * fx;
        dst[static_cast<std::size_t>(i) * out_w + j] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> bilinear_backward(const Tensor<T>& dy, const Shape4& x_shape) {
  const int out_h = dy.h();
  const int out_w = dy.w();
  const auto th = interp_table<T>(x_shape.h, out_h);
  const auto tw = interp_table<T>(x_shape.w, out_w);
  Tensor<T> dx(x_shape);
  const int planes = x_shape.n * x_shape.c;
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const T* g = dy.data() + static_cast<std::size_t>(pc) * out_h * out_w;
    T* d = dx.data() + static_cast<std::size_t>(pc) * x_shape.h * x_shape.w;
    for (int i = 0; i < out_h; ++i) {
      const T fy = th.frac[i];
      T* r0 = d + static_cast<std::size_t>(th.lo[i]) * x_shape.w;
      T* r1 = d + static_cast<std::size_t>(th.hi[i]) * x_shape.w;
      for (int j = 0; j < out_w; ++j) {
        const T fx = tw.frac[j];
        const T v = g[static_cast<std::size_t>(i) * out_w + j];
        r0[tw.lo[j]] += v * (T(1) - fy) * (T(1) - fx);
        r0[tw.hi[j]] += v * (T(1) - fy) * fx;
        r1[tw.lo[j]] += v * fy * (T(1) - fx);
        r1[tw.hi[j]] += v * fy * fx;
      }
    }
  }
  return dx;
}

#define STAIRNET_INSTANTIATE(T)                                                                          \
  template void gemm_accumulate<T>(int, int, int, const T*, int, const T*, int, T*, int);              \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int, int); \
  template Tensor<T> conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, const Shape4&, int, int); \
  template void conv2d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, int, int, Tensor<T>&,      \
                                          std::span<T>);                                                \
  template Tensor<T> deconv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int, int); \
  template Tensor<T> crop_top_left<T>(const Tensor<T>&, int, int);                                       \
  template Tensor<T> pad_bottom_right<T>(const Tensor<T>&, int, int);                                    \
  template Tensor<T> batchnorm_train_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, \
                                                T, BatchNormSaved<T>&);                                 \
  template Tensor<T> batchnorm_inference_forward<T>(const Tensor<T>&, std::span<const T>,                \
                                                    std::span<const T>, std::span<const T>,             \
                                                    std::span<const T>, T);                             \
  template Tensor<T> batchnorm_backward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,       \
                                           const BatchNormSaved<T>&, bool, std::span<T>, std::span<T>); \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                                  \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> maxpool2d_forward<T>(const Tensor<T>&, int, int, std::vector<std::int64_t>&);       \
  template Tensor<T> maxpool2d_backward<T>(const Tensor<T>&, const Shape4&,                              \
                                           const std::vector<std::int64_t>&);                           \
  template Tensor<T> eltwise_forward<T>(const Tensor<T>&, const Tensor<T>&, EltwiseMode);                \
  template void eltwise_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, EltwiseMode,   \
                                    Tensor<T>&, Tensor<T>&);                                            \
  template Tensor<T> bilinear_forward<T>(const Tensor<T>&, int, int);                                    \
  template Tensor<T> bilinear_backward<T>(const Tensor<T>&, const Shape4&);

STAIRNET_INSTANTIATE(float)
STAIRNET_INSTANTIATE(double)
#undef STAIRNET_INSTANTIATE

}  // namespace stairnet::kernels
