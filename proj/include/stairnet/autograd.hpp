#pragma once
// Reverse-mode differentiation over Tensor<T>.
//
// A Tape records each executed op together with a closure that replays its
// backward pass. Parameters live in a ParamStore and are bound to the tape on
// first use; later uses of the same parameter reuse the bound variable, so its
// gradient accumulates over every use within one pass.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "stairnet/kernels.hpp"
#include "stairnet/tensor.hpp"

namespace stairnet {

using kernels::EltwiseMode;

/// Named parameter tensors plus non-trainable buffers (batchnorm running stats).
template <typename T>
class ParamStore {
 public:
  int add(const std::string& name, Tensor<T> value, bool trainable = true);

  int size() const { return static_cast<int>(values_.size()); }
  Tensor<T>& value(int id) { return values_.at(id); }
  const Tensor<T>& value(int id) const { return values_.at(id); }
  const std::string& name(int id) const { return names_.at(id); }
  bool trainable(int id) const { return trainable_.at(id); }
  /// -1 when absent.
  int find(const std::string& name) const;

  /// Number of trainable scalars whose name starts with `prefix`.
  std::size_t count_trainable(const std::string& prefix = "") const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (int i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>(), trainable_[i]);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, int> index_;
};

/// Gradient per parameter id; buffers and untouched parameters hold zeros.
template <typename T>
using ParamGrads = std::vector<Tensor<T>>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  explicit Tape(ParamStore<T>* store = nullptr, bool training = true) : store_(store), training_(training) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }
  ParamStore<T>& store();

  /// Leaf holding data (images, test inputs). With requires_grad its gradient
  /// is available via grad(); otherwise ops skip computing it.
  Var input(Tensor<T> value, bool requires_grad = true);
  bool needs_grad(Var v) const { return needs_grad_.at(v.id); }
  /// Leaf bound to store parameter `pid`; repeated calls return the same Var.
  Var param(int pid);

  /// Appends an op output; `backward` receives the gradient of that output.
  Var record(const char* op, Tensor<T> value, const std::vector<Var>& inputs, Backward backward);

  const Tensor<T>& value(Var v) const { return values_.at(v.id); }
  /// Gradient of v after backward(); a zero tensor when v did not influence the loss.
  Tensor<T> grad(Var v) const;
  void accumulate(Var v, const Tensor<T>& g);

  /// Seeds the gradient of `out` and replays ops in reverse order.
  ParamGrads<T> backward(Var out, const Tensor<T>& seed);
  /// Scalar outputs only; seed 1.
  ParamGrads<T> backward(Var scalar_out);

  std::size_t num_ops() const { return nodes_.size(); }
  /// Op names in the order the last backward() visited them.
  const std::vector<std::string>& backward_trace() const { return trace_; }

 private:
  struct Node {
    const char* op;
    Var out;
    Backward backward;
  };

  ParamStore<T>* store_;
  bool training_;
  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> needs_grad_;
  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_vars_;  // store id -> var id
  std::vector<std::string> trace_;
};

/// Handles into a ParamStore describing one convolution (or transposed convolution).
struct ConvParams {
  int weight = -1;
  int bias = -1;  // -1: no bias
  int stride = 1;
  int pad = 0;
};

enum class BatchNormMode { kTraining, kInference };

struct BatchNormState {
  int gamma = -1;
  int beta = -1;
  int running_mean = -1;
  int running_var = -1;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Deterministic parameter initializer (He-uniform on fan-in).
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi);
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Weights out x in x k x k, zero bias.
template <typename T>
ConvParams add_conv(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int k, int stride,
                    int pad, ParamInit& init, bool bias = true);

/// Weights in x out x k x k (transposed-conv layout), zero bias.
template <typename T>
ConvParams add_deconv(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int k,
                      int stride, int pad, ParamInit& init, bool bias = true);

/// gamma = 1, beta = 0, running mean 0, running var 1.
template <typename T>
BatchNormState add_batchnorm(ParamStore<T>& store, const std::string& name, int channels);

namespace ops {

template <typename T>
Var conv2d(Tape<T>& tape, Var x, const ConvParams& p);

/// Transposed convolution followed by a top-left crop to (target_h, target_w).
template <typename T>
Var deconv2d(Tape<T>& tape, Var x, const ConvParams& p, int target_h, int target_w);

/// Training mode uses batch statistics and updates the running stats; mode
/// follows tape.training().
template <typename T>
Var batchnorm(Tape<T>& tape, Var x, const BatchNormState& s);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var maxpool2d(Tape<T>& tape, Var x, int k, int stride);

template <typename T>
Var eltwise(Tape<T>& tape, Var a, Var b, EltwiseMode mode);

template <typename T>
Var bilinear_upsample(Tape<T>& tape, Var x, int target_h, int target_w);

/// Sum of all elements as a 1x1x1x1 tensor.
template <typename T>
Var sum(Tape<T>& tape, Var x);

/// <coeffs, x> as a 1x1x1x1 tensor.
template <typename T>
Var dot(Tape<T>& tape, Var x, const Tensor<T>& coeffs);

/// Sum of scalar (1x1x1x1) vars.
template <typename T>
Var add_scalars(Tape<T>& tape, const std::vector<Var>& terms);

}  // namespace ops

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace stairnet
