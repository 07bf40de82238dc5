#include "stairnet/autograd.hpp"

#include <cmath>
#include <memory>

namespace stairnet {

// ---------------------------------------------------------------- ParamStore

template <typename T>
int ParamStore<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  const int id = size();
  names_.push_back(name);
  values_.push_back(std::move(value));
  trainable_.push_back(trainable);
  index_.emplace(name, id);
  return id;
}

template <typename T>
int ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

template <typename T>
std::size_t ParamStore<T>::count_trainable(const std::string& prefix) const {
  std::size_t total = 0;
  for (int i = 0; i < size(); ++i)
    if (trainable_[i] && names_[i].compare(0, prefix.size(), prefix) == 0) total += values_[i].size();
  return total;
}

// ---------------------------------------------------------------------- Tape

template <typename T>
ParamStore<T>& Tape<T>::store() {
  if (!store_) throw StateError("tape has no parameter store");
  return *store_;
}

template <typename T>
Var Tape<T>::input(Tensor<T> value, bool requires_grad) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  needs_grad_.push_back(requires_grad);
  return Var{static_cast<int>(values_.size()) - 1};
}

template <typename T>
Var Tape<T>::param(int pid) {
  auto it = param_vars_.find(pid);
  if (it != param_vars_.end()) return Var{it->second};
  // Copy: later optimizer steps must not alias values recorded on this tape.
  Var v = input(store().value(pid), true);
  param_vars_.emplace(pid, v.id);
  return v;
}

template <typename T>
Var Tape<T>::record(const char* op, Tensor<T> value, const std::vector<Var>& inputs, Backward backward) {
  bool any = false;
  for (Var in : inputs) any = any || needs_grad_.at(in.id);
  values_.push_back(std::move(value));
  grads_.emplace_back();
  needs_grad_.push_back(any);
  Var out{static_cast<int>(values_.size()) - 1};
  if (any) nodes_.push_back(Node{op, out, std::move(backward)});
  return out;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
  const Tensor<T>& g = grads_.at(v.id);
  if (g.empty()) return Tensor<T>(values_.at(v.id).shape());
  return g;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
  if (!needs_grad_.at(v.id)) return;
  Tensor<T>& dst = grads_.at(v.id);
  if (dst.empty()) {
    require_same_shape(g.shape(), values_.at(v.id).shape(), "gradient accumulation");
    dst = g;
    return;
  }
  require_same_shape(g.shape(), dst.shape(), "gradient accumulation");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <typename T>
ParamGrads<T> Tape<T>::backward(Var out, const Tensor<T>& seed) {
  if (nodes_.empty() || !out.valid() || out.id >= static_cast<int>(values_.size())) {
    throw StateError("backward called before any differentiable forward op was recorded");
  }
  require_same_shape(seed.shape(), values_[out.id].shape(), "backward seed");
  for (auto& g : grads_) g = Tensor<T>();
  trace_.clear();
  grads_[out.id] = seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (grads_[it->out.id].empty()) continue;
    trace_.emplace_back(it->op);
    // The closure may accumulate into earlier vars only, so this reference stays valid.
    const Tensor<T>& g = grads_[it->out.id];
    it->backward(*this, g);
  }
  ParamGrads<T> result;
  if (store_) {
    result.reserve(store_->size());
    for (int pid = 0; pid < store_->size(); ++pid) {
      auto pv = param_vars_.find(pid);
      if (pv != param_vars_.end() && !grads_[pv->second].empty()) {
        result.push_back(grads_[pv->second]);
      } else {
        result.emplace_back(store_->value(pid).shape());
      }
    }
  }
  return result;
}

template <typename T>
ParamGrads<T> Tape<T>::backward(Var scalar_out) {
  if (!scalar_out.valid()) throw StateError("backward called with an invalid variable");
  const Shape4 s = values_.at(scalar_out.id).shape();
  if (s.numel() != 1) throw DimensionError("backward without a seed needs a scalar output, got " + s.str());
  return backward(scalar_out, Tensor<T>(s, T(1)));
}

// ------------------------------------------------------------ initialization

double ParamInit::uniform(double lo, double hi) {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

namespace {

template <typename T>
Tensor<T> he_uniform(Shape4 shape, double fan_in, ParamInit& init) {
  Tensor<T> t(shape);
  const double bound = std::sqrt(6.0 / fan_in);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(init.uniform(-bound, bound));
  return t;
}

}  // namespace

template <typename T>
ConvParams add_conv(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int k, int stride,
                    int pad, ParamInit& init, bool bias) {
  ConvParams p;
  p.weight = store.add(name + ".weight", he_uniform<T>({out_ch, in_ch, k, k}, double(in_ch) * k * k, init));
  if (bias) p.bias = store.add(name + ".bias", Tensor<T>({1, out_ch, 1, 1}));
  p.stride = stride;
  p.pad = pad;
  return p;
}

template <typename T>
ConvParams add_deconv(ParamStore<T>& store, const std::string& name, int in_ch, int out_ch, int k,
                      int stride, int pad, ParamInit& init, bool bias) {
  ConvParams p;
  // Each output pixel sees in_ch * (k / stride)^2 inputs.
  const double fan_in = std::max(1.0, double(in_ch) * k * k / (double(stride) * stride));
  p.weight = store.add(name + ".weight", he_uniform<T>({in_ch, out_ch, k, k}, fan_in, init));
  if (bias) p.bias = store.add(name + ".bias", Tensor<T>({1, out_ch, 1, 1}));
  p.stride = stride;
  p.pad = pad;
  return p;
}

template <typename T>
BatchNormState add_batchnorm(ParamStore<T>& store, const std::string& name, int channels) {
  BatchNormState s;
  s.gamma = store.add(name + ".gamma", Tensor<T>({1, channels, 1, 1}, T(1)));
  s.beta = store.add(name + ".beta", Tensor<T>({1, channels, 1, 1}));
  s.running_mean = store.add(name + ".running_mean", Tensor<T>({1, channels, 1, 1}), false);
  s.running_var = store.add(name + ".running_var", Tensor<T>({1, channels, 1, 1}, T(1)), false);
  return s;
}

// ----------------------------------------------------------------------- ops

namespace ops {

template <typename T>
Var conv2d(Tape<T>& tape, Var x, const ConvParams& p) {
  Var w = tape.param(p.weight);
  Var b = p.bias >= 0 ? tape.param(p.bias) : Var{};
  std::span<const T> bias;
  if (b.valid()) bias = tape.value(b).span();
  Tensor<T> y = kernels::conv2d_forward(tape.value(x), tape.value(w), bias, p.stride, p.pad);
  const int stride = p.stride;
  const int pad = p.pad;
  return tape.record("conv2d", std::move(y), {x, w}, [x, w, b, stride, pad](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    if (t.needs_grad(x)) t.accumulate(x, kernels::conv2d_backward_input(g, wv, xv.shape(), stride, pad));
    Tensor<T> dw(wv.shape());
    Tensor<T> db;
    std::span<T> dbs;
    if (b.valid()) {
      db = Tensor<T>(t.value(b).shape());
      dbs = db.span();
    }
    kernels::conv2d_backward_weight(g, xv, stride, pad, dw, dbs);
    t.accumulate(w, dw);
    if (b.valid()) t.accumulate(b, db);
  });
}

template <typename T>
Var deconv2d(Tape<T>& tape, Var x, const ConvParams& p, int target_h, int target_w) {
  Var w = tape.param(p.weight);
  Var b = p.bias >= 0 ? tape.param(p.bias) : Var{};
  const Tensor<T>& wv = tape.value(w);
  const Shape4 full = kernels::deconv_full_shape(tape.value(x).shape(), wv.shape(), p.stride, p.pad);
  const int k = wv.h();
  if (target_h > full.h || target_w > full.w) {
    throw DimensionError("deconv2d: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                         " larger than producible " + std::to_string(full.h) + "x" + std::to_string(full.w));
  }
  if (full.h - target_h > k - 1 || full.w - target_w > k - 1) {
    throw DimensionError("deconv2d: crop from " + std::to_string(full.h) + "x" + std::to_string(full.w) +
                         " to " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                         " exceeds kernel overhang");
  }
  std::span<const T> bias;
  if (b.valid()) bias = tape.value(b).span();
  Tensor<T> y = kernels::crop_top_left(kernels::deconv2d_forward(tape.value(x), wv, bias, p.stride, p.pad),
                                       target_h, target_w);
  const int stride = p.stride;
  const int pad = p.pad;
  return tape.record("deconv2d", std::move(y), {x, w},
                     [x, w, b, stride, pad, full](Tape<T>& t, const Tensor<T>& g) {
                       const Tensor<T> g_full = kernels::pad_bottom_right(g, full.h, full.w);
                       const Tensor<T>& wv = t.value(w);
                       if (t.needs_grad(x)) {
                         t.accumulate(x, kernels::conv2d_forward(g_full, wv, std::span<const T>{}, stride, pad));
                       }
                       Tensor<T> dw(wv.shape());
                       kernels::conv2d_backward_weight(t.value(x), g_full, stride, pad, dw, std::span<T>{});
                       t.accumulate(w, dw);
                       if (b.valid()) {
                         Tensor<T> db(t.value(b).shape());
                         const std::size_t plane = g.shape().plane();
                         for (int n = 0; n < g.n(); ++n)
                           for (int c = 0; c < g.c(); ++c) {
                             const T* gp = g.plane(n, c);
                             T s = 0;
                             for (std::size_t j = 0; j < plane; ++j) s += gp[j];
                             db[c] += s;
                           }
                         t.accumulate(b, db);
                       }
                     });
}

template <typename T>
Var batchnorm(Tape<T>& tape, Var x, const BatchNormState& s) {
  Var gamma = tape.param(s.gamma);
  Var beta = tape.param(s.beta);
  const Tensor<T>& xv = tape.value(x);
  const T eps = static_cast<T>(s.epsilon);
  auto saved = std::make_shared<kernels::BatchNormSaved<T>>();
  Tensor<T> y;
  const bool batch_stats = tape.training();
  if (batch_stats) {
    y = kernels::batchnorm_train_forward(xv, tape.value(gamma).span(), tape.value(beta).span(), eps, *saved);
    Tensor<T>& rm = tape.store().value(s.running_mean);
    Tensor<T>& rv = tape.store().value(s.running_var);
    const double count = static_cast<double>(xv.n()) * xv.h() * xv.w();
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    const T m = static_cast<T>(s.momentum);
    for (int c = 0; c < xv.c(); ++c) {
      rm[c] = (T(1) - m) * rm[c] + m * saved->mean[c];
      rv[c] = (T(1) - m) * rv[c] + m * static_cast<T>(saved->var[c] * unbias);
    }
  } else {
    const Tensor<T>& rm = tape.store().value(s.running_mean);
    const Tensor<T>& rv = tape.store().value(s.running_var);
    if (rm.c() != xv.c()) {
      throw DimensionError("batchnorm: channel mismatch, input has " + std::to_string(xv.c()) +
                           " channels, state has " + std::to_string(rm.c()));
    }
    y = kernels::batchnorm_inference_forward(xv, tape.value(gamma).span(), tape.value(beta).span(), rm.span(),
                                             rv.span(), eps);
    saved->mean.assign(rm.vec().begin(), rm.vec().end());
    saved->inv_std.resize(rv.size());
    for (std::size_t c = 0; c < rv.size(); ++c)
      saved->inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + eps));
  }
  return tape.record("batchnorm", std::move(y), {x, gamma, beta},
                     [x, gamma, beta, saved, batch_stats](Tape<T>& t, const Tensor<T>& g) {
                       Tensor<T> dg(t.value(gamma).shape());
                       Tensor<T> db(t.value(beta).shape());
                       Tensor<T> dx = kernels::batchnorm_backward(g, t.value(x), t.value(gamma).span(), *saved,
                                                                  batch_stats, dg.span(), db.span());
                       t.accumulate(x, dx);
                       t.accumulate(gamma, dg);
                       t.accumulate(beta, db);
                     });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return tape.record("relu", kernels::relu_forward(tape.value(x)), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, kernels::relu_backward(g, t.value(x)));
  });
}

template <typename T>
Var maxpool2d(Tape<T>& tape, Var x, int k, int stride) {
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  Tensor<T> y = kernels::maxpool2d_forward(tape.value(x), k, stride, *argmax);
  return tape.record("maxpool2d", std::move(y), {x}, [x, argmax](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, kernels::maxpool2d_backward(g, t.value(x).shape(), *argmax));
  });
}

template <typename T>
Var eltwise(Tape<T>& tape, Var a, Var b, EltwiseMode mode) {
  Tensor<T> y = kernels::eltwise_forward(tape.value(a), tape.value(b), mode);
  return tape.record("eltwise", std::move(y), {a, b}, [a, b, mode](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> da, db;
    kernels::eltwise_backward(g, t.value(a), t.value(b), mode, da, db);
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

template <typename T>
Var bilinear_upsample(Tape<T>& tape, Var x, int target_h, int target_w) {
  Tensor<T> y = kernels::bilinear_forward(tape.value(x), target_h, target_w);
  return tape.record("bilinear", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, kernels::bilinear_backward(g, t.value(x).shape()));
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T s = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  return tape.record("sum", Tensor<T>({1, 1, 1, 1}, s), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0]));
  });
}

template <typename T>
Var dot(Tape<T>& tape, Var x, const Tensor<T>& coeffs) {
  const Tensor<T>& xv = tape.value(x);
  require_same_shape(xv.shape(), coeffs.shape(), "dot");
  T s = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * coeffs[i];
  return tape.record("dot", Tensor<T>({1, 1, 1, 1}, s), {x}, [x, coeffs](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> dx(coeffs.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = coeffs[i] * g[0];
    t.accumulate(x, dx);
  });
}

template <typename T>
Var add_scalars(Tape<T>& tape, const std::vector<Var>& terms) {
  if (terms.empty()) throw DimensionError("add_scalars: no terms");
  T s = T(0);
  for (Var v : terms) {
    if (tape.value(v).size() != 1) throw DimensionError("add_scalars: term is not a scalar");
    s += tape.value(v)[0];
  }
  return tape.record("add_scalars", Tensor<T>({1, 1, 1, 1}, s), terms, [terms](Tape<T>& t, const Tensor<T>& g) {
    for (Var v : terms) t.accumulate(v, g);
  });
}

}  // namespace ops

template class ParamStore<float>;
template class ParamStore<double>;
template class Tape<float>;
template class Tape<double>;

#define STAIRNET_INSTANTIATE(T)                                                                                 \
  template ConvParams add_conv<T>(ParamStore<T>&, const std::string&, int, int, int, int, int, ParamInit&, bool); \
  template ConvParams add_deconv<T>(ParamStore<T>&, const std::string&, int, int, int, int, int, ParamInit&,     \
                                    bool);                                                                     \
  template BatchNormState add_batchnorm<T>(ParamStore<T>&, const std::string&, int);                           \
  template Var ops::conv2d<T>(Tape<T>&, Var, const ConvParams&);                                                \
  template Var ops::deconv2d<T>(Tape<T>&, Var, const ConvParams&, int, int);                                    \
  template Var ops::batchnorm<T>(Tape<T>&, Var, const BatchNormState&);                                         \
  template Var ops::relu<T>(Tape<T>&, Var);                                                                     \
  template Var ops::maxpool2d<T>(Tape<T>&, Var, int, int);                                                      \
  template Var ops::eltwise<T>(Tape<T>&, Var, Var, EltwiseMode);                                                \
  template Var ops::bilinear_upsample<T>(Tape<T>&, Var, int, int);                                              \
  template Var ops::sum<T>(Tape<T>&, Var);                                                                      \
  template Var ops::dot<T>(Tape<T>&, Var, const Tensor<T>&);                                                    \
  template Var ops::add_scalars<T>(Tape<T>&, const std::vector<Var>&);

STAIRNET_INSTANTIATE(float)
STAIRNET_INSTANTIATE(double)
#undef STAIRNET_INSTANTIATE

}  // namespace stairnet
