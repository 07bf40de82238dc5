#include "stairnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stairnet {

std::vector<std::size_t> sample_coordinates(std::size_t size, const GradCheckOptions& opt) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (opt.max_coords == 0 || opt.max_coords >= size) return idx;
  std::mt19937_64 rng(opt.seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < opt.max_coords; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(opt.max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double compare_with_central_differences(const ScalarValue& f, const Tensor<double>& x,
                                        const Tensor<double>& analytic, const GradCheckOptions& opt) {
  require_same_shape(x.shape(), analytic.shape(), "grad_check");
  Tensor<double> probe = x;
  double worst = 0.0;
  for (std::size_t i : sample_coordinates(x.size(), opt)) {
    const double orig = probe[i];
    probe[i] = orig + opt.eps;
    const double fp = f(probe);
    probe[i] = orig - opt.eps;
    const double fm = f(probe);
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * opt.eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

double grad_check(const ScalarGraph& f, const Tensor<double>& x, const GradCheckOptions& opt) {
  Tensor<double> analytic;
  {
    Tape<double> tape(opt.store);
    Var xv = tape.input(x);
    Var out = f(tape, xv);
    tape.backward(out);
    analytic = tape.grad(xv);
  }
  auto value = [&f, &opt](const Tensor<double>& at) {
    Tape<double> tape(opt.store);
    Var xv = tape.input(at);
    return tape.value(f(tape, xv))[0];
  };
  return compare_with_central_differences(value, x, analytic, opt);
}

std::vector<ParamCheck> grad_check_params(const ParamGraph& f, ParamStore<double>& store,
                                          const GradCheckOptions& opt) {
  ParamGrads<double> grads;
  {
    Tape<double> tape(&store);
    Var out = f(tape);
    grads = tape.backward(out);
  }
  std::vector<ParamCheck> report;
  for (int pid = 0; pid < store.size(); ++pid) {
    if (!store.trainable(pid)) continue;
    Tensor<double> original = store.value(pid);
    auto value = [&](const Tensor<double>& at) {
      store.value(pid) = at;
      Tape<double> tape(&store);
      return tape.value(f(tape))[0];
    };
    GradCheckOptions per = opt;
    per.seed = opt.seed + static_cast<std::uint64_t>(pid);
    ParamCheck pc;
    pc.name = store.name(pid);
    pc.coords = sample_coordinates(original.size(), per).size();
    pc.max_rel_error = compare_with_central_differences(value, original, grads[pid], per);
    store.value(pid) = original;
    report.push_back(pc);
  }
  return report;
}

}  // namespace stairnet
