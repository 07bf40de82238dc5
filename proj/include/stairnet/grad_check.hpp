#pragma once

#include <cstdint>
#include <functional>

#include "stairnet/autograd.hpp"

namespace stairnet {

/// Builds a scalar on the tape from the input variable.
using ScalarGraph = std::function<Var(Tape<double>&, Var)>;

/// Scalar value of f at a point; used by the finite-difference side.
using ScalarValue = std::function<double(const Tensor<double>&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded sample without replacement.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
  /// Parameter store the graph's ops bind to (may be null).
  ParamStore<double>* store = nullptr;
  /// Lower bound on the relative-error denominator.
  double denom_floor = 1e-8;
};

/// Per-parameter outcome of grad_check_params.
struct ParamCheck {
  std::string name;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
};

/// Builds a scalar on a tape bound to the store.
using ParamGraph = std::function<Var(Tape<double>&)>;

/// Checks the gradient of every trainable parameter in `store`, sampling up to
/// opt.max_coords coordinates per tensor.
std::vector<ParamCheck> grad_check_params(const ParamGraph& f, ParamStore<double>& store,
                                          const GradCheckOptions& opt = {});

/// Max over checked coordinates of |a - n| / max(|a|, |n|, denom_floor) where n is
/// the central difference (f(x + eps e) - f(x - eps e)) / (2 eps).
double compare_with_central_differences(const ScalarValue& f, const Tensor<double>& x,
                                        const Tensor<double>& analytic, const GradCheckOptions& opt = {});

/// Tape gradient of f at x versus central differences.
double grad_check(const ScalarGraph& f, const Tensor<double>& x, const GradCheckOptions& opt = {});

/// Coordinates checked for a tensor of `size` elements under `opt`, in ascending order.
std::vector<std::size_t> sample_coordinates(std::size_t size, const GradCheckOptions& opt);

}  // namespace stairnet
