#pragma once
// Named 64-bit central-difference checks over every differentiable op and the
// full detector loss, shared by the tests, the acceptance run and the CLI.

#include <string>
#include <vector>

namespace stairnet {

struct GradCase {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Names accepted by run_gradient_case, ops first and "full_model" last.
std::vector<std::string> gradient_case_names();

/// Op cases use tolerance 1e-6 and check input and parameter gradients; the
/// full-model case checks every parameter of a tiny combined detector against
/// 1e-4. Unknown names throw ConfigError.
GradCase run_gradient_case(const std::string& name);

std::vector<GradCase> run_gradient_suite(bool include_full_model = true);

}  // namespace stairnet
