#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mstr/numerics/autograd.hpp"

namespace mstr {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element of x.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Same, restricted to the listed flat indices; other entries are left at zero.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, const std::vector<std::size_t>& indices,
                        double h = 1e-5);

/// Elementwise max of |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// that are numerically zero from dominating the ratio.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-7,
                          const std::vector<std::size_t>* indices = nullptr);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
  std::size_t checked = 0;  // entries compared
  std::size_t kinks = 0;    // entries skipped because the finite difference straddles a kink
};

/// Checks reverse-mode gradients of a scalar graph against finite differences
/// with respect to each of `inputs`. `build` must rebuild the graph from the
/// current leaf values on every call. Entries whose central difference changes
/// when the step is halved sit on a kink and are skipped; more than one skip per
/// ten compared entries fails the check.
GradCheckResult check_gradients(const std::string& name, const std::function<Var()>& build,
                                std::vector<Var> inputs, double tolerance = 1e-4,
                                double h = 1e-5, std::size_t max_entries_per_input = 0);

}  // namespace mstr
