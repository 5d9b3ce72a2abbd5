#include "mstr/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mstr/errors.hpp"

namespace mstr {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, const std::vector<std::size_t>& indices,
                        double h) {
  if (h <= 0) throw ArgumentError("finite_diff_grad: step must be positive");
  Tensor probe = x;
  Tensor grad(x.shape(), 0.0);
  for (std::size_t i : indices) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return finite_diff_grad(f, x, all, h);
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor,
                          const std::vector<std::size_t>* indices) {
  if (!analytic.same_shape(numeric)) throw DimensionError("max_relative_error: shape mismatch");
  double worst = 0;
  auto visit = [&](std::size_t i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::fabs(a), std::fabs(n), floor});
    worst = std::max(worst, std::fabs(a - n) / denom);
  };
  if (indices) {
    for (std::size_t i : *indices) visit(i);
  } else {
    for (std::size_t i = 0; i < analytic.size(); ++i) visit(i);
  }
  return worst;
}

GradCheckResult check_gradients(const std::string& name, const std::function<Var()>& build,
                                std::vector<Var> inputs, double tolerance, double h,
                                std::size_t max_entries_per_input) {
  for (auto& in : inputs) in.zero_grad();
  Var out = build();
  if (out.value().size() != 1) throw DimensionError("check_gradients: graph output must be scalar");
  out.backward();

  // Central-difference roundoff is about eps*|f|/h. The floor keeps that noise
  // at a tenth of the tolerance on entries whose true gradient is ~0.
  const double noise = std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(out.value().item())) / h;
  const double floor = std::max(1e-7, 10.0 * noise / tolerance);

  GradCheckResult result{name, 0.0, true};
  for (auto& in : inputs) {
    const Tensor analytic = in.grad();
    const std::size_t n = in.value().size();
    std::vector<std::size_t> idx;
    if (max_entries_per_input == 0 || n <= max_entries_per_input) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      // Evenly spread, deterministic subset.
      for (std::size_t k = 0; k < max_entries_per_input; ++k)
        idx.push_back((k * n) / max_entries_per_input + (n / max_entries_per_input) / 2);
    }
    auto f = [&](const Tensor& probe) {
      Tensor saved = in.value();
      in.mutable_value() = probe;
      const double v = build().value().item();
      in.mutable_value() = std::move(saved);
      return v;
    };
    const Tensor numeric = finite_diff_grad(f, in.value(), idx, h);
    std::vector<std::size_t> smooth;
    for (std::size_t i : idx) {
      const double a = analytic[i], n = numeric[i];
      const double err = std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
      if (err > tolerance) {
        // A kink (relu, bilinear cell edge) inside [x-h, x+h] makes the central
        // difference depend on h. Such entries are not differentiable points.
        const double half = finite_diff_grad(f, in.value(), {i}, h / 2)[i];
        if (std::fabs(half - n) / std::max({std::fabs(half), std::fabs(n), floor}) > tolerance) {
          ++result.kinks;
          continue;
        }
      }
      smooth.push_back(i);
    }
    result.checked += smooth.size();
    result.max_rel_error = std::max(result.max_rel_error, max_relative_error(analytic, numeric, floor, &smooth));
  }
  result.passed = std::isfinite(result.max_rel_error) && result.max_rel_error <= tolerance &&
                  result.kinks * 10 <= result.checked;
  return result;
}

}  // namespace mstr
