#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mstr/app/run_config.hpp"
#include "mstr/numerics/gradcheck.hpp"

namespace mstr {

struct GradcheckCase {
  std::string module;
  std::string op;
  std::function<GradCheckResult(const RunConfig&, std::uint64_t seed)> run;
};

// One case per differentiable operation, plus the composed attention modules,
// heads, losses and the full model.
const std::vector<GradcheckCase>& gradcheck_cases();

struct GradcheckRow {
  std::string module;
  std::string op;
  double max_rel_error = 0.0;
  bool passed = false;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  double seconds = 0.0;
};

std::vector<GradcheckRow> run_gradcheck_suite(const RunConfig& cfg, std::uint64_t seed);

// An op whose backward is off by a factor of two. Its check must fail.
GradCheckResult corrupted_backward_check(const RunConfig& cfg, std::uint64_t seed);

}  // namespace mstr
