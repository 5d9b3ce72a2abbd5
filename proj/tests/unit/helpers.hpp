#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "mstr/numerics/random.hpp"
#include "mstr/numerics/tensor.hpp"

namespace testing {

inline mstr::Tensor random_tensor(mstr::Shape shape, mstr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  mstr::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const mstr::Tensor& a, const mstr::Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mstr-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace testing
