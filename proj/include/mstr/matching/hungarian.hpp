#pragma once

#include <vector>

namespace mstr {

// Square cost matrix, row-major.
struct CostMatrix {
  int n = 0;
  std::vector<double> values;

  CostMatrix() = default;
  explicit CostMatrix(int size, double fill = 0.0)
      : n(size), values(static_cast<std::size_t>(size) * size, fill) {}
  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * n + c]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * n + c]; }
};

struct Assignment {
  std::vector<int> col_for_row;  // sigma(i)
  double cost = 0.0;             // sum_i C[i, sigma(i)], summed in row order
};

// Minimum-cost perfect assignment in O(n^3). Among optimal permutations the
// lexicographically smallest col_for_row is returned. Throws ArgumentError on
// non-finite entries.
Assignment hungarian_match(const CostMatrix& cost);

// Exhaustive search over all n! permutations (first minimum in lexicographic order).
Assignment brute_force_match(const CostMatrix& cost);

bool is_permutation(const std::vector<int>& p, int n);

}  // namespace mstr
