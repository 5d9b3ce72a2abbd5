#include "mstr/matching/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mstr/errors.hpp"

namespace mstr {

namespace {

double assignment_cost(const CostMatrix& c, const std::vector<int>& p) {
  double total = 0.0;
  for (int i = 0; i < c.n; ++i) total += c(i, p[i]);
  return total;
}

// Kuhn-Munkres with row/column potentials (1-based internally). Returns the
// assignment and leaves feasible potentials u, v with C - u - v >= 0.
std::vector<int> solve(const CostMatrix& c, std::vector<double>& u, std::vector<double>& v) {
  const int n = c.n;
  const double inf = std::numeric_limits<double>::infinity();
  u.assign(n + 1, 0.0);
  v.assign(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_for_row(n);
  for (int j = 1; j <= n; ++j) col_for_row[p[j] - 1] = j - 1;
  return col_for_row;
}

// Alternating-path search in the tight-edge graph: frees column `target` by
// re-routing starting at row `row`. Fixed rows/cols are off limits.
bool reroute(int row, int target, const std::vector<std::vector<char>>& tight, std::vector<int>& col_for_row,
             std::vector<int>& row_for_col, const std::vector<char>& row_fixed, const std::vector<char>& col_fixed,
             std::vector<char>& visited) {
  const int n = static_cast<int>(col_for_row.size());
  for (int j = 0; j < n; ++j) {
    if (!tight[row][j] || col_fixed[j] || visited[j]) continue;
    visited[j] = 1;
    const int owner = row_for_col[j];
    if (j == target || (owner >= 0 && !row_fixed[owner] &&
                        reroute(owner, target, tight, col_for_row, row_for_col, row_fixed, col_fixed, visited))) {
      col_for_row[row] = j;
      row_for_col[j] = row;
      return true;
    }
  }
  return false;
}

}  // namespace

bool is_permutation(const std::vector<int>& p, int n) {
  if (static_cast<int>(p.size()) != n) return false;
  std::vector<char> seen(n, 0);
  for (int v : p) {
    if (v < 0 || v >= n || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

Assignment hungarian_match(const CostMatrix& cost) {
  const int n = cost.n;
  if (n < 0 || cost.values.size() != static_cast<std::size_t>(n) * n)
    throw ArgumentError("hungarian_match: cost matrix is not square");
  double scale = 0.0;
  for (double x : cost.values) {
    if (!std::isfinite(x)) throw ArgumentError("hungarian_match: cost matrix has a non-finite entry");
    scale = std::max(scale, std::abs(x));
  }
  if (n == 0) return {};

  std::vector<double> u, v;
  std::vector<int> col_for_row = solve(cost, u, v);

  // Every optimal permutation uses only edges with zero reduced cost under the
  // optimal potentials, so the lexicographically smallest optimum is the
  // lexicographically smallest perfect matching of that tight subgraph.
  const double tol = 1e-9 * (1.0 + scale);
  std::vector<std::vector<char>> tight(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) tight[i][j] = cost(i, j) - u[i + 1] - v[j + 1] <= tol;

  std::vector<int> row_for_col(n);
  for (int i = 0; i < n; ++i) row_for_col[col_for_row[i]] = i;
  std::vector<char> row_fixed(n, 0), col_fixed(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < col_for_row[i]; ++j) {
      if (!tight[i][j] || col_fixed[j]) continue;
      // Take (i, j); the previous owner of j must reach i's old column.
      const int old_col = col_for_row[i];
      const int owner = row_for_col[j];
      std::vector<int> trial_cols = col_for_row, trial_rows = row_for_col;
      std::vector<char> fixed = row_fixed, cfixed = col_fixed;
      fixed[i] = 1;
      cfixed[j] = 1;
      trial_cols[i] = j;
      trial_rows[j] = i;
      trial_rows[old_col] = -1;
      std::vector<char> visited(n, 0);
      if (reroute(owner, old_col, tight, trial_cols, trial_rows, fixed, cfixed, visited)) {
        col_for_row = std::move(trial_cols);
        row_for_col = std::move(trial_rows);
        break;
      }
    }
    row_fixed[i] = 1;
    col_fixed[col_for_row[i]] = 1;
  }

  Assignment out;
  out.col_for_row = std::move(col_for_row);
  out.cost = assignment_cost(cost, out.col_for_row);
  return out;
}

Assignment brute_force_match(const CostMatrix& cost) {
  const int n = cost.n;
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  Assignment best;
  best.col_for_row = p;
  best.cost = assignment_cost(cost, p);
  while (std::next_permutation(p.begin(), p.end())) {
    const double c = assignment_cost(cost, p);
    if (c < best.cost) {
      best.cost = c;
      best.col_for_row = p;
    }
  }
  return best;
}

}  // namespace mstr
