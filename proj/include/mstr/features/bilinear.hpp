#pragma once

#include <cmath>

namespace mstr {

// The four pixels around a continuous coordinate, under the pixel-center
// convention (pixel (i, j) has its center at x = j, y = i). Corners outside
// the map are flagged invalid and contribute zero.
struct BilinearCorners {
  int index[4];      // flat row-major pixel index, or -1 when out of bounds
  double weight[4];  // interpolation weight
  double dwdx[4];    // d weight / d x
  double dwdy[4];    // d weight / d y
};

inline BilinearCorners bilinear_corners(double x, double y, int height, int width) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double tx = x - fx, ty = y - fy;
  BilinearCorners c{};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const double wx[4] = {1 - tx, tx, 1 - tx, tx};
  const double wy[4] = {1 - ty, 1 - ty, ty, ty};
  const double dx[4] = {-1, 1, -1, 1};
  const double dy[4] = {-1, -1, 1, 1};
  for (int k = 0; k < 4; ++k) {
    const bool inside = xs[k] >= 0 && xs[k] < width && ys[k] >= 0 && ys[k] < height;
    c.index[k] = inside ? ys[k] * width + xs[k] : -1;
    c.weight[k] = wx[k] * wy[k];
    c.dwdx[k] = dx[k] * wy[k];
    c.dwdy[k] = wx[k] * dy[k];
  }
  return c;
}

}  // namespace mstr
