#include "mstr/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mstr/errors.hpp"

namespace mstr::ops {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

CMapR as_matrix(const Tensor& t, int rows, int cols) { return CMapR(t.data(), rows, cols); }
MapR as_matrix(Tensor& t, int rows, int cols) { return MapR(t.data(), rows, cols); }

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <typename F, typename G>
Var unary(const Var& x, const char* name, F forward, G derivative) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  return Var::make(std::move(out), name, {x}, [derivative](detail::Node& self) {
    Tensor* gx = input_grad(self, 0);
    const Tensor& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i)
      (*gx)[i] += self.grad[i] * derivative(xv[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.same_shape(bv)) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return Var::make(std::move(out), "add", {a, b}, [](detail::Node& self) {
      for (std::size_t k = 0; k < 2; ++k)
        if (Tensor* g = input_grad(self, k))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
  }
  require(static_cast<int>(bv.size()) == av.cols(),
          "add: cannot broadcast " + shape_string(bv.shape()) + " onto " + shape_string(av.shape()));
  Tensor out = av;
  const int c = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return Var::make(std::move(out), "add_row", {a, b}, [c](detail::Node& self) {
    if (Tensor* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    if (Tensor* gb = input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % c] += self.grad[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var::make(std::move(out), "sub", {a, b}, [](detail::Node& self) {
    if (Tensor* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    if (Tensor* gb = input_grad(self, 1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var::make(std::move(out), "mul", {a, b}, [](detail::Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (Tensor* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
    if (Tensor* gb = input_grad(self, 1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return Var::make(std::move(out), "scale", {a}, [s](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += s;
  return Var::make(std::move(out), "add_scalar", {a}, [](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var inverse_sigmoid(const Var& y, double eps) {
  return unary(
      y, "inverse_sigmoid",
      [eps](double v) {
        double c = std::clamp(v, eps, 1.0 - eps);
        return std::log(c / (1.0 - c));
      },
      [eps](double v, double) {
        if (v < eps || v > 1.0 - eps) return 0.0;
        return 1.0 / (v * (1.0 - v));
      });
}

Var abs(const Var& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var sum_of(const std::vector<Var>& xs) {
  if (xs.empty()) throw ArgumentError("sum_of: empty list");
  Var acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

Var sum(const Var& x) {
  double s = 0;
  for (double v : x.value().values()) s += v;
  return Var::make(Tensor::scalar(s), "sum", {x}, [](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    const double d = self.grad[0];
    for (auto& v : g->values()) v += d;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var row_sum(const Var& x) {
  const Tensor& xv = x.value();
  const int r = xv.rows(), c = xv.cols();
  Tensor out({r}, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += xv.at(i, j);
  return Var::make(std::move(out), "row_sum", {x}, [c](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i / c];
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
          "matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  const int n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor out({n, m});
  as_matrix(out, n, m).noalias() = as_matrix(av, n, k) * as_matrix(bv, k, m);
  return Var::make(std::move(out), "matmul", {a, b}, [n, k, m](detail::Node& self) {
    auto dy = as_matrix(self.grad, n, m);
    if (Tensor* ga = input_grad(self, 0))
      as_matrix(*ga, n, k).noalias() += dy * as_matrix(self.inputs[1]->value, k, m).transpose();
    if (Tensor* gb = input_grad(self, 1))
      as_matrix(*gb, k, m).noalias() += as_matrix(self.inputs[0]->value, n, k).transpose() * dy;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(wv.rank() == 2 && xv.cols() == wv.dim(1),
          "linear: input " + shape_string(xv.shape()) + " vs weight " + shape_string(wv.shape()));
  const int n = xv.rows(), in = wv.dim(1), outd = wv.dim(0);
  const bool has_bias = b.defined();
  if (has_bias) require(static_cast<int>(b.value().size()) == outd, "linear: bias size mismatch");

  Shape out_shape = xv.shape();
  out_shape.back() = outd;
  Tensor out(out_shape);
  auto y = as_matrix(out, n, outd);
  y.noalias() = as_matrix(xv, n, in) * as_matrix(wv, outd, in).transpose();
  if (has_bias) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), outd);

  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return Var::make(std::move(out), "linear", std::move(inputs),
                   [n, in, outd, has_bias](detail::Node& self) {
                     auto dy = as_matrix(self.grad, n, outd);
                     if (Tensor* gx = input_grad(self, 0))
                       as_matrix(*gx, n, in).noalias() +=
                           dy * as_matrix(self.inputs[1]->value, outd, in);
                     if (Tensor* gw = input_grad(self, 1))
                       as_matrix(*gw, outd, in).noalias() +=
                           dy.transpose() * as_matrix(self.inputs[0]->value, n, in);
                     if (has_bias)
                       if (Tensor* gb = input_grad(self, 2))
                         Eigen::Map<Eigen::RowVectorXd>(gb->data(), outd) += dy.colwise().sum();
                   });
}

Var transpose(const Var& x) {
  const Tensor& xv = x.value();
  require(xv.rank() == 2, "transpose: rank-2 input required");
  const int r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  as_matrix(out, c, r) = as_matrix(xv, r, c).transpose();
  return Var::make(std::move(out), "transpose", {x}, [r, c](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    as_matrix(*g, r, c) += as_matrix(self.grad, c, r).transpose();
  });
}

Var softmax(const Var& x, int axis) {
  const Tensor& xv = x.value();
  if (axis < 0) axis += xv.rank();
  require(axis >= 0 && axis < xv.rank(), "softmax: axis out of range");
  int outer = 1, inner = 1;
  const int n = xv.dim(axis);
  for (int d = 0; d < axis; ++d) outer *= xv.dim(d);
  for (int d = axis + 1; d < xv.rank(); ++d) inner *= xv.dim(d);

  Tensor out(xv.shape());
  for (int o = 0; o < outer; ++o) {
    for (int i = 0; i < inner; ++i) {
      const std::size_t base = static_cast<std::size_t>(o) * n * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0;
      for (int k = 0; k < n; ++k) z += (out[base + k * inner] = std::exp(xv[base + k * inner] - mx));
      for (int k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  }
  return Var::make(std::move(out), "softmax", {x}, [outer, inner, n](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    const Tensor& y = self.value;
    for (int o = 0; o < outer; ++o) {
      for (int i = 0; i < inner; ++i) {
        const std::size_t base = static_cast<std::size_t>(o) * n * inner + i;
        double dot = 0;
        for (int k = 0; k < n; ++k) dot += self.grad[base + k * inner] * y[base + k * inner];
        for (int k = 0; k < n; ++k) {
          const std::size_t idx = base + k * inner;
          (*g)[idx] += y[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const int r = xv.rows(), c = xv.cols();
  require(static_cast<int>(gamma.value().size()) == c && static_cast<int>(beta.value().size()) == c,
          "layer_norm: affine size mismatch");
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(r);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (int i = 0; i < r; ++i) {
    double mu = 0;
    for (int j = 0; j < c; ++j) mu += xv.at(i, j);
    mu /= c;
    double var = 0;
    for (int j = 0; j < c; ++j) var += (xv.at(i, j) - mu) * (xv.at(i, j) - mu);
    var /= c;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      xhat.at(i, j) = (xv.at(i, j) - mu) * inv_std[i];
      out.at(i, j) = xhat.at(i, j) * gv[j] + bv[j];
    }
  }
  return Var::make(std::move(out), "layer_norm", {x, gamma, beta},
                   [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                     const Tensor& gv = self.inputs[1]->value;
                     Tensor* gx = input_grad(self, 0);
                     Tensor* gg = input_grad(self, 1);
                     Tensor* gb = input_grad(self, 2);
                     std::vector<double> dxhat(c);
                     for (int i = 0; i < r; ++i) {
                       double m1 = 0, m2 = 0;
                       for (int j = 0; j < c; ++j) {
                         const double dy = self.grad.at(i, j);
                         if (gg) (*gg)[j] += dy * xhat.at(i, j);
                         if (gb) (*gb)[j] += dy;
                         dxhat[j] = dy * gv[j];
                         m1 += dxhat[j];
                         m2 += dxhat[j] * xhat.at(i, j);
                       }
                       if (!gx) continue;
                       m1 /= c;
                       m2 /= c;
                       for (int j = 0; j < c; ++j)
                         gx->at(i, j) += inv_std[i] * (dxhat[j] - m1 - xhat.at(i, j) * m2);
                     }
                   });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::make(std::move(out), "reshape", {x}, [](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Var slice_cols(const Var& x, int start, int count) {
  const Tensor& xv = x.value();
  const int r = xv.rows(), c = xv.cols();
  require(start >= 0 && count > 0 && start + count <= c, "slice_cols: range out of bounds");
  Shape shape = xv.shape();
  shape.back() = count;
  Tensor out(shape);
  for (int i = 0; i < r; ++i)
    std::copy_n(xv.data() + static_cast<std::size_t>(i) * c + start, count,
                out.data() + static_cast<std::size_t>(i) * count);
  return Var::make(std::move(out), "slice_cols", {x}, [r, c, start, count](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < count; ++j) g->at(i, start + j) += self.grad.at(i, j);
  });
}

Var slice_rows(const Var& x, int start, int count) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && start >= 0 && count > 0 && start + count <= xv.dim(0),
          "slice_rows: range out of bounds");
  const std::size_t stride = xv.size() / xv.dim(0);
  Shape shape = xv.shape();
  shape[0] = count;
  Tensor out(shape);
  std::copy_n(xv.data() + start * stride, count * stride, out.data());
  return Var::make(std::move(out), "slice_rows", {x}, [start, stride](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    double* dst = g->data() + start * stride;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_cols: empty list");
  const int r = xs.front().value().rows();
  std::vector<int> widths;
  int total = 0;
  for (const auto& x : xs) {
    require(x.value().rows() == r, "concat_cols: row count mismatch");
    widths.push_back(x.value().cols());
    total += widths.back();
  }
  Shape shape = xs.front().value().shape();
  shape.back() = total;
  Tensor out(shape);
  int off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& xv = xs[k].value();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < widths[k]; ++j) out.at(i, off + j) = xv.at(i, j);
    off += widths[k];
  }
  return Var::make(std::move(out), "concat_cols", xs, [r, widths](detail::Node& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* g = input_grad(self, k))
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < widths[k]; ++j) g->at(i, j) += self.grad.at(i, off + j);
      off += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_rows: empty list");
  const int c = xs.front().value().cols();
  int total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& x : xs) {
    require(x.value().cols() == c, "concat_rows: column count mismatch");
    total += x.value().rows();
    sizes.push_back(x.value().size());
  }
  Tensor out({total, c});
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy_n(x.value().data(), x.value().size(), out.data() + off);
    off += x.value().size();
  }
  return Var::make(std::move(out), "concat_rows", xs, [sizes](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (Tensor* g = input_grad(self, k))
        for (std::size_t i = 0; i < sizes[k]; ++i) (*g)[i] += self.grad[off + i];
      off += sizes[k];
    }
  });
}

Var gather_rows(const Var& x, const std::vector<int>& rows) {
  const Tensor& xv = x.value();
  const int c = xv.cols();
  require(!rows.empty(), "gather_rows: empty index list");
  Tensor out({static_cast<int>(rows.size()), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < xv.rows(), "gather_rows: index out of range");
    std::copy_n(xv.data() + static_cast<std::size_t>(rows[i]) * c, c, out.data() + i * c);
  }
  return Var::make(std::move(out), "gather_rows", {x}, [rows, c](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < c; ++j) g->at(rows[i], j) += self.grad.at(static_cast<int>(i), j);
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.rank() == 3 && wv.rank() == 4 && wv.dim(1) == xv.dim(0),
          "conv2d: input " + shape_string(xv.shape()) + " vs weight " + shape_string(wv.shape()));
  require(stride > 0 && pad >= 0, "conv2d: invalid stride/padding");
  const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
  const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: kernel larger than padded input");
  const int patch = cin * kh * kw;
  const int npos = ho * wo;

  // im2col: [patch, npos]
  Tensor cols({patch, npos}, 0.0);
  for (int ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const int row = (ci * kh + ky) * kw + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= wd) continue;
            cols.at(row, oy * wo + ox) = xv[(static_cast<std::size_t>(ci) * h + iy) * wd + ix];
          }
        }
      }

  Tensor out({cout, ho, wo});
  auto y = as_matrix(out, cout, npos);
  y.noalias() = as_matrix(wv, cout, patch) * as_matrix(cols, patch, npos);
  const bool has_bias = b.defined();
  if (has_bias) y.colwise() += Eigen::Map<const Eigen::VectorXd>(b.value().data(), cout);

  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return Var::make(
      std::move(out), "conv2d", std::move(inputs),
      [=, cols = std::move(cols)](detail::Node& self) {
        auto dy = as_matrix(self.grad, cout, npos);
        if (Tensor* gw = input_grad(self, 1))
          as_matrix(*gw, cout, patch).noalias() += dy * as_matrix(cols, patch, npos).transpose();
        if (has_bias)
          if (Tensor* gb = input_grad(self, 2))
            Eigen::Map<Eigen::VectorXd>(gb->data(), cout) += dy.rowwise().sum();
        if (Tensor* gx = input_grad(self, 0)) {
          MatR dcols = as_matrix(self.inputs[1]->value, cout, patch).transpose() * dy;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int row = (ci * kh + ky) * kw + kx;
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int ox = 0; ox < wo; ++ox) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= wd) continue;
                    (*gx)[(static_cast<std::size_t>(ci) * h + iy) * wd + ix] +=
                        dcols(row, oy * wo + ox);
                  }
                }
              }
        }
      });
}

Var channels_last(const Var& x) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "channels_last: expected [C,H,W]");
  const int c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  Tensor out({hw, c});
  as_matrix(out, hw, c) = as_matrix(xv, c, hw).transpose();
  return Var::make(std::move(out), "channels_last", {x}, [c, hw](detail::Node& self) {
    Tensor* g = input_grad(self, 0);
    as_matrix(*g, c, hw) += as_matrix(self.grad, hw, c).transpose();
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets, const Tensor& weights) {
  const Tensor& z = logits.value();
  require(targets.size() == z.size(), "bce_with_logits: target size mismatch");
  require(weights.empty() || weights.size() == z.size(), "bce_with_logits: weight size mismatch");
  double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double zi = z[i];
    total += w * (std::max(zi, 0.0) - zi * targets[i] + std::log1p(std::exp(-std::fabs(zi))));
  }
  return Var::make(Tensor::scalar(total), "bce_with_logits", {logits},
                   [targets, weights](detail::Node& self) {
                     Tensor* g = input_grad(self, 0);
                     const Tensor& z = self.inputs[0]->value;
                     const double d = self.grad[0];
                     for (std::size_t i = 0; i < z.size(); ++i) {
                       const double w = weights.empty() ? 1.0 : weights[i];
                       (*g)[i] += d * w * (stable_sigmoid(z[i]) - targets[i]);
                     }
                   });
}

}  // namespace mstr::ops
