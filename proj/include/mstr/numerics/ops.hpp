#pragma once

#include <vector>

#include "mstr/numerics/autograd.hpp"

// Differentiable operations. Matrix-style ops treat a tensor as
// [rows, cols] with cols = last dimension.
namespace mstr::ops {

inline constexpr double kInverseSigmoidEps = 1e-5;

// Elementwise
Var add(const Var& a, const Var& b);  // same shape, or b broadcast as a row of a's last dim
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var inverse_sigmoid(const Var& y, double eps = kInverseSigmoidEps);
Var abs(const Var& x);
Var sum_of(const std::vector<Var>& xs);

// Reductions
Var sum(const Var& x);
Var mean(const Var& x);
Var row_sum(const Var& x);  // [r, c] -> [r]

// Linear algebra
Var matmul(const Var& a, const Var& b);                 // [n,k] x [k,m]
Var linear(const Var& x, const Var& w, const Var& b);   // x W^T + b, b may be undefined
Var transpose(const Var& x);                            // 2-D only

// Normalization
Var softmax(const Var& x, int axis = -1);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Shape
Var reshape(const Var& x, Shape shape);
Var slice_cols(const Var& x, int start, int count);
Var slice_rows(const Var& x, int start, int count);
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var gather_rows(const Var& x, const std::vector<int>& rows);

// [Cin, H, W] -> [Cout, Ho, Wo]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// [C, H, W] -> [H*W, C]
Var channels_last(const Var& x);

// Losses
// Sum of w_i * BCE(sigmoid(logit_i), t_i); `weights` may be empty (all ones).
Var bce_with_logits(const Var& logits, const Tensor& targets, const Tensor& weights = {});

}  // namespace mstr::ops
