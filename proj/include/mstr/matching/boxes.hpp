#pragma once

#include "mstr/hoi.hpp"

namespace mstr {

inline constexpr double kAreaEps = 1e-7;

double iou(const Box& a, const Box& b);
// IoU - |hull \ (a u b)| / |hull|, in (-1, 1]. Denominators are floored at kAreaEps.
double giou(const Box& a, const Box& b);

// Row-wise gIoU of two [n, 4] center/size box tensors -> [n]. Differentiable in both.
Var giou_rows(const Var& a, const Var& b);

}  // namespace mstr
