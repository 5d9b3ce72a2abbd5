#pragma once

#include <vector>

#include "mstr/numerics/autograd.hpp"

namespace mstr {

// Axis-aligned box in normalized image coordinates, center / size form.
struct Box {
  double cx = 0.5, cy = 0.5, w = 0.0, h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }
  bool operator==(const Box&) const = default;
};

// <human box, object box, object class, actions>. `object_class` is 0-based;
// `actions` is multi-hot with one entry per action class.
struct HOITriplet {
  Box human;
  Box object;
  int object_class = 0;
  std::vector<int> actions;

  bool operator==(const HOITriplet&) const = default;
};

// Per-query predictions of one decoder layer. Boxes are already in normalized
// center/size form; class and action heads are kept as logits so the losses can
// use a numerically stable BCE, probabilities are sigmoid(logits).
struct PredictionSet {
  Var human_boxes;    // [N, 4]
  Var object_boxes;   // [N, 4]
  Var class_logits;   // [N, C_obj]
  Var action_logits;  // [N, A]

  int size() const { return human_boxes.value().rows(); }
  Tensor class_probs() const;
  Tensor action_probs() const;
  Box human_box(int q) const;
  Box object_box(int q) const;
};

}  // namespace mstr
