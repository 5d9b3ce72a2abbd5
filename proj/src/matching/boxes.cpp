#include "mstr/matching/boxes.hpp"

#include <algorithm>
#include <cmath>

#include "mstr/errors.hpp"

namespace mstr {

namespace {

struct GiouParts {
  double ax1, ay1, ax2, ay2, bx1, by1, bx2, by2;
  double iw, ih, inter, area_a, area_b, uni, hw, hh, hull;
  double value;
};

GiouParts giou_parts(const double* a, const double* b) {
  GiouParts p{};
  p.ax1 = a[0] - 0.5 * a[2];
  p.ax2 = a[0] + 0.5 * a[2];
  p.ay1 = a[1] - 0.5 * a[3];
  p.ay2 = a[1] + 0.5 * a[3];
  p.bx1 = b[0] - 0.5 * b[2];
  p.bx2 = b[0] + 0.5 * b[2];
  p.by1 = b[1] - 0.5 * b[3];
  p.by2 = b[1] + 0.5 * b[3];
  p.iw = std::min(p.ax2, p.bx2) - std::max(p.ax1, p.bx1);
  p.ih = std::min(p.ay2, p.by2) - std::max(p.ay1, p.by1);
  p.inter = std::max(p.iw, 0.0) * std::max(p.ih, 0.0);
  p.area_a = (p.ax2 - p.ax1) * (p.ay2 - p.ay1);
  p.area_b = (p.bx2 - p.bx1) * (p.by2 - p.by1);
  p.uni = p.area_a + p.area_b - p.inter;
  p.hw = std::max(p.ax2, p.bx2) - std::min(p.ax1, p.bx1);
  p.hh = std::max(p.ay2, p.by2) - std::min(p.ay1, p.by1);
  p.hull = p.hw * p.hh;
  p.value = p.inter / std::max(p.uni, kAreaEps) - (p.hull - p.uni) / std::max(p.hull, kAreaEps);
  return p;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  const double inter = std::max(iw, 0.0) * std::max(ih, 0.0);
  const double uni = a.area() + b.area() - inter;
  return inter / std::max(uni, kAreaEps);
}

double giou(const Box& a, const Box& b) {
  const double av[4] = {a.cx, a.cy, a.w, a.h};
  const double bv[4] = {b.cx, b.cy, b.w, b.h};
  return giou_parts(av, bv).value;
}

Var giou_rows(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != 4 || !av.same_shape(bv)) throw DimensionError("giou_rows: expected matching [n, 4] boxes");
  const int n = av.rows();
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[i] = giou_parts(av.data() + 4 * i, bv.data() + 4 * i).value;

  return Var::make(std::move(out), "giou", {a, b}, [n](detail::Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    Tensor* ga = input_grad(self, 0);
    Tensor* gb = input_grad(self, 1);
    for (int i = 0; i < n; ++i) {
      const double dg = self.grad[i];
      const GiouParts p = giou_parts(av.data() + 4 * i, bv.data() + 4 * i);
      const double ud = std::max(p.uni, kAreaEps);
      const double hd = std::max(p.hull, kAreaEps);
      // giou = inter / ud - (hull - uni) / hd
      const double d_uni = dg * ((p.uni > kAreaEps ? -p.inter / (ud * ud) : 0.0) + 1.0 / hd);
      const double d_hull =
          -dg * (p.hull > kAreaEps ? 1.0 / hd - (p.hull - p.uni) / (hd * hd) : 1.0 / hd);
      const double d_inter = dg / ud - d_uni;
      const double d_area = d_uni;  // both areas enter uni with +1

      // corner grads: [x1, y1, x2, y2] for a and b
      double da[4] = {0, 0, 0, 0}, db[4] = {0, 0, 0, 0};
      // areas
      da[0] -= d_area * (p.ay2 - p.ay1);
      da[2] += d_area * (p.ay2 - p.ay1);
      da[1] -= d_area * (p.ax2 - p.ax1);
      da[3] += d_area * (p.ax2 - p.ax1);
      db[0] -= d_area * (p.by2 - p.by1);
      db[2] += d_area * (p.by2 - p.by1);
      db[1] -= d_area * (p.bx2 - p.bx1);
      db[3] += d_area * (p.bx2 - p.bx1);
      // intersection
      if (p.iw > 0 && p.ih > 0) {
        const double diw = d_inter * p.ih;
        const double dih = d_inter * p.iw;
        (p.ax2 <= p.bx2 ? da[2] : db[2]) += diw;
        (p.ax1 >= p.bx1 ? da[0] : db[0]) -= diw;
        (p.ay2 <= p.by2 ? da[3] : db[3]) += dih;
        (p.ay1 >= p.by1 ? da[1] : db[1]) -= dih;
      }
      // hull
      const double dhw = d_hull * p.hh;
      const double dhh = d_hull * p.hw;
      (p.ax2 >= p.bx2 ? da[2] : db[2]) += dhw;
      (p.ax1 <= p.bx1 ? da[0] : db[0]) -= dhw;
      (p.ay2 >= p.by2 ? da[3] : db[3]) += dhh;
      (p.ay1 <= p.by1 ? da[1] : db[1]) -= dhh;

      auto to_center = [](const double* d, double* g) {
        g[0] += d[0] + d[2];
        g[1] += d[1] + d[3];
        g[2] += 0.5 * (d[2] - d[0]);
        g[3] += 0.5 * (d[3] - d[1]);
      };
      if (ga) to_center(da, ga->data() + 4 * i);
      if (gb) to_center(db, gb->data() + 4 * i);
    }
  });
}

Tensor PredictionSet::class_probs() const {
  Tensor p = class_logits.value();
  for (auto& v : p.values()) v = 1.0 / (1.0 + std::exp(-v));
  return p;
}

Tensor PredictionSet::action_probs() const {
  Tensor p = action_logits.value();
  for (auto& v : p.values()) v = 1.0 / (1.0 + std::exp(-v));
  return p;
}

Box PredictionSet::human_box(int q) const {
  const Tensor& t = human_boxes.value();
  return {t.at(q, 0), t.at(q, 1), t.at(q, 2), t.at(q, 3)};
}

Box PredictionSet::object_box(int q) const {
  const Tensor& t = object_boxes.value();
  return {t.at(q, 0), t.at(q, 1), t.at(q, 2), t.at(q, 3)};
}

}  // namespace mstr
