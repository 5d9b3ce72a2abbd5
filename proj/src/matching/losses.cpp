#include "mstr/matching/losses.hpp"

#include <cmath>
#include <string>

#include "mstr/errors.hpp"
#include "mstr/matching/boxes.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

namespace {

// BCE(t, sigmoid(x)) = softplus(x) - t x, evaluated stably.
double bce_logit(double x, double t) {
  const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return softplus - t * x;
}

void check_triplet(const HOITriplet& gt, const PredictionSet& pred) {
  const int classes = pred.class_logits.value().cols();
  const int actions = pred.action_logits.value().cols();
  if (gt.object_class < 0 || gt.object_class >= classes)
    throw ArgumentError("object class " + std::to_string(gt.object_class) + " outside [0, " +
                        std::to_string(classes) + ")");
  if (static_cast<int>(gt.actions.size()) != actions)
    throw DimensionError("action vector has " + std::to_string(gt.actions.size()) + " entries, expected " +
                         std::to_string(actions));
}

Tensor box_tensor(const std::vector<const Box*>& boxes) {
  Tensor t({static_cast<int>(boxes.size()), 4});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    t[4 * i] = boxes[i]->cx;
    t[4 * i + 1] = boxes[i]->cy;
    t[4 * i + 2] = boxes[i]->w;
    t[4 * i + 3] = boxes[i]->h;
  }
  return t;
}

}  // namespace

double match_cost(const HOITriplet& gt, const PredictionSet& pred, int q, const LossWeights& w) {
  check_triplet(gt, pred);
  const Box ph = pred.human_box(q);
  const Box po = pred.object_box(q);
  auto l1 = [](const Box& a, const Box& b) {
    return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
  };
  const double cls_logit = pred.class_logits.value().at(q, gt.object_class);
  const double p_cls = 1.0 / (1.0 + std::exp(-cls_logit));
  const int actions = static_cast<int>(gt.actions.size());
  double act = 0.0;
  for (int a = 0; a < actions; ++a) act += bce_logit(pred.action_logits.value().at(q, a), gt.actions[a]);
  act /= actions;
  return w.l1 * (l1(gt.human, ph) + l1(gt.object, po)) + w.giou * (2.0 - giou(gt.human, ph) - giou(gt.object, po)) +
         w.cls * (1.0 - p_cls) + w.act * act;
}

CostMatrix build_cost_matrix(const std::vector<HOITriplet>& gts, const PredictionSet& pred, const LossWeights& w) {
  const int n = pred.size();
  if (static_cast<int>(gts.size()) > n)
    throw ArgumentError(std::to_string(gts.size()) + " ground-truth triplets exceed " + std::to_string(n) +
                        " queries");
  CostMatrix c(n, 0.0);
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (int q = 0; q < n; ++q) c(static_cast<int>(i), q) = match_cost(gts[i], pred, q, w);
  return c;
}

LossTerms compute_losses(const std::vector<HOITriplet>& gts, const PredictionSet& pred, const Assignment& sigma,
                         const LossWeights& w) {
  const int n = pred.size();
  if (!is_permutation(sigma.col_for_row, n)) throw ArgumentError("compute_losses: assignment is not a permutation");
  if (static_cast<int>(gts.size()) > n) throw ArgumentError("compute_losses: more triplets than queries");
  for (const auto& gt : gts) check_triplet(gt, pred);

  const int classes = pred.class_logits.value().cols();
  const int actions = pred.action_logits.value().cols();
  const int matched = static_cast<int>(gts.size());

  // classification targets for every query
  Tensor cls_targets({n, classes}, 0.0);
  Tensor cls_weights({n, classes}, w.no_object / classes);
  for (int i = 0; i < matched; ++i) {
    const int q = sigma.col_for_row[i];
    cls_targets.at(q, gts[i].object_class) = 1.0;
    for (int c = 0; c < classes; ++c) cls_weights.at(q, c) = 1.0 / classes;
  }
  LossTerms out;
  out.cls = ops::scale(ops::bce_with_logits(pred.class_logits, cls_targets, cls_weights), w.cls);

  if (matched == 0) {
    out.loc = Var::constant(Tensor::scalar(0.0));
    out.act = Var::constant(Tensor::scalar(0.0));
    out.total = out.cls;
    return out;
  }

  std::vector<int> queries(matched);
  std::vector<const Box*> human, object;
  Tensor act_targets({matched, actions});
  for (int i = 0; i < matched; ++i) {
    queries[i] = sigma.col_for_row[i];
    human.push_back(&gts[i].human);
    object.push_back(&gts[i].object);
    for (int a = 0; a < actions; ++a) act_targets.at(i, a) = gts[i].actions[a];
  }
  const Var ph = ops::gather_rows(pred.human_boxes, queries);
  const Var po = ops::gather_rows(pred.object_boxes, queries);
  const Var th = Var::constant(box_tensor(human));
  const Var to = Var::constant(box_tensor(object));

  const Var l1 = ops::add(ops::sum(ops::abs(ops::sub(ph, th))), ops::sum(ops::abs(ops::sub(po, to))));
  // sum (1 - giou) over both boxes = 2 * matched - sum giou
  const Var g = ops::add(ops::sum(giou_rows(ph, th)), ops::sum(giou_rows(po, to)));
  const Var giou_loss = ops::add_scalar(ops::scale(g, -1.0), 2.0 * matched);
  out.loc = ops::add(ops::scale(l1, w.l1), ops::scale(giou_loss, w.giou));

  const Var act_logits = ops::gather_rows(pred.action_logits, queries);
  out.act = ops::scale(ops::bce_with_logits(act_logits, act_targets, Tensor({matched, actions}, 1.0 / actions)),
                       w.act);
  out.total = ops::sum_of({out.loc, out.cls, out.act});
  return out;
}

MatchedLoss set_loss(const std::vector<HOITriplet>& gts, const PredictionSet& pred, const LossWeights& w) {
  MatchedLoss out;
  out.assignment = hungarian_match(build_cost_matrix(gts, pred, w));
  out.terms = compute_losses(gts, pred, out.assignment, w);
  return out;
}

}  // namespace mstr
