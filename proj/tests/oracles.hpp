#pragma once

// Brute-force reference implementations shared by the unit and acceptance tests.
// They deliberately avoid the library's own matching and metric code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

#include "mstr/eval/metrics.hpp"
#include "mstr/matching/hungarian.hpp"
#include "mstr/numerics/random.hpp"

namespace oracle {

// Minimum of sum_i C[i, p(i)] over all n! permutations, summed in row order.
inline double min_assignment_cost(const mstr::CostMatrix& c) {
  std::vector<int> p(c.n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < c.n; ++i) s += c(i, p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

inline double box_iou(const mstr::Box& a, const mstr::Box& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline bool matches(const mstr::DetectionRecord& d, const mstr::GroundTruth& g) {
  return d.scene == g.scene && d.triplet.object_class == g.triplet.object_class &&
         d.action < static_cast<int>(g.triplet.actions.size()) && g.triplet.actions[d.action] == 1 &&
         box_iou(d.triplet.human, g.triplet.human) >= 0.5 && box_iou(d.triplet.object, g.triplet.object) >= 0.5;
}

// All-points interpolated AP: every true positive raises recall by 1/num_gt and
// contributes that step times the best precision at its rank or below.
inline double interpolated_ap(const std::vector<bool>& tp, int num_gt) {
  std::vector<double> precision;
  int hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i];
    precision.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    double best = 0.0;
    for (std::size_t j = i; j < tp.size(); ++j) best = std::max(best, precision[j]);
    ap += (1.0 / num_gt) * best;
  }
  return ap;
}

// AP of one class by exhaustive search over every injective assignment of
// ranked detections to matching ground truth. The chosen assignment is the
// lexicographic maximum, in rank order, of (matched, min(IoU_h, IoU_o), -gt index)
// per detection: each detection in turn claims its best remaining ground truth.
inline double exhaustive_ap(std::vector<mstr::DetectionRecord> dets, const std::vector<mstr::GroundTruth>& gts) {
  if (gts.empty()) return 0.0;
  std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(-a.score, a.scene, a.index) < std::make_tuple(-b.score, b.scene, b.index);
  });
  using Key = std::tuple<int, double, int>;
  std::vector<Key> best_keys, keys;
  std::vector<bool> best_tp, tp;
  std::vector<bool> used(gts.size(), false);
  bool have_best = false;

  auto recurse = [&](auto&& self, std::size_t d) -> void {
    if (d == dets.size()) {
      if (!have_best || keys > best_keys) {
        best_keys = keys;
        best_tp = tp;
        have_best = true;
      }
      return;
    }
    keys.emplace_back(0, 0.0, 0);
    tp.push_back(false);
    self(self, d + 1);
    keys.pop_back();
    tp.pop_back();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || !matches(dets[d], gts[g])) continue;
      const double overlap = std::min(box_iou(dets[d].triplet.human, gts[g].triplet.human),
                                      box_iou(dets[d].triplet.object, gts[g].triplet.object));
      used[g] = true;
      keys.emplace_back(1, overlap, -static_cast<int>(g));
      tp.push_back(true);
      self(self, d + 1);
      keys.pop_back();
      tp.pop_back();
      used[g] = false;
    }
  };
  recurse(recurse, 0);
  return interpolated_ap(best_tp, static_cast<int>(gts.size()));
}

struct APCase {
  std::vector<mstr::DetectionRecord> dets;
  std::vector<mstr::GroundTruth> gts;
};

// One HOI class over two scenes: up to 4 ground truths and up to `max_dets`
// detections jittered around them, with coarse scores so ties occur.
inline APCase random_ap_case(mstr::Rng& rng, int max_dets = 10) {
  APCase c;
  auto jitter = [&](mstr::Box b, double amount) {
    b.cx += rng.uniform(-amount, amount) * b.w;
    b.cy += rng.uniform(-amount, amount) * b.h;
    b.w *= 1 + rng.uniform(-amount, amount);
    b.h *= 1 + rng.uniform(-amount, amount);
    return b;
  };
  const int num_gt = rng.integer(1, 4);
  for (int i = 0; i < num_gt; ++i) {
    mstr::GroundTruth g;
    g.scene = rng.integer(0, 1);
    g.triplet.human = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)};
    // overlapping ground truths make the choice of match matter
    g.triplet.object = i > 0 && rng.uniform() < 0.5 ? jitter(c.gts[0].triplet.object, 0.2)
                                                     : mstr::Box{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                                                 rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)};
    if (i > 0 && rng.uniform() < 0.5) g.triplet.human = jitter(c.gts[0].triplet.human, 0.2);
    g.triplet.actions = {1, 0};
    c.gts.push_back(g);
  }
  const int num_det = rng.integer(0, max_dets);
  int index[2] = {0, 0};
  for (int i = 0; i < num_det; ++i) {
    const mstr::GroundTruth& g = c.gts[rng.integer(0, num_gt - 1)];
    mstr::DetectionRecord d;
    d.scene = rng.uniform() < 0.85 ? g.scene : 1 - g.scene;
    d.index = index[d.scene]++;
    const double amount = rng.uniform() < 0.7 ? 0.15 : 0.9;
    d.triplet.human = jitter(g.triplet.human, amount);
    d.triplet.object = jitter(g.triplet.object, amount);
    d.triplet.object_class = 0;
    d.action = 0;
    d.triplet.actions = {1, 0};
    d.score = rng.integer(1, 5) / 5.0;
    c.dets.push_back(d);
  }
  return c;
}

}  // namespace oracle
