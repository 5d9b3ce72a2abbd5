#include "mstr/eval/metrics.hpp"

#include <algorithm>
#include <set>

#include "mstr/errors.hpp"
#include "mstr/matching/boxes.hpp"

namespace mstr {

namespace {

struct Expanded {
  std::vector<GroundTruth> gts;  // one per (triplet, active action)
  std::vector<int> source;       // index of the originating triplet
};

Expanded expand(const std::vector<GroundTruth>& gts) {
  Expanded e;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& acts = gts[i].triplet.actions;
    for (std::size_t a = 0; a < acts.size(); ++a) {
      if (!acts[a]) continue;
      GroundTruth g = gts[i];
      g.triplet.actions.assign(acts.size(), 0);
      g.triplet.actions[a] = 1;
      e.gts.push_back(std::move(g));
      e.source.push_back(static_cast<int>(i));
    }
  }
  return e;
}

HOIClass class_of(const HOITriplet& t) {
  const auto it = std::find(t.actions.begin(), t.actions.end(), 1);
  return {static_cast<int>(it - t.actions.begin()), t.object_class};
}

HOIClass class_of(const DetectionRecord& d) { return {d.action, d.triplet.object_class}; }

}  // namespace

bool triplet_match(const DetectionRecord& det, const HOITriplet& gt) {
  if (det.triplet.object_class != gt.object_class) return false;
  if (det.action < 0 || det.action >= static_cast<int>(gt.actions.size()) || !gt.actions[det.action]) return false;
  return iou(det.triplet.human, gt.human) >= kMatchIoU && iou(det.triplet.object, gt.object) >= kMatchIoU;
}

void sort_detections(std::vector<DetectionRecord>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.index < b.index;
  });
}

std::vector<int> greedy_match(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruth>& gts,
                              const std::vector<char>& ignored) {
  std::vector<char> used(gts.size(), 0);
  std::vector<int> out(dets.size(), -1);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    bool best_ignored = true;
    double best_overlap = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].scene != dets[d].scene || !triplet_match(dets[d], gts[g].triplet)) continue;
      const bool ign = !ignored.empty() && ignored[g];
      const double overlap = std::min(iou(dets[d].triplet.human, gts[g].triplet.human),
                                      iou(dets[d].triplet.object, gts[g].triplet.object));
      const bool better = best < 0 || (best_ignored && !ign) || (ign == best_ignored && overlap > best_overlap);
      if (better) {
        best = static_cast<int>(g);
        best_ignored = ign;
        best_overlap = overlap;
      }
    }
    if (best >= 0) {
      used[best] = 1;
      out[d] = best;
    }
  }
  return out;
}

std::optional<double> ap_from_flags(const std::vector<char>& tp, int num_gt) {
  if (num_gt <= 0) return std::nullopt;
  const std::size_t n = tp.size();
  std::vector<double> precision(n);
  int hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hits += tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  // precision envelope, then sum recall steps
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (tp[i]) ap += (1.0 / num_gt) * precision[i];
  return ap;
}

std::optional<double> average_precision(std::vector<DetectionRecord> dets, const std::vector<GroundTruth>& gts) {
  sort_detections(dets);
  const auto match = greedy_match(dets, gts);
  std::vector<char> tp(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) tp[i] = match[i] >= 0;
  return ap_from_flags(tp, static_cast<int>(gts.size()));
}

APResult evaluate_map(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruth>& gts) {
  const Expanded e = expand(gts);
  std::map<HOIClass, std::vector<GroundTruth>> by_class;
  for (const auto& g : e.gts) by_class[class_of(g.triplet)].push_back(g);
  std::map<HOIClass, std::vector<DetectionRecord>> det_by_class;
  for (const auto& d : dets) det_by_class[class_of(d)].push_back(d);

  APResult r;
  for (const auto& [cls, class_gts] : by_class) {
    const auto it = det_by_class.find(cls);
    const auto ap = average_precision(it == det_by_class.end() ? std::vector<DetectionRecord>{} : it->second,
                                      class_gts);
    r.per_class[cls] = *ap;
  }
  double sum = 0.0;
  for (const auto& [_, ap] : r.per_class) sum += ap;
  r.map = r.per_class.empty() ? 0.0 : sum / static_cast<double>(r.per_class.size());
  return r;
}

std::vector<BinAP> binned_ap(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruth>& gts,
                             const ResolvedBins& bins) {
  if (bins.labels.size() != gts.size()) throw ArgumentError("binned_ap: bin labels do not match ground truth");
  const Expanded e = expand(gts);
  std::set<HOIClass> classes;
  for (const auto& g : e.gts) classes.insert(class_of(g.triplet));

  std::vector<BinAP> out;
  for (const BinAxis axis : kBinAxes) {
    for (int band = 0; band < 3; ++band) {
      BinAP result{axis, band, 0, 0.0};
      double sum = 0.0;
      int counted = 0;
      for (const auto& cls : classes) {
        std::vector<GroundTruth> class_gts;
        std::vector<char> ignored;
        int in_bin = 0;
        for (std::size_t i = 0; i < e.gts.size(); ++i) {
          if (class_of(e.gts[i].triplet) != cls) continue;
          const bool inside = bins.labels[e.source[i]][axis] == band;
          class_gts.push_back(e.gts[i]);
          ignored.push_back(!inside);
          in_bin += inside ? 1 : 0;
        }
        if (in_bin == 0) continue;
        std::vector<DetectionRecord> class_dets;
        for (const auto& d : dets)
          if (class_of(d) == cls) class_dets.push_back(d);
        sort_detections(class_dets);
        const auto match = greedy_match(class_dets, class_gts, ignored);
        std::vector<char> tp;
        for (std::size_t i = 0; i < class_dets.size(); ++i) {
          if (match[i] >= 0 && ignored[match[i]]) continue;
          tp.push_back(match[i] >= 0);
        }
        sum += *ap_from_flags(tp, in_bin);
        ++counted;
        result.num_gt += in_bin;
      }
      if (counted == 0) continue;
      result.map = sum / counted;
      out.push_back(result);
    }
  }
  return out;
}

}  // namespace mstr
