#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "mstr/data/bins.hpp"
#include "mstr/hoi.hpp"

namespace mstr {

inline constexpr double kMatchIoU = 0.5;

// One scored HOI prediction. `triplet.actions` is one-hot at `action`.
struct DetectionRecord {
  int scene = 0;
  int index = 0;  // position within the scene; ties in score are broken by (scene, index)
  HOITriplet triplet;
  int action = 0;
  double score = 0.0;
};

struct GroundTruth {
  int scene = 0;
  HOITriplet triplet;
};

// Both boxes at IoU >= 0.5, same object class, and the scored action is among
// the ground-truth actions. Scenes are not compared.
bool triplet_match(const DetectionRecord& det, const HOITriplet& gt);

// Orders by descending score, then ascending (scene, index).
void sort_detections(std::vector<DetectionRecord>& dets);

// Per detection (in sorted order): the matched ground-truth index or -1.
// Each detection takes the unmatched ground truth of its scene that it matches
// with the largest min(IoU_h, IoU_o), preferring non-ignored ones.
std::vector<int> greedy_match(const std::vector<DetectionRecord>& sorted_dets, const std::vector<GroundTruth>& gts,
                              const std::vector<char>& ignored = {});

// All-points interpolated area under the precision/recall curve given the
// TP/FP flags of a ranked list. nullopt when there is no ground truth.
std::optional<double> ap_from_flags(const std::vector<char>& true_positive, int num_gt);

// AP of one class: `dets` and `gts` must already be restricted to it.
std::optional<double> average_precision(std::vector<DetectionRecord> dets, const std::vector<GroundTruth>& gts);

// (action, object class)
using HOIClass = std::pair<int, int>;

struct APResult {
  std::map<HOIClass, double> per_class;  // classes with at least one ground truth
  double map = 0.0;
};

// Each ground-truth triplet counts once per active action.
APResult evaluate_map(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruth>& gts);

struct BinAP {
  BinAxis axis = BinAxis::AreaRatio;
  int band = 0;
  int num_gt = 0;
  double map = 0.0;
};

// mAP restricted to the ground truth of each bin. Detections matched to
// ground truth outside the bin are ignored instead of counted as false
// positives. Empty bins are omitted.
std::vector<BinAP> binned_ap(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruth>& gts,
                             const ResolvedBins& bins);

}  // namespace mstr
