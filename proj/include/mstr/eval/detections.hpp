#pragma once

#include <filesystem>
#include <vector>

#include "mstr/data/scene.hpp"
#include "mstr/eval/metrics.hpp"

namespace mstr {

// One detection per query: argmax object class, argmax action,
// score = p(action) * p(class).
std::vector<DetectionRecord> detections_from_predictions(int scene, const PredictionSet& pred);

std::vector<GroundTruth> ground_truth_of(const std::vector<Scene>& scenes);
// The ground truth itself as detections with score 1, one per active action.
std::vector<DetectionRecord> ground_truth_as_detections(const std::vector<GroundTruth>& gts);

// JSONL: {"scene", "index", "object_class", "action", "human", "object", "score"}
void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& dets);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

// "action,object,ap" rows in class order plus a final "mAP" summary row.
void write_ap_csv(const std::filesystem::path& path, const APResult& r);
// "axis,bin,num_gt,ap"
void write_binned_csv(const std::filesystem::path& path, const std::vector<BinAP>& bins);

}  // namespace mstr
