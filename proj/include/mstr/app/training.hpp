#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mstr/app/run_config.hpp"
#include "mstr/data/scene.hpp"
#include "mstr/eval/metrics.hpp"
#include "mstr/matching/losses.hpp"
#include "mstr/model/model.hpp"

namespace mstr {

struct LossRecord {
  int step = 0;  // 1-based optimizer step
  double loc = 0, cls = 0, act = 0, total = 0;
};

struct ConvergencePoint {
  int step = 0;
  double loss = 0;  // mean total loss since the previous point
  double map = 0;   // train-set mAP after `step` updates
};

struct TrainResult {
  int steps = 0;             // optimizer steps taken
  int target_step = -1;      // first evaluated step with mAP >= target, -1 if never
  double final_map = 0.0;
  std::vector<LossRecord> losses;
  std::vector<ConvergencePoint> convergence;
};

struct SceneLoss {
  LossTerms terms;  // summed over decoder layers
};

// Sum of the set losses of every decoder layer (auxiliary layers included).
SceneLoss scene_loss(const Model& model, const Scene& scene, const LossWeights& w = {});

// AdamW training on `scenes`. Writes checkpoint-{step}.bin into `checkpoint_dir`
// at the configured interval when a directory is given. On a non-finite loss,
// writes nan-dump.json there and throws NumericError.
TrainResult train_model(Model& model, const std::vector<Scene>& scenes, const TrainConfig& cfg, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

std::vector<DetectionRecord> predict_dataset(const Model& model, const std::vector<Scene>& scenes);
double dataset_map(const Model& model, const std::vector<Scene>& scenes);

}  // namespace mstr
