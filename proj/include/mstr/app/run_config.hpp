#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "mstr/data/bins.hpp"
#include "mstr/data/scene.hpp"
#include "mstr/model/config.hpp"

namespace mstr {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double grad_clip = 0.1;     // <= 0 disables clipping
  int eval_every = 100;       // train-set mAP interval for the convergence log
  int checkpoint_every = 0;   // 0: only the final checkpoint
  double target_map = 0.0;    // stop once train mAP reaches this (0 disables)

  void validate() const;
};

struct GradcheckConfig {
  double tolerance = 1e-4;
  double step = 1e-5;
  int model_image_size = 32;      // image side for the full-model check
  int max_entries_per_tensor = 8; // sampled entries per parameter tensor in the full-model check
};

// Everything a command needs besides its command-line flags.
struct RunConfig {
  ModelConfig model;
  SceneConfig data;
  int scenes = 32;
  TrainConfig train;
  BinConfig bins;
  GradcheckConfig gradcheck;
  int visualize_scene = 0;

  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

}  // namespace mstr
