#pragma once

#include <cstdint>
#include <filesystem>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mstr/app/gradcheck_suite.hpp"
#include "mstr/app/run_config.hpp"
#include "mstr/app/training.hpp"

namespace mstr {

// Inputs shared by all commands. Paths default to files inside `out`.
struct CommandContext {
  RunConfig config;
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  std::optional<std::filesystem::path> manifest;    // default out/manifest.jsonl
  std::optional<std::filesystem::path> checkpoint;  // default out/checkpoint.bin

  std::filesystem::path manifest_path() const;
  std::filesystem::path checkpoint_path() const;
};

// Creates `dir` (and parents); throws std::filesystem::filesystem_error when that fails.
void ensure_directory(const std::filesystem::path& dir);

// Triplet counts per generator band, indexed by band.
struct BandCounts {
  std::array<int, 3> area_ratio{};
  std::array<int, 3> distance{};
};
BandCounts band_counts(const std::vector<Scene>& scenes);

struct GenerateResult {
  std::vector<Scene> scenes;
  BandCounts counts;
};
// Writes manifest.jsonl and bin_counts.csv; with `pixmaps`, also scenes/scene-{id}.ppm.
GenerateResult cmd_generate(const CommandContext& ctx, bool pixmaps);

// Trains from the manifest. Writes checkpoint.bin, loss.csv and convergence.csv.
TrainResult cmd_train(const CommandContext& ctx);

// Loads the checkpoint into a model built from the config (ConfigError on any
// mismatch).
Model load_model(const CommandContext& ctx);

// Writes detections.jsonl, ap.csv and binned_ap.csv.
APResult cmd_eval(const CommandContext& ctx);

// Writes gradcheck.csv. Passed iff every row passed.
struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  bool passed = false;
};
GradcheckReport cmd_gradcheck(const CommandContext& ctx);

// For the top-scoring query of `scene`, writes scene-{id}-level-{l}.ppm for every
// level plus scene-{id}-attention.json. Returns the image paths.
std::vector<std::filesystem::path> cmd_visualize(const CommandContext& ctx, int scene);

// Ablation grid: each preset is trained on the first `config.scenes` scenes of the
// dataset and evaluated on the next `config.scenes` held-out ones.
struct AblationRow {
  std::string preset;
  std::uint64_t seed = 0;
  int steps = 0;
  int target_step = -1;
  double train_map = 0;
  double heldout_map = 0;
};
std::vector<AblationRow> cmd_ablate(const CommandContext& ctx, const std::vector<std::string>& presets, int seeds);

}  // namespace mstr
