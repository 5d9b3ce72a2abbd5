#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mstr/data/bins.hpp"
#include "mstr/hoi.hpp"
#include "mstr/numerics/tensor.hpp"

namespace mstr {

// Difficulty / rendering settings of the synthetic generator. A scene's action
// is the d_interaction band of its pair under `distance_thresholds`, so labels
// are a function of the rendered geometry.
struct SceneConfig {
  int image_size = 64;
  int object_classes = 3;
  int actions = 3;
  double noise = 0.05;        // amplitude of uniform pixel noise
  int pairs = 1;              // interacting pairs per scene
  int min_side_px = 4;
  // "mixed", "random", "h<o", "h=o", "h>o", "adjacent", "moderate", "distant"
  std::string preset = "mixed";
  Thresholds distance_thresholds{15.0, 60.0};
  // Resolved per scene from the preset; -1 draws the band at random.
  int ratio_band = -1;
  int distance_band = -1;

  void validate() const;
  // Applies the preset for scene `index` of a dataset.
  SceneConfig for_index(int index) const;

  bool operator==(const SceneConfig&) const = default;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);

struct Scene {
  int id = 0;
  std::uint64_t seed = 0;
  SceneConfig config;  // resolved
  std::vector<HOITriplet> triplets;
  Tensor image;  // [3, S, S]
};

// Pure function of (seed, cfg). Throws GenerationError when no layout satisfying
// the requested bands fits in the image.
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Per-scene seeds derived from the dataset seed.
std::uint64_t scene_seed(std::uint64_t dataset_seed, int index);
std::vector<Scene> generate_dataset(int count, std::uint64_t seed, const SceneConfig& cfg);

// Draws the labelled boxes on top of an image, as an RGB pixmap.
void write_scene_ppm(const std::filesystem::path& path, const Scene& scene);

}  // namespace mstr
