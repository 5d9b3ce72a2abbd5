#pragma once

#include <filesystem>
#include <vector>

#include "mstr/numerics/parameter.hpp"

namespace mstr {

// Image-normalized coordinate; components are clamped into [0, 1].
struct NormalizedPoint {
  double x = 0.5;
  double y = 0.5;

  static NormalizedPoint clamped(double x, double y);
};

// Continuous coordinate in a level's pixel grid. Pixel (i, j) is centered at (j, i).
struct PixelPoint {
  double x = 0;
  double y = 0;
};

struct LevelShape {
  int height = 0;
  int width = 0;
  int start = 0;  // first row of this level in the flattened token matrix

  int tokens() const { return height * width; }
};

// Maps a normalized point to the level's pixel grid: (x W - 0.5, y H - 0.5).
PixelPoint rescale_to_level(NormalizedPoint p, const LevelShape& level);
// Inverse of rescale_to_level: ((x + 0.5) / W, (y + 0.5) / H), without clamping.
NormalizedPoint level_to_normalized(PixelPoint q, const LevelShape& level);

// Bilinear read of a channels-last feature map [H*W, C] at a pixel coordinate.
// Out-of-bounds pixels read as zero. Differentiable in both the features and
// the coordinate (`coord` is a 2-vector Var holding (x, y)).
Var bilinear_sample(const Var& features, const LevelShape& level, const Var& coord);

struct FeatureLevel {
  int index = 1;  // 1-based level number
  LevelShape shape;
  Var features;  // [H*W, C], channels-last
};

struct MultiScalePyramid {
  std::vector<FeatureLevel> levels;
  std::vector<Tensor> positional;  // per level, [H*W, C]
  Var level_embedding;             // [L, C]

  int channels() const;
  std::vector<LevelShape> shapes() const;
  // All level features stacked row-wise: [sum H_l W_l, C].
  Var flat_features() const;
  // Positional encoding plus the level's embedding row, stacked like flat_features.
  Var flat_position_embedding() const;
  // Features of level `l` (0-based) with positional encoding and level embedding added.
  Var embedded_level(int l) const;
};

// DETR-style 2-D sine encoding on per-level normalized pixel centers:
// first C/2 channels encode y, the last C/2 encode x, alternating sin/cos.
Tensor sine_position_encoding(int height, int width, int channels, double temperature = 10000.0);

struct BackboneConfig {
  int image_channels = 3;
  int channels = 32;
  std::vector<int> strides{4, 8, 16};
};

// Tiny strided convolution stack producing one feature map per stride:
// a stride-s0 patchify conv, then (2r-1)x(2r-1) convs of stride r = s_l / s_{l-1}.
// Each level passes through ReLU and a 1x1 input projection.
class ToyBackbone {
 public:
  ToyBackbone() = default;
  ToyBackbone(ParameterStore& store, const std::string& name, const BackboneConfig& cfg, Rng& rng);

  const BackboneConfig& config() const { return cfg_; }
  // image: [Cin, H, W]. Returns per-level channels-last features.
  std::vector<FeatureLevel> operator()(const Var& image) const;

  struct Stage {
    Var weight;
    Var bias;
    int stride = 1;
    int pad = 0;
  };
  std::vector<Stage> stages;
  std::vector<Linear> input_proj;

 private:
  BackboneConfig cfg_;
};

// Runs the backbone and attaches positional encodings and level embeddings.
// `keep_levels` selects which backbone levels (0-based) form the pyramid; empty keeps all.
MultiScalePyramid build_pyramid(const Var& image, const ToyBackbone& backbone, const Var& level_embedding,
                                const std::vector<int>& keep_levels = {});

// Writes level-{l}-chan-{c}.pgm for every level and channel, min-max scaled.
void dump_pyramid(const MultiScalePyramid& pyramid, const std::filesystem::path& dir);

}  // namespace mstr
