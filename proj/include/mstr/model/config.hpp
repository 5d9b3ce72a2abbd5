#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace mstr {

enum class DecoderVariant { MergeOutput, MergeInput, DoubleStream, NaiveDeformable, StandardContext };

std::string to_string(DecoderVariant v);
DecoderVariant parse_variant(const std::string& name);

// Ablation switches: multi-scale features, deformable attention, dual-entity
// references, entity-conditioned context.
struct AblationToggles {
  bool multi_scale = true;
  bool deformable = true;
  bool dual_entity = true;
  bool entity_context = true;

  bool operator==(const AblationToggles&) const = default;
};

struct ModelConfig {
  int image_size = 64;
  int image_channels = 3;
  int channels = 32;              // C
  std::vector<int> strides{4, 8, 16};
  int heads = 2;                  // M
  int points = 2;                 // K
  int encoder_layers = 1;
  int decoder_layers = 2;         // D
  int queries = 8;                // N
  int ffn_dim = 64;
  int object_classes = 3;
  int actions = 3;
  int single_scale_level = -1;    // backbone level used without multi-scale; -1 = coarsest
  DecoderVariant variant = DecoderVariant::MergeOutput;
  AblationToggles toggles;

  int backbone_levels() const { return static_cast<int>(strides.size()); }
  // Number of pyramid levels the transformer sees.
  int levels() const { return toggles.multi_scale ? backbone_levels() : 1; }
  std::vector<int> kept_levels() const;
  bool has_context() const;

  // Throws ConfigError naming the violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Ablation presets: "qpic", "ss", "ss+de", "ss+de+ec", "ms", "ms+de",
// "ms+de+ec" (merge-input) and "mstr" (merge-output).
ModelConfig preset_config(const std::string& name);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace mstr
