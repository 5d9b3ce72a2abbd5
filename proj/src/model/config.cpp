#include "mstr/model/config.hpp"

#include <set>

#include "mstr/errors.hpp"

namespace mstr {

namespace {

const std::pair<DecoderVariant, const char*> kVariantNames[] = {
    {DecoderVariant::MergeOutput, "merge_output"},         {DecoderVariant::MergeInput, "merge_input"},
    {DecoderVariant::DoubleStream, "double_stream"},       {DecoderVariant::NaiveDeformable, "naive_deformable"},
    {DecoderVariant::StandardContext, "standard_context"},
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::string to_string(DecoderVariant v) {
  for (const auto& [variant, name] : kVariantNames)
    if (variant == v) return name;
  return "unknown";
}

DecoderVariant parse_variant(const std::string& name) {
  for (const auto& [variant, n] : kVariantNames)
    if (name == n) return variant;
  throw ConfigError("unknown decoder variant '" + name + "'");
}

std::vector<int> ModelConfig::kept_levels() const {
  if (toggles.multi_scale) {
    std::vector<int> all(strides.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  return {single_scale_level < 0 ? backbone_levels() - 1 : single_scale_level};
}

bool ModelConfig::has_context() const {
  return variant == DecoderVariant::StandardContext ||
         (toggles.entity_context &&
          (variant == DecoderVariant::MergeOutput || variant == DecoderVariant::MergeInput));
}

void ModelConfig::validate() const {
  const auto& t = toggles;
  require(!t.entity_context || t.dual_entity, "invalid toggles: EC requires DE");
  require(!t.dual_entity || t.deformable, "invalid toggles: DE requires DA");
  require(!t.multi_scale || t.deformable, "invalid toggles: MS requires DA (dense attention is single-scale only)");

  require(channels > 0 && heads > 0 && channels % heads == 0, "channels must be a positive multiple of heads");
  require(channels % 4 == 0, "channels must be divisible by 4 for the 2-D sine encoding");
  require(points >= 1, "points must be >= 1");
  require(queries >= 1, "queries must be >= 1");
  require(decoder_layers >= 1, "decoder_layers must be >= 1");
  require(encoder_layers >= 0, "encoder_layers must be >= 0");
  require(ffn_dim >= 1, "ffn_dim must be >= 1");
  require(object_classes >= 1 && actions >= 1, "object_classes and actions must be >= 1");
  require(image_channels >= 1, "image_channels must be >= 1");
  require(!strides.empty(), "at least one stride is required");
  for (std::size_t i = 0; i < strides.size(); ++i) {
    require(strides[i] >= 1, "strides must be positive");
    if (i > 0)
      require(strides[i] > strides[i - 1] && strides[i] % strides[i - 1] == 0,
              "strides must increase by integer factors");
  }
  require(image_size > 0 && image_size % strides.back() == 0,
          "image_size " + std::to_string(image_size) + " is not divisible by the largest stride " +
              std::to_string(strides.back()));
  require(single_scale_level >= -1 && single_scale_level < backbone_levels(), "single_scale_level out of range");

  switch (variant) {
    case DecoderVariant::NaiveDeformable:
      require(!t.dual_entity && !t.entity_context, "variant naive_deformable uses one reference: disable DE and EC");
      break;
    case DecoderVariant::MergeOutput:
    case DecoderVariant::MergeInput:
      require(t.dual_entity, "variant " + to_string(variant) + " requires DE");
      break;
    case DecoderVariant::DoubleStream:
      require(t.dual_entity && !t.entity_context, "variant double_stream requires DE without EC");
      break;
    case DecoderVariant::StandardContext:
      require(t.dual_entity && !t.entity_context,
              "variant standard_context replaces EC: enable DE and disable EC");
      break;
  }
  require(t.deformable || variant == DecoderVariant::NaiveDeformable,
          "dense attention (DA off) only supports variant naive_deformable");
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  auto set = [&](bool ms, bool da, bool de, bool ec, DecoderVariant v) {
    c.toggles = {ms, da, de, ec};
    c.variant = v;
  };
  if (name == "qpic") set(false, false, false, false, DecoderVariant::NaiveDeformable);
  else if (name == "ss") set(false, true, false, false, DecoderVariant::NaiveDeformable);
  else if (name == "ss+de") set(false, true, true, false, DecoderVariant::MergeInput);
  else if (name == "ss+de+ec") set(false, true, true, true, DecoderVariant::MergeInput);
  else if (name == "ms") set(true, true, false, false, DecoderVariant::NaiveDeformable);
  else if (name == "ms+de") set(true, true, true, false, DecoderVariant::MergeInput);
  else if (name == "ms+de+ec") set(true, true, true, true, DecoderVariant::MergeInput);
  else if (name == "mstr") set(true, true, true, true, DecoderVariant::MergeOutput);
  else throw ConfigError("unknown model preset '" + name + "'");
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"image_size", c.image_size},
      {"image_channels", c.image_channels},
      {"channels", c.channels},
      {"strides", c.strides},
      {"heads", c.heads},
      {"points", c.points},
      {"encoder_layers", c.encoder_layers},
      {"decoder_layers", c.decoder_layers},
      {"queries", c.queries},
      {"ffn_dim", c.ffn_dim},
      {"object_classes", c.object_classes},
      {"actions", c.actions},
      {"single_scale_level", c.single_scale_level},
      {"variant", to_string(c.variant)},
      {"multi_scale", c.toggles.multi_scale},
      {"deformable", c.toggles.deformable},
      {"dual_entity", c.toggles.dual_entity},
      {"entity_context", c.toggles.entity_context},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known = {
      "preset",         "image_size",  "image_channels", "channels",       "strides",
      "heads",          "points",      "encoder_layers", "decoder_layers", "queries",
      "ffn_dim",        "object_classes", "actions",     "single_scale_level", "variant",
      "multi_scale",    "deformable",  "dual_entity",    "entity_context"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown model config key '" + key + "'");
  try {
    ModelConfig d = j.contains("preset") ? preset_config(j.at("preset").get<std::string>()) : ModelConfig{};
    c.image_size = j.value("image_size", d.image_size);
    c.image_channels = j.value("image_channels", d.image_channels);
    c.channels = j.value("channels", d.channels);
    c.strides = j.value("strides", d.strides);
    c.heads = j.value("heads", d.heads);
    c.points = j.value("points", d.points);
    c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
    c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
    c.queries = j.value("queries", d.queries);
    c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
    c.object_classes = j.value("object_classes", d.object_classes);
    c.actions = j.value("actions", d.actions);
    c.single_scale_level = j.value("single_scale_level", d.single_scale_level);
    c.variant = j.contains("variant") ? parse_variant(j.at("variant").get<std::string>()) : d.variant;
    c.toggles.multi_scale = j.value("multi_scale", d.toggles.multi_scale);
    c.toggles.deformable = j.value("deformable", d.toggles.deformable);
    c.toggles.dual_entity = j.value("dual_entity", d.toggles.dual_entity);
    c.toggles.entity_context = j.value("entity_context", d.toggles.entity_context);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace mstr
