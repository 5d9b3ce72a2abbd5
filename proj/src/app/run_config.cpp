#include "mstr/app/run_config.hpp"

#include <fstream>
#include <set>

#include "mstr/errors.hpp"

namespace mstr {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown " + where + " key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0)) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("train intervals must be >= 0");
  if (target_map < 0 || target_map > 1) throw ConfigError("train.target_map must lie in [0, 1]");
}

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
  bins.validate();
  if (scenes < 1) throw ConfigError("scenes must be >= 1");
  if (data.image_size != model.image_size)
    throw ConfigError("data.image_size (" + std::to_string(data.image_size) + ") differs from model.image_size (" +
                      std::to_string(model.image_size) + ")");
  if (data.object_classes != model.object_classes || data.actions != model.actions)
    throw ConfigError("data and model disagree on object_classes / actions");
  if (data.pairs > model.queries) throw ConfigError("more interacting pairs per scene than queries");
}

RunConfig parse_run_config(const nlohmann::json& j) {
  check_keys(j, {"model", "data", "scenes", "train", "bins", "gradcheck", "visualize_scene"}, "config");
  RunConfig c;
  try {
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("data")) c.data = j.at("data").get<SceneConfig>();
    c.scenes = j.value("scenes", c.scenes);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t,
                 {"steps", "batch_size", "lr", "weight_decay", "grad_clip", "eval_every", "checkpoint_every",
                  "target_map"},
                 "train");
      c.train.steps = t.value("steps", c.train.steps);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.lr = t.value("lr", c.train.lr);
      c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
      c.train.grad_clip = t.value("grad_clip", c.train.grad_clip);
      c.train.eval_every = t.value("eval_every", c.train.eval_every);
      c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
      c.train.target_map = t.value("target_map", c.train.target_map);
    }
    if (j.contains("bins")) c.bins = j.at("bins").get<BinConfig>();
    if (j.contains("gradcheck")) {
      const auto& g = j.at("gradcheck");
      check_keys(g, {"tolerance", "step", "model_image_size", "max_entries_per_tensor"}, "gradcheck");
      c.gradcheck.tolerance = g.value("tolerance", c.gradcheck.tolerance);
      c.gradcheck.step = g.value("step", c.gradcheck.step);
      c.gradcheck.model_image_size = g.value("model_image_size", c.gradcheck.model_image_size);
      c.gradcheck.max_entries_per_tensor = g.value("max_entries_per_tensor", c.gradcheck.max_entries_per_tensor);
    }
    c.visualize_scene = j.value("visualize_scene", c.visualize_scene);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json to_json(const RunConfig& c) {
  return nlohmann::json{{"model", c.model},
                        {"data", c.data},
                        {"scenes", c.scenes},
                        {"train",
                         {{"steps", c.train.steps},
                          {"batch_size", c.train.batch_size},
                          {"lr", c.train.lr},
                          {"weight_decay", c.train.weight_decay},
                          {"grad_clip", c.train.grad_clip},
                          {"eval_every", c.train.eval_every},
                          {"checkpoint_every", c.train.checkpoint_every},
                          {"target_map", c.train.target_map}}},
                        {"bins", c.bins},
                        {"gradcheck",
                         {{"tolerance", c.gradcheck.tolerance},
                          {"step", c.gradcheck.step},
                          {"model_image_size", c.gradcheck.model_image_size},
                          {"max_entries_per_tensor", c.gradcheck.max_entries_per_tensor}}},
                        {"visualize_scene", c.visualize_scene}};
}

}  // namespace mstr
