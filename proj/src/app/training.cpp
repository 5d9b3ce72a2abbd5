#include "mstr/app/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mstr/errors.hpp"
#include "mstr/eval/detections.hpp"
#include "mstr/numerics/adamw.hpp"
#include "mstr/numerics/checkpoint.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

SceneLoss scene_loss(const Model& model, const Scene& scene, const LossWeights& w) {
  const ModelOutput out = model.forward(scene.image);
  std::vector<Var> loc, cls, act;
  for (const auto& layer : out.layers) {
    const MatchedLoss m = set_loss(scene.triplets, layer, w);
    loc.push_back(m.terms.loc);
    cls.push_back(m.terms.cls);
    act.push_back(m.terms.act);
  }
  SceneLoss s;
  s.terms.loc = ops::sum_of(loc);
  s.terms.cls = ops::sum_of(cls);
  s.terms.act = ops::sum_of(act);
  s.terms.total = ops::sum_of({s.terms.loc, s.terms.cls, s.terms.act});
  return s;
}

std::vector<DetectionRecord> predict_dataset(const Model& model, const std::vector<Scene>& scenes) {
  std::vector<DetectionRecord> out;
  for (const auto& s : scenes) {
    auto dets = detections_from_predictions(s.id, model.forward(s.image).final());
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

double dataset_map(const Model& model, const std::vector<Scene>& scenes) {
  return evaluate_map(predict_dataset(model, scenes), ground_truth_of(scenes)).map;
}

TrainResult train_model(Model& model, const std::vector<Scene>& scenes, const TrainConfig& cfg, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& checkpoint_dir) {
  cfg.validate();
  if (scenes.empty()) throw ConfigError("training needs at least one scene");
  ParameterStore& store = model.parameters();
  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW opt(store, ocfg);

  // Epoch-wise shuffled batches, independent of the model's init stream.
  Rng order_rng(seed ^ 0x5DEECE66Dull);
  std::vector<int> order(scenes.size());
  std::size_t cursor = order.size();
  auto next_batch = [&] {
    std::vector<int> batch;
    const std::size_t b = std::min<std::size_t>(cfg.batch_size, order.size());
    while (batch.size() < b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[order_rng.integer(0, static_cast<int>(i) - 1)]);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    return batch;
  };

  TrainResult result;
  double window_loss = 0.0;
  int window = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    store.zero_grad();
    const std::vector<int> batch = next_batch();
    const double inv = 1.0 / static_cast<double>(batch.size());
    LossRecord rec;
    rec.step = step;
    for (int idx : batch) {
      const SceneLoss l = scene_loss(model, scenes[idx]);
      rec.loc += inv * l.terms.loc.value().item();
      rec.cls += inv * l.terms.cls.value().item();
      rec.act += inv * l.terms.act.value().item();
      l.terms.total.backward(Tensor::scalar(inv));
    }
    rec.total = rec.loc + rec.cls + rec.act;
    if (!std::isfinite(rec.total)) {
      if (checkpoint_dir) {
        nlohmann::json dump{{"step", step}, {"batch", batch}, {"loc", rec.loc}, {"cls", rec.cls}, {"act", rec.act}};
        std::ofstream(*checkpoint_dir / "nan-dump.json") << dump.dump(2) << '\n';
      }
      throw NumericError("non-finite loss at step " + std::to_string(step));
    }
    clip_grad_norm(store, cfg.grad_clip);
    opt.step(store);
    result.losses.push_back(rec);
    result.steps = step;
    window_loss += rec.total;
    ++window;

    if (checkpoint_dir && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
      save_checkpoint(*checkpoint_dir / ("checkpoint-" + std::to_string(step) + ".bin"), store);

    const bool eval_now = cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps);
    if (eval_now) {
      ConvergencePoint p{step, window_loss / window, dataset_map(model, scenes)};
      window_loss = 0.0;
      window = 0;
      result.convergence.push_back(p);
      result.final_map = p.map;
      if (cfg.target_map > 0 && p.map >= cfg.target_map) {
        result.target_step = step;
        break;
      }
    }
  }
  if (cfg.eval_every == 0 || result.steps == 0) result.final_map = dataset_map(model, scenes);
  return result;
}

}  // namespace mstr
