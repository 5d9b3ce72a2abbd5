#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mstr/app/commands.hpp"
#include "mstr/errors.hpp"

namespace {

using namespace mstr;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

struct Overrides {
  std::optional<std::string> model_preset, variant;
  std::optional<bool> ms, da, de, ec;
  std::optional<int> steps, batch_size, scenes;
  std::optional<double> lr, weight_decay;
  std::optional<std::string> data_preset;
};

void apply(const Overrides& o, RunConfig& c) {
  if (o.model_preset) {
    const ModelConfig p = preset_config(*o.model_preset);
    c.model.toggles = p.toggles;
    c.model.variant = p.variant;
  }
  if (o.variant) c.model.variant = parse_variant(*o.variant);
  if (o.ms) c.model.toggles.multi_scale = *o.ms;
  if (o.da) c.model.toggles.deformable = *o.da;
  if (o.de) c.model.toggles.dual_entity = *o.de;
  if (o.ec) c.model.toggles.entity_context = *o.ec;
  if (o.steps) c.train.steps = *o.steps;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.lr) c.train.lr = *o.lr;
  if (o.weight_decay) c.train.weight_decay = *o.weight_decay;
  if (o.scenes) c.scenes = *o.scenes;
  if (o.data_preset) c.data.preset = *o.data_preset;
  c.validate();
}

void add_model_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--model-preset", o.model_preset, "qpic, ss, ss+de, ss+de+ec, ms, ms+de, ms+de+ec or mstr");
  cmd->add_option("--variant", o.variant,
                  "merge_output, merge_input, double_stream, naive_deformable or standard_context");
  cmd->add_option("--ms", o.ms, "multi-scale features");
  cmd->add_option("--da", o.da, "deformable attention");
  cmd->add_option("--de", o.de, "dual-entity attention");
  cmd->add_option("--ec", o.ec, "entity-conditioned context attention");
}

void add_train_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--steps", o.steps, "optimizer steps");
  cmd->add_option("--batch-size", o.batch_size, "scenes per step");
  cmd->add_option("--lr", o.lr, "AdamW learning rate");
  cmd->add_option("--weight-decay", o.weight_decay, "AdamW weight decay");
}

void print_rows(const std::vector<GradcheckRow>& rows) {
  for (const auto& r : rows)
    std::printf("%-22s %-34s max_rel_err=%.3e checked=%zu kinks=%zu %s (%.2fs)\n", r.module.c_str(), r.op.c_str(),
                r.max_rel_error, r.checked, r.kinks, r.passed ? "PASS" : "FAIL", r.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale HOI transformer toolkit"};
  app.require_subcommand(1);

  std::optional<std::filesystem::path> config_path;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> manifest, checkpoint;
  Overrides o;
  bool pixmaps = false;
  int scene = 0;
  std::vector<std::string> presets{"ms", "ms+de+ec"};
  int seeds = 5;

  app.add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed");
  app.add_option("--out", out, "output directory");

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset manifest");
  gen->add_flag("--pixmaps", pixmaps, "also write scene images");
  gen->add_option("--scenes", o.scenes, "number of scenes");
  gen->add_option("--preset", o.data_preset, "scene preset");

  auto* train = app.add_subcommand("train", "train a model on a manifest");
  train->add_option("--manifest", manifest, "dataset manifest (default <out>/manifest.jsonl)");
  add_model_flags(train, o);
  add_train_flags(train, o);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval->add_option("--manifest", manifest, "dataset manifest (default <out>/manifest.jsonl)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/checkpoint.bin)");
  add_model_flags(eval, o);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  add_model_flags(grad, o);

  auto* vis = app.add_subcommand("visualize", "draw the sampling points of the top-scoring query");
  vis->add_option("--manifest", manifest, "dataset manifest (default <out>/manifest.jsonl)");
  vis->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/checkpoint.bin)");
  vis->add_option("--scene", scene, "scene id");
  add_model_flags(vis, o);

  auto* abl = app.add_subcommand("ablate", "train presets over seeds and report held-out mAP");
  abl->add_option("--presets", presets, "model presets")->delimiter(',');
  abl->add_option("--seeds", seeds, "number of consecutive seeds starting at --seed");
  abl->add_option("--scenes", o.scenes, "training scenes (the same number is held out)");
  abl->add_option("--preset", o.data_preset, "scene preset");
  add_train_flags(abl, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    CommandContext ctx;
    ctx.config = config_path ? load_run_config(*config_path) : RunConfig{};
    apply(o, ctx.config);
    ctx.seed = seed;
    ctx.out = out;
    ctx.manifest = manifest;
    ctx.checkpoint = checkpoint;

    if (*gen) {
      const GenerateResult r = cmd_generate(ctx, pixmaps);
      std::printf("wrote %zu scenes to %s\n", r.scenes.size(), ctx.manifest_path().c_str());
      std::printf("area_ratio:");
      for (int b = 0; b < 3; ++b) std::printf(" %s=%d", bin_name(BinAxis::AreaRatio, b).c_str(), r.counts.area_ratio[b]);
      std::printf("\ndistance:");
      for (int b = 0; b < 3; ++b) std::printf(" %s=%d", bin_name(BinAxis::Distance, b).c_str(), r.counts.distance[b]);
      std::printf("\n");
    } else if (*train) {
      const TrainResult r = cmd_train(ctx);
      std::printf("trained %d steps, train mAP %.4f\n", r.steps, r.final_map);
    } else if (*eval) {
      const APResult r = cmd_eval(ctx);
      std::printf("mAP %.4f over %zu classes\n", r.map, r.per_class.size());
    } else if (*grad) {
      const GradcheckReport r = cmd_gradcheck(ctx);
      print_rows(r.rows);
      std::printf("gradcheck %s\n", r.passed ? "passed" : "FAILED");
      return r.passed ? kExitOk : kExitNumeric;
    } else if (*vis) {
      for (const auto& p : cmd_visualize(ctx, scene)) std::printf("wrote %s\n", p.c_str());
    } else if (*abl) {
      for (const auto& r : cmd_ablate(ctx, presets, seeds))
        std::printf("%-10s seed %llu  steps %d  train mAP %.4f  held-out mAP %.4f\n", r.preset.c_str(),
                    static_cast<unsigned long long>(r.seed), r.steps, r.train_map, r.heldout_map);
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitValidation;
  } catch (const GenerationError& e) {
    std::fprintf(stderr, "generation error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {  // ArgumentError, DimensionError
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {  // unreadable or unwritable files
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
