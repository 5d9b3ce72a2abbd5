#include "mstr/app/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mstr/data/manifest.hpp"
#include "mstr/errors.hpp"
#include "mstr/eval/detections.hpp"
#include "mstr/image_io.hpp"
#include "mstr/numerics/checkpoint.hpp"

namespace mstr {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw fs::filesystem_error("cannot write", path, std::make_error_code(std::errc::io_error));
  return out;
}

void check_scenes_fit(const std::vector<Scene>& scenes, const ModelConfig& m) {
  for (const auto& s : scenes) {
    if (s.config.image_size != m.image_size || s.config.object_classes != m.object_classes ||
        s.config.actions != m.actions)
      throw ConfigError("scene " + std::to_string(s.id) + " does not fit the model (image size, classes or actions)");
    if (static_cast<int>(s.triplets.size()) > m.queries)
      throw ConfigError("scene " + std::to_string(s.id) + " has more pairs than the model has queries");
  }
}

ModelConfig with_preset(ModelConfig base, const std::string& preset) {
  const ModelConfig p = preset_config(preset);
  base.toggles = p.toggles;
  base.variant = p.variant;
  base.validate();
  return base;
}

// Overlay canvas: the input image upscaled by kScale.
constexpr int kScale = 4;

struct Rgb {
  std::uint8_t r, g, b;
};
constexpr Rgb kHumanColor{255, 64, 64};
constexpr Rgb kObjectColor{64, 128, 255};
constexpr Rgb kContextColor{64, 230, 64};
constexpr Rgb kSingleColor{255, 160, 0};
constexpr Rgb kReferenceColor{255, 255, 255};
constexpr Rgb kMidpointColor{255, 255, 0};

// Normalized image coordinate to continuous canvas pixel coordinate.
std::array<double, 2> to_canvas(NormalizedPoint p, int size) { return {p.x * size - 0.5, p.y * size - 0.5}; }

void put(Raster& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::uint8_t* px = img.at(x, y);
  px[0] = c.r;
  px[1] = c.g;
  px[2] = c.b;
}

void dot(Raster& img, std::array<double, 2> p, Rgb c) {
  const int x = static_cast<int>(std::lround(p[0])), y = static_cast<int>(std::lround(p[1]));
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) put(img, x + dx, y + dy, c);
}

void cross(Raster& img, std::array<double, 2> p, Rgb c) {
  const int x = static_cast<int>(std::lround(p[0])), y = static_cast<int>(std::lround(p[1]));
  for (int d = -4; d <= 4; ++d) {
    put(img, x + d, y, c);
    put(img, x, y + d, c);
  }
}

Raster background(const Scene& scene) {
  const int n = scene.config.image_size;
  Raster img(n * kScale, n * kScale, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y / kScale) * n + x / kScale;
      const double v = (scene.image[i] + scene.image[n * n + i] + scene.image[2 * n * n + i]) / 3.0;
      const std::uint8_t b = to_byte(0.5 * v);
      std::uint8_t* px = img.at(x, y);
      px[0] = px[1] = px[2] = b;
    }
  return img;
}

}  // namespace

fs::path CommandContext::manifest_path() const { return manifest ? *manifest : out / "manifest.jsonl"; }
fs::path CommandContext::checkpoint_path() const { return checkpoint ? *checkpoint : out / "checkpoint.bin"; }

void ensure_directory(const fs::path& dir) {
  fs::create_directories(dir);
  if (!fs::is_directory(dir))
    throw fs::filesystem_error("not a directory", dir, std::make_error_code(std::errc::not_a_directory));
}

BandCounts band_counts(const std::vector<Scene>& scenes) {
  BandCounts counts;
  for (const auto& s : scenes)
    for (const auto& t : s.triplets) {
      ++counts.area_ratio[band_of(area_ratio(t.human, t.object), kAreaRatioThresholds)];
      ++counts.distance[band_of(d_interaction(t.human, t.object), s.config.distance_thresholds)];
    }
  return counts;
}

GenerateResult cmd_generate(const CommandContext& ctx, bool pixmaps) {
  ensure_directory(ctx.out);
  GenerateResult r;
  r.scenes = generate_dataset(ctx.config.scenes, ctx.seed, ctx.config.data);
  write_manifest(ctx.manifest_path(), r.scenes);
  if (pixmaps) {
    ensure_directory(ctx.out / "scenes");
    for (const auto& s : r.scenes)
      write_scene_ppm(ctx.out / "scenes" / ("scene-" + std::to_string(s.id) + ".ppm"), s);
  }
  r.counts = band_counts(r.scenes);
  auto csv = open_output(ctx.out / "bin_counts.csv");
  csv << "axis,bin,count\n";
  for (int b = 0; b < 3; ++b) csv << "area_ratio," << bin_name(BinAxis::AreaRatio, b) << ',' << r.counts.area_ratio[b] << '\n';
  for (int b = 0; b < 3; ++b) csv << "distance," << bin_name(BinAxis::Distance, b) << ',' << r.counts.distance[b] << '\n';
  return r;
}

TrainResult cmd_train(const CommandContext& ctx) {
  ensure_directory(ctx.out);
  const std::vector<Scene> scenes = load_dataset(ctx.manifest_path());
  check_scenes_fit(scenes, ctx.config.model);
  Model model(ctx.config.model, ctx.seed);
  const TrainResult r = train_model(model, scenes, ctx.config.train, ctx.seed, ctx.out);
  save_checkpoint(ctx.checkpoint_path(), model.parameters());

  auto loss = open_output(ctx.out / "loss.csv");
  loss << "step,loc,cls,act,total\n";
  for (const auto& l : r.losses)
    loss << l.step << ',' << fmt(l.loc) << ',' << fmt(l.cls) << ',' << fmt(l.act) << ',' << fmt(l.total) << '\n';
  auto conv = open_output(ctx.out / "convergence.csv");
  conv << "step,loss,map\n";
  for (const auto& p : r.convergence) conv << p.step << ',' << fmt(p.loss) << ',' << fmt(p.map) << '\n';
  return r;
}

Model load_model(const CommandContext& ctx) {
  Model model(ctx.config.model, ctx.seed);
  apply_checkpoint(model.parameters(), read_checkpoint(ctx.checkpoint_path()));
  return model;
}

APResult cmd_eval(const CommandContext& ctx) {
  ensure_directory(ctx.out);
  const std::vector<Scene> scenes = load_dataset(ctx.manifest_path());
  check_scenes_fit(scenes, ctx.config.model);
  const Model model = load_model(ctx);
  const std::vector<DetectionRecord> dets = predict_dataset(model, scenes);
  const std::vector<GroundTruth> gts = ground_truth_of(scenes);
  write_detections(ctx.out / "detections.jsonl", dets);
  const APResult ap = evaluate_map(dets, gts);
  write_ap_csv(ctx.out / "ap.csv", ap);
  std::vector<HOITriplet> triplets;
  for (const auto& g : gts) triplets.push_back(g.triplet);
  write_binned_csv(ctx.out / "binned_ap.csv", binned_ap(dets, gts, assign_bins(triplets, ctx.config.bins)));
  return ap;
}

GradcheckReport cmd_gradcheck(const CommandContext& ctx) {
  ensure_directory(ctx.out);
  GradcheckReport report;
  report.rows = run_gradcheck_suite(ctx.config, ctx.seed);
  report.passed = true;
  auto csv = open_output(ctx.out / "gradcheck.csv");
  csv << "module,op,max_rel_error,checked,kinks,passed\n";
  for (const auto& r : report.rows) {
    report.passed = report.passed && r.passed;
    csv << r.module << ',' << r.op << ',' << fmt(r.max_rel_error) << ',' << r.checked << ',' << r.kinks << ','
        << (r.passed ? "pass" : "FAIL") << '\n';
  }
  return report;
}

std::vector<fs::path> cmd_visualize(const CommandContext& ctx, int scene_id) {
  const std::vector<ManifestRecord> records = read_manifest(ctx.manifest_path());
  if (scene_id < 0 || scene_id >= static_cast<int>(records.size()))
    throw ArgumentError("scene " + std::to_string(scene_id) + " out of range [0, " +
                        std::to_string(records.size()) + ")");
  const Scene scene = regenerate(records[scene_id]);
  check_scenes_fit({scene}, ctx.config.model);
  ensure_directory(ctx.out);
  const Model model = load_model(ctx);
  const ModelOutput out = model.forward(scene.image);

  const auto dets = detections_from_predictions(scene.id, out.final());
  int query = 0;
  for (const auto& d : dets)
    if (d.score > dets[query].score) query = d.index;
  const LayerTrace& trace = out.traces.back();
  const AttentionConfig acfg = model.attention_config();

  struct Stream {
    std::string name;
    const MSDeformAttention::Output* attn;
    Var refs;
    Rgb color;
  };
  std::vector<Stream> streams;
  const bool naive = ctx.config.model.variant == DecoderVariant::NaiveDeformable;
  if (naive) {
    streams.push_back({"single", &trace.single, out.human_refs, kSingleColor});
  } else {
    streams.push_back({"human", &trace.human, out.human_refs, kHumanColor});
    streams.push_back({"object", &trace.object, out.object_refs, kObjectColor});
    if (ctx.config.model.has_context()) streams.push_back({"context", &trace.context, trace.context_refs, kContextColor});
  }

  const int size = scene.config.image_size * kScale;
  auto ref_of = [&](const Var& refs) {
    return NormalizedPoint{refs.value().at(query, 0), refs.value().at(query, 1)};
  };
  const auto human = to_canvas(ref_of(out.human_refs), size);
  const auto object = to_canvas(ref_of(out.object_refs), size);
  const std::array<double, 2> mid{(human[0] + object[0]) / 2, (human[1] + object[1]) / 2};

  nlohmann::json doc{{"scene", scene.id},
                     {"query", query},
                     {"score", dets[query].score},
                     {"canvas_size", size},
                     {"markers", {{"human", human}, {"object", object}, {"midpoint", mid}}},
                     {"streams", nlohmann::json::array()}};
  std::vector<AttentionRecord> recs;
  for (const auto& s : streams) {
    if (!s.attn->locations.defined()) continue;  // dense attention has no sampling points
    recs.push_back(make_record(s.name, *s.attn, s.refs, query, acfg, out.shapes));
    nlohmann::json j = to_json(recs.back());
    j["reference_canvas"] = to_canvas(recs.back().reference, size);
    doc["streams"].push_back(j);
  }

  std::vector<fs::path> paths;
  const int levels = static_cast<int>(out.shapes.size());
  for (int l = 0; l < levels; ++l) {
    Raster img = background(scene);
    for (std::size_t si = 0, ri = 0; si < streams.size(); ++si) {
      if (!streams[si].attn->locations.defined()) continue;
      const AttentionRecord& r = recs[ri++];
      for (int m = 0; m < r.heads; ++m)
        for (int k = 0; k < r.points; ++k)
          dot(img, to_canvas(r.locations[(m * r.levels + l) * r.points + k], size), streams[si].color);
    }
    cross(img, human, kReferenceColor);
    cross(img, object, kReferenceColor);
    if (!naive) cross(img, mid, kMidpointColor);
    paths.push_back(ctx.out / ("scene-" + std::to_string(scene.id) + "-level-" + std::to_string(l) + ".ppm"));
    write_ppm(paths.back(), img);
  }
  open_output(ctx.out / ("scene-" + std::to_string(scene.id) + "-attention.json")) << doc.dump(2) << '\n';
  return paths;
}

std::vector<AblationRow> cmd_ablate(const CommandContext& ctx, const std::vector<std::string>& presets, int seeds) {
  if (seeds < 1) throw ArgumentError("ablate needs at least one seed");
  ensure_directory(ctx.out);
  const int n = ctx.config.scenes;
  std::vector<AblationRow> rows;
  for (int i = 0; i < seeds; ++i) {
    const std::uint64_t seed = ctx.seed + static_cast<std::uint64_t>(i);
    std::vector<Scene> all = generate_dataset(2 * n, seed, ctx.config.data);
    const std::vector<Scene> train(all.begin(), all.begin() + n);
    const std::vector<Scene> heldout(all.begin() + n, all.end());
    for (const auto& preset : presets) {
      Model model(with_preset(ctx.config.model, preset), seed);
      const TrainResult r = train_model(model, train, ctx.config.train, seed);
      rows.push_back({preset, seed, r.steps, r.target_step, r.final_map, dataset_map(model, heldout)});
    }
  }
  auto csv = open_output(ctx.out / "ablation.csv");
  csv << "preset,seed,steps,target_step,train_map,heldout_map\n";
  for (const auto& r : rows)
    csv << r.preset << ',' << r.seed << ',' << r.steps << ',' << r.target_step << ',' << fmt(r.train_map) << ','
        << fmt(r.heldout_map) << '\n';
  return rows;
}

}  // namespace mstr
