#include "mstr/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "mstr/errors.hpp"
#include "mstr/image_io.hpp"
#include "mstr/numerics/random.hpp"

namespace mstr {

namespace {

// Sampling ranges of area(h) / area(o) per band, inside the band limits.
constexpr double kRatioRange[3][2] = {{0.15, 0.45}, {0.6, 3.5}, {4.6, 14.0}};
constexpr int kMaxAttempts = 5000;

int preset_ratio_band(const std::string& p) {
  if (p == "h<o") return 0;
  if (p == "h=o") return 1;
  if (p == "h>o") return 2;
  return -1;
}

int preset_distance_band(const std::string& p) {
  if (p == "adjacent") return 0;
  if (p == "moderate") return 1;
  if (p == "distant") return 2;
  return -1;
}

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

bool inside_unit(const Box& b) { return b.x1() >= 0 && b.y1() >= 0 && b.x2() <= 1 && b.y2() <= 1; }

HOITriplet sample_pair(Rng& rng, const SceneConfig& cfg, int ratio_band, int distance_band) {
  const double min_side = static_cast<double>(cfg.min_side_px) / cfg.image_size;
  const double* ratio = kRatioRange[ratio_band];
  const auto& t = cfg.distance_thresholds;
  const double d_lo = distance_band == 0 ? 0.0 : t[distance_band - 1];
  const double d_hi = distance_band == 2 ? std::numeric_limits<double>::infinity() : t[distance_band];

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Box h;
    h.w = rng.uniform(0.12, 0.42);
    h.h = rng.uniform(0.2, 0.6);
    const double r = log_uniform(rng, ratio[0], ratio[1]);
    const double object_area = h.area() / r;
    const double aspect = log_uniform(rng, 0.6, 1.6);
    Box o;
    o.w = std::sqrt(object_area * aspect);
    o.h = std::sqrt(object_area / aspect);
    if (std::min({h.w, h.h, o.w, o.h}) < min_side || std::max(o.w, o.h) > 0.95) continue;

    const double p = h.area() * o.area();
    const double dc_lo = d_lo * p;
    const double dc_hi = std::min(d_hi * p, 1.0);
    if (!(dc_lo < dc_hi)) continue;
    h.cx = rng.uniform(0.5 * h.w, 1.0 - 0.5 * h.w);
    h.cy = rng.uniform(0.5 * h.h, 1.0 - 0.5 * h.h);
    const double dc = rng.uniform(dc_lo, dc_hi);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.cx = h.cx + dc * std::cos(theta);
    o.cy = h.cy + dc * std::sin(theta);
    if (!inside_unit(o)) continue;
    if (band_of(area_ratio(h, o), kAreaRatioThresholds) != ratio_band) continue;
    const int band = band_of(d_interaction(h, o), t);
    if (band != distance_band) continue;

    HOITriplet trip;
    trip.human = h;
    trip.object = o;
    trip.object_class = rng.integer(0, cfg.object_classes - 1);
    trip.actions.assign(cfg.actions, 0);
    trip.actions[band % cfg.actions] = 1;
    return trip;
  }
  throw GenerationError("no layout found for ratio band " + bin_name(BinAxis::AreaRatio, ratio_band) +
                        " and distance band " + bin_name(BinAxis::Distance, distance_band));
}

void render(Scene& s, Rng& rng) {
  const int n = s.config.image_size;
  Tensor img({3, n, n});
  for (auto& v : img.values()) v = rng.uniform(-s.config.noise, s.config.noise);
  auto px = [&](int c, int i, int j) -> double& { return img[(static_cast<std::size_t>(c) * n + i) * n + j]; };
  auto for_box = [&](const Box& b, auto&& inside, auto&& paint) {
    const int i0 = std::max(0, static_cast<int>(std::floor(b.y1() * n)));
    const int i1 = std::min(n - 1, static_cast<int>(std::ceil(b.y2() * n)));
    const int j0 = std::max(0, static_cast<int>(std::floor(b.x1() * n)));
    const int j1 = std::min(n - 1, static_cast<int>(std::ceil(b.x2() * n)));
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        const double x = (j + 0.5) / n, y = (i + 0.5) / n;
        if (x >= b.x1() && x <= b.x2() && y >= b.y1() && y <= b.y2() && inside(x, y)) paint(i, j);
      }
  };
  for (const auto& t : s.triplets) {
    const Box& h = t.human;
    // Head: ellipse over the top 30%; body: full-width block below it.
    for_box(
        h,
        [&](double x, double y) {
          const double hy = h.y1() + 0.15 * h.h;
          const double dx = (x - h.cx) / (0.3 * h.w), dy = (y - hy) / (0.15 * h.h);
          return y >= h.y1() + 0.3 * h.h || dx * dx + dy * dy <= 1.0;
        },
        [&](int i, int j) { px(0, i, j) += 1.0; });

    const Box& o = t.object;
    const int shape = t.object_class % 3;
    const double intensity = static_cast<double>(t.object_class + 1) / s.config.object_classes;
    for_box(
        o,
        [&](double x, double y) {
          if (shape == 0) return true;
          if (shape == 1) {
            const double dx = (x - o.cx) / (0.5 * o.w), dy = (y - o.cy) / (0.5 * o.h);
            return dx * dx + dy * dy <= 1.0;
          }
          return std::abs(x - o.cx) <= 0.5 * o.w * (y - o.y1()) / o.h;
        },
        [&](int i, int j) {
          px(1, i, j) += 1.0;
          px(2, i, j) += intensity;
        });
  }
  s.image = std::move(img);
}

}  // namespace

void SceneConfig::validate() const {
  static const std::set<std::string> presets = {"mixed", "random",   "h<o",     "h=o",
                                                "h>o",   "adjacent", "moderate", "distant"};
  if (!presets.count(preset)) throw ConfigError("unknown scene preset '" + preset + "'");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (object_classes < 1 || actions < 1) throw ConfigError("object_classes and actions must be >= 1");
  if (pairs < 1) throw ConfigError("pairs must be >= 1");
  if (noise < 0) throw ConfigError("noise must be >= 0");
  if (min_side_px < 2) throw ConfigError("min_side_px must be >= 2");
  if (!(distance_thresholds[0] > 0 && distance_thresholds[0] < distance_thresholds[1]))
    throw ConfigError("distance thresholds must be positive and strictly increasing");
  if (ratio_band < -1 || ratio_band > 2 || distance_band < -1 || distance_band > 2)
    throw ConfigError("band out of range");
}

SceneConfig SceneConfig::for_index(int index) const {
  SceneConfig c = *this;
  if (preset == "mixed") {
    c.distance_band = index % 3;
    c.ratio_band = (index / 3) % 3;
  } else {
    if (const int r = preset_ratio_band(preset); r >= 0) c.ratio_band = r;
    if (const int d = preset_distance_band(preset); d >= 0) c.distance_band = d;
  }
  return c;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  Scene s;
  s.seed = seed;
  s.config = cfg;
  for (int p = 0; p < cfg.pairs; ++p) {
    const int rb = cfg.ratio_band >= 0 ? cfg.ratio_band : rng.integer(0, 2);
    const int db = cfg.distance_band >= 0 ? cfg.distance_band : rng.integer(0, 2);
    s.triplets.push_back(sample_pair(rng, cfg, rb, db));
  }
  render(s, rng);
  return s;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, int index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = dataset_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<Scene> generate_dataset(int count, std::uint64_t seed, const SceneConfig& cfg) {
  if (count < 0) throw ConfigError("scene count must be >= 0");
  std::vector<Scene> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Scene s = generate_scene(scene_seed(seed, i), cfg.for_index(i));
    s.id = i;
    out.push_back(std::move(s));
  }
  return out;
}

void write_scene_ppm(const std::filesystem::path& path, const Scene& scene) {
  const int n = scene.config.image_size;
  Raster r(n, n, 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        r.at(j, i)[c] = to_byte(scene.image[(static_cast<std::size_t>(c) * n + i) * n + j]);
  write_ppm(path, r);
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},
                     {"object_classes", c.object_classes},
                     {"actions", c.actions},
                     {"noise", c.noise},
                     {"pairs", c.pairs},
                     {"min_side_px", c.min_side_px},
                     {"preset", c.preset},
                     {"distance_thresholds", c.distance_thresholds},
                     {"ratio_band", c.ratio_band},
                     {"distance_band", c.distance_band}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  if (!j.is_object()) throw ConfigError("scene config must be a JSON object");
  static const std::set<std::string> known = {"image_size", "object_classes", "actions", "noise",
                                              "pairs",      "min_side_px",    "preset",  "distance_thresholds",
                                              "ratio_band", "distance_band"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown scene config key '" + key + "'");
  try {
    const SceneConfig d;
    c.image_size = j.value("image_size", d.image_size);
    c.object_classes = j.value("object_classes", d.object_classes);
    c.actions = j.value("actions", d.actions);
    c.noise = j.value("noise", d.noise);
    c.pairs = j.value("pairs", d.pairs);
    c.min_side_px = j.value("min_side_px", d.min_side_px);
    c.preset = j.value("preset", d.preset);
    c.distance_thresholds = j.value("distance_thresholds", d.distance_thresholds);
    c.ratio_band = j.value("ratio_band", d.ratio_band);
    c.distance_band = j.value("distance_band", d.distance_band);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
  c.validate();
}

}  // namespace mstr
