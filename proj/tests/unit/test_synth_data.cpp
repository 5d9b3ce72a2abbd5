#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "mstr/data/bins.hpp"
#include "mstr/data/manifest.hpp"
#include "mstr/data/scene.hpp"
#include "mstr/errors.hpp"

using namespace mstr;

namespace {

HOITriplet with_ratio(double ratio) {
  // object area 0.04, human area scaled to the requested ratio
  const double hs = std::sqrt(0.04 * ratio);
  return {{0.3, 0.3, hs, hs}, {0.7, 0.7, 0.2, 0.2}, 0, {1, 0, 0}};
}

void check_triplet_invariants(const HOITriplet& t, const SceneConfig& cfg) {
  for (const Box& b : {t.human, t.object}) {
    CHECK(b.x1() >= 0.0);
    CHECK(b.y1() >= 0.0);
    CHECK(b.x2() <= 1.0);
    CHECK(b.y2() <= 1.0);
    CHECK(b.w * cfg.image_size >= cfg.min_side_px - 1e-9);
    CHECK(b.h * cfg.image_size >= cfg.min_side_px - 1e-9);
  }
  CHECK(t.object_class >= 0);
  CHECK(t.object_class < cfg.object_classes);
  REQUIRE(static_cast<int>(t.actions.size()) == cfg.actions);
  int active = 0;
  for (int a : t.actions) {
    CHECK((a == 0 || a == 1));
    active += a;
  }
  CHECK(active >= 1);
}

}  // namespace

TEST_SUITE("synth_data") {
  TEST_CASE("generation is a pure function of seed and config") {
    SceneConfig cfg;
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
      const Scene a = generate_scene(seed, cfg.for_index(4)), b = generate_scene(seed, cfg.for_index(4));
      CHECK(a.triplets == b.triplets);
      CHECK(testing::max_abs_diff(a.image, b.image) == 0.0);
    }
    const Scene a = generate_scene(1, cfg.for_index(0)), c = generate_scene(2, cfg.for_index(0));
    CHECK_FALSE(a.triplets == c.triplets);
  }

  TEST_CASE("generated ground truth satisfies the triplet invariants") {
    for (const char* preset : {"mixed", "random", "h<o", "h=o", "h>o", "adjacent", "moderate", "distant"}) {
      SceneConfig cfg;
      cfg.preset = preset;
      cfg.pairs = 2;
      for (const Scene& s : generate_dataset(18, 5, cfg)) {
        CHECK(s.triplets.size() == 2);
        CHECK(s.image.shape() == Shape{3, 64, 64});
        for (const auto& t : s.triplets) check_triplet_invariants(t, s.config);
      }
    }
  }

  TEST_CASE("ratio presets land in their area-ratio band") {
    SceneConfig cfg;
    cfg.preset = "h>o";
    for (const Scene& s : generate_dataset(50, 6, cfg))
      for (const auto& t : s.triplets) CHECK(area_ratio(t.human, t.object) > 4.33);
    cfg.preset = "h<o";
    for (const Scene& s : generate_dataset(50, 7, cfg))
      for (const auto& t : s.triplets) CHECK(area_ratio(t.human, t.object) < 0.48);
  }

  TEST_CASE("distance presets and action labels follow the distance band") {
    SceneConfig cfg;
    cfg.preset = "distant";
    for (const Scene& s : generate_dataset(30, 8, cfg))
      for (const auto& t : s.triplets) {
        CHECK(band_of(d_interaction(t.human, t.object), cfg.distance_thresholds) == 2);
        CHECK(t.actions[2] == 1);
      }
  }

  TEST_CASE("mixed preset covers every band evenly") {
    SceneConfig cfg;
    std::array<int, 3> ratio{}, distance{};
    for (const Scene& s : generate_dataset(27, 9, cfg))
      for (const auto& t : s.triplets) {
        ++ratio[band_of(area_ratio(t.human, t.object), kAreaRatioThresholds)];
        ++distance[band_of(d_interaction(t.human, t.object), cfg.distance_thresholds)];
      }
    CHECK(ratio == std::array<int, 3>{9, 9, 9});
    CHECK(distance == std::array<int, 3>{9, 9, 9});
  }

  TEST_CASE("unrenderable configs are generation errors") {
    SceneConfig cfg;
    cfg.image_size = 8;
    cfg.min_side_px = 8;
    CHECK_THROWS_AS(generate_scene(1, cfg.for_index(0)), GenerationError);
    cfg = SceneConfig{};
    cfg.preset = "sideways";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("d_interaction examples") {
    CHECK(d_interaction({0.5, 0.5, 0.2, 0.3}, {0.5, 0.5, 0.1, 0.1}) == 0.0);
    CHECK(std::fabs(d_interaction({0, 0, 1, 1}, {1, 1, 1, 1}) - std::sqrt(2.0)) <= 1e-12);
    const double hand = std::sqrt(0.36 + 0.36) / (0.04 * 0.16);
    const double d = d_interaction({0.2, 0.2, 0.2, 0.2}, {0.8, 0.8, 0.4, 0.4});
    CHECK(std::fabs(d - hand) <= 1e-9);
    CHECK(std::fabs(d - 132.58) <= 0.01);
    CHECK_THROWS_AS(d_interaction({0.5, 0.5, 0.0, 0.2}, {0.2, 0.2, 0.1, 0.1}), ArgumentError);
  }

  TEST_CASE("d_interaction is translation invariant and inverse in the area product") {
    Rng rng(10);
    for (int i = 0; i < 500; ++i) {
      Box h{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)};
      Box o{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)};
      const double d = d_interaction(h, o);
      const double dx = rng.uniform(-0.1, 0.1), dy = rng.uniform(-0.1, 0.1);
      Box h2 = h, o2 = o;
      h2.cx += dx, h2.cy += dy, o2.cx += dx, o2.cy += dy;
      CHECK(std::fabs(d_interaction(h2, o2) - d) <= 1e-9 * std::max(1.0, d));
      Box h3 = h;
      h3.w *= 2;
      CHECK(std::fabs(d_interaction(h3, o) - d / 2) <= 1e-9 * std::max(1.0, d));
    }
  }

  TEST_CASE("area-ratio bands with half-open intervals") {
    CHECK(band_of(0.1, kAreaRatioThresholds) == 0);
    CHECK(band_of(0.48, kAreaRatioThresholds) == 1);
    CHECK(band_of(1.0, kAreaRatioThresholds) == 1);
    CHECK(band_of(4.33, kAreaRatioThresholds) == 2);
    CHECK(band_of(9.0, kAreaRatioThresholds) == 2);
    const ResolvedBins r = assign_bins({with_ratio(0.1), with_ratio(1.0), with_ratio(10.0)});
    CHECK(r.labels[0][BinAxis::AreaRatio] == 0);
    CHECK(r.labels[1][BinAxis::AreaRatio] == 1);
    CHECK(r.labels[2][BinAxis::AreaRatio] == 2);
    CHECK(bin_name(BinAxis::AreaRatio, 0) == "h<o");
    CHECK(bin_name(BinAxis::AreaRatio, 2) == "h>o");
  }

  TEST_CASE("equal-count binning splits nine items three ways") {
    std::vector<HOITriplet> gts;
    for (int i = 1; i <= 9; ++i) {
      HOITriplet t = with_ratio(1.0);
      const double s = 0.05 * i;
      t.human.w = t.human.h = s;
      gts.push_back(t);
    }
    const ResolvedBins r = assign_bins(gts);
    std::array<int, 3> counts{};
    for (const auto& l : r.labels) ++counts[l[BinAxis::HumanSize]];
    CHECK(counts == std::array<int, 3>{3, 3, 3});
    // the three smallest boxes form the first bin
    for (int i = 0; i < 3; ++i) CHECK(r.labels[i][BinAxis::HumanSize] == 0);
    for (int i = 6; i < 9; ++i) CHECK(r.labels[i][BinAxis::HumanSize] == 2);
  }

  TEST_CASE("equal-count bins differ in size by at most one") {
    Rng rng(11);
    for (int n = 3; n <= 60; ++n) {
      std::vector<double> values(n);
      for (auto& v : values) v = rng.uniform(0, 10);
      const Thresholds t = equal_count_thresholds(values);
      std::array<int, 3> counts{};
      for (double v : values) ++counts[band_of(v, t)];
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      CHECK(*hi - *lo <= 1);
    }
  }

  TEST_CASE("bin thresholds must increase") {
    BinConfig c;
    c.distance = Thresholds{5.0, 5.0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.distance = Thresholds{1.0, 5.0};
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("manifest round trip regenerates identical scenes") {
    SceneConfig cfg;
    cfg.pairs = 2;
    const std::vector<Scene> scenes = generate_dataset(9, 12, cfg);
    const auto dir = testing::scratch_dir("manifest");
    write_manifest(dir / "manifest.jsonl", scenes);
    const std::vector<Scene> back = load_dataset(dir / "manifest.jsonl");
    REQUIRE(back.size() == scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      CHECK(back[i].id == scenes[i].id);
      CHECK(back[i].seed == scenes[i].seed);
      CHECK(back[i].config == scenes[i].config);
      CHECK(back[i].triplets == scenes[i].triplets);
      CHECK(testing::max_abs_diff(back[i].image, scenes[i].image) == 0.0);
    }
  }

  TEST_CASE("a tampered manifest is rejected") {
    const std::vector<Scene> scenes = generate_dataset(2, 13, SceneConfig{});
    const auto dir = testing::scratch_dir("tampered");
    write_manifest(dir / "manifest.jsonl", scenes);
    std::vector<ManifestRecord> records = read_manifest(dir / "manifest.jsonl");
    records[1].triplets[0].object_class = (records[1].triplets[0].object_class + 1) % 3;
    CHECK_THROWS_AS(regenerate(records[1]), GenerationError);
  }

  TEST_CASE("scene pixmaps are written") {
    const Scene s = generate_scene(14, SceneConfig{}.for_index(0));
    const auto dir = testing::scratch_dir("pixmap");
    write_scene_ppm(dir / "scene.ppm", s);
    const std::string data = testing::read_file(dir / "scene.ppm");
    CHECK(data.rfind("P6", 0) == 0);
    CHECK(data.size() > 64 * 64 * 3);
  }
}
