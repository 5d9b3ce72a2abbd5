#include <cmath>
#include <filesystem>
#include <numbers>

#include "helpers.hpp"
#include "mstr/errors.hpp"
#include "mstr/features/pyramid.hpp"
#include "mstr/numerics/gradcheck.hpp"
#include "mstr/numerics/ops.hpp"

using namespace mstr;
using testing::random_tensor;

namespace {

Tensor sample(const Tensor& features, const LevelShape& level, double x, double y) {
  return bilinear_sample(Var::constant(features), level, Var::constant(Tensor({2}, {x, y}))).value();
}

Tensor row(const Tensor& t, int r) {
  Tensor out({t.cols()});
  for (int c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

struct PyramidFixture {
  ParameterStore store;
  ToyBackbone backbone;
  Var level_embedding;

  explicit PyramidFixture(std::uint64_t seed, int channels = 8) {
    Rng rng(seed);
    BackboneConfig cfg;
    cfg.channels = channels;
    backbone = ToyBackbone(store, "backbone", cfg, rng);
    level_embedding = store.create("level_embedding", random_tensor({3, channels}, rng));
  }
};

}  // namespace

TEST_SUITE("feature_maps") {
  TEST_CASE("rescale_to_level examples") {
    const LevelShape four{4, 4, 0};
    PixelPoint p = rescale_to_level({0.5, 0.5}, four);
    CHECK(p.x == 1.5);
    CHECK(p.y == 1.5);
    p = rescale_to_level({0.0, 0.0}, four);
    CHECK(p.x == -0.5);
    CHECK(p.y == -0.5);
    p = rescale_to_level({0.25, 0.75}, LevelShape{4, 8, 0});
    CHECK(p.x == 1.5);
    CHECK(p.y == 2.5);
  }

  TEST_CASE("rescale_to_level then its inverse is the identity") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const LevelShape level{rng.integer(1, 40), rng.integer(1, 40), 0};
      const NormalizedPoint p{rng.uniform(), rng.uniform()};
      const NormalizedPoint back = level_to_normalized(rescale_to_level(p, level), level);
      CHECK(std::fabs(back.x - p.x) <= 1e-12);
      CHECK(std::fabs(back.y - p.y) <= 1e-12);
    }
  }

  TEST_CASE("normalized points are clamped") {
    const NormalizedPoint p = NormalizedPoint::clamped(-0.5, 1.5);
    CHECK(p.x == 0.0);
    CHECK(p.y == 1.0);
  }

  TEST_CASE("bilinear_sample examples") {
    Rng rng(2);
    const LevelShape level{3, 4, 0};
    const Tensor f = random_tensor({12, 5}, rng);
    // pixel (row 1, col 2) is centered at (2, 1)
    CHECK(testing::max_abs_diff(sample(f, level, 2.0, 1.0), row(f, 6)) == 0.0);
    const Tensor mid = sample(f, level, 1.5, 2.0);
    for (int c = 0; c < 5; ++c) CHECK(std::fabs(mid[c] - 0.5 * (f.at(9, c) + f.at(10, c))) <= 1e-15);
    const Tensor outside = sample(f, level, -10, -10);
    for (double v : outside.values()) CHECK(v == 0.0);
  }

  TEST_CASE("bilinear_sample is linear between pixel centers along each axis") {
    Rng rng(3);
    const LevelShape level{5, 6, 0};
    const Tensor f = random_tensor({30, 4}, rng);
    for (int trial = 0; trial < 200; ++trial) {
      const int i = rng.integer(0, 4), j = rng.integer(0, 4);
      const double t = rng.uniform();
      const Tensor s = sample(f, level, j + t, i);
      const Tensor a = row(f, i * 6 + j), b = row(f, i * 6 + j + 1);
      for (int c = 0; c < 4; ++c) CHECK(std::fabs(s[c] - ((1 - t) * a[c] + t * b[c])) <= 1e-10);
      const int i2 = rng.integer(0, 3);
      const Tensor v = sample(f, level, j, i2 + t);
      const Tensor a2 = row(f, i2 * 6 + j), b2 = row(f, (i2 + 1) * 6 + j);
      for (int c = 0; c < 4; ++c) CHECK(std::fabs(v[c] - ((1 - t) * a2[c] + t * b2[c])) <= 1e-10);
    }
  }

  TEST_CASE("coordinate gradient matches finite differences away from kinks") {
    Rng rng(4);
    const LevelShape level{4, 5, 0};
    for (int trial = 0; trial < 200; ++trial) {
      Var f = Var::leaf(random_tensor({20, 3}, rng));
      // fractional parts at least 1e-3 from any pixel-center kink, including the padded border
      const double x = rng.integer(-1, 4) + rng.uniform(1e-3, 1 - 1e-3);
      const double y = rng.integer(-1, 3) + rng.uniform(1e-3, 1 - 1e-3);
      Var coord = Var::leaf(Tensor({2}, {x, y}));
      const Tensor w = random_tensor({3}, rng, 0.5, 1.5);
      const GradCheckResult r = check_gradients(
          "bilinear", [&] { return ops::sum(ops::mul(bilinear_sample(f, level, coord), Var::constant(w))); },
          {f, coord}, 1e-4, 1e-5);
      CHECK(r.kinks == 0);
      CHECK(r.passed);
    }
  }

  TEST_CASE("build_pyramid level shapes follow the strides") {
    PyramidFixture fx(5);
    Rng rng(6);
    const MultiScalePyramid p = build_pyramid(Var::constant(random_tensor({3, 64, 64}, rng)), fx.backbone,
                                              fx.level_embedding);
    REQUIRE(p.levels.size() == 3);
    const int sides[3] = {16, 8, 4};
    for (int l = 0; l < 3; ++l) {
      CHECK(p.levels[l].shape.height == sides[l]);
      CHECK(p.levels[l].shape.width == sides[l]);
      CHECK(p.levels[l].index == l + 1);
      CHECK(p.levels[l].features.value().cols() == 8);
    }
    CHECK(p.flat_features().value().rows() == 16 * 16 + 8 * 8 + 4 * 4);
  }

  TEST_CASE("non-divisible image dimensions are a configuration error") {
    PyramidFixture fx(7);
    CHECK_THROWS_AS(build_pyramid(Var::constant(Tensor({3, 60, 64})), fx.backbone, fx.level_embedding),
                    ConfigError);
  }

  TEST_CASE("zero image through a zero backbone gives zero features but non-zero positions") {
    PyramidFixture fx(8);
    for (auto& p : fx.store.parameters())
      if (p.name != "level_embedding") p.var.mutable_value().fill(0.0);
    const MultiScalePyramid p = build_pyramid(Var::constant(Tensor({3, 64, 64})), fx.backbone, fx.level_embedding);
    for (const auto& level : p.levels)
      for (double v : level.features.value().values()) CHECK(v == 0.0);
    for (const auto& pos : p.positional) {
      double norm = 0;
      for (double v : pos.values()) norm += v * v;
      CHECK(norm > 0);
    }
  }

  TEST_CASE("positional encodings of distinct locations differ") {
    const Tensor pe = sine_position_encoding(8, 8, 16);
    // independent evaluation of the first y channel, sin(2*pi*y_norm), at rows 1 and 5
    const double y1 = 2 * std::numbers::pi * 1.5 / 8, y5 = 2 * std::numbers::pi * 5.5 / 8;
    CHECK(std::fabs(pe.at(1 * 8 + 3, 0) - std::sin(y1)) <= 1e-12);
    CHECK(std::fabs(pe.at(5 * 8 + 3, 0) - std::sin(y5)) <= 1e-12);
    for (int a = 0; a < 64; ++a)
      for (int b = a + 1; b < 64; ++b) {
        double diff = 0;
        for (int c = 0; c < 16; ++c) diff = std::max(diff, std::fabs(pe.at(a, c) - pe.at(b, c)));
        CHECK(diff > 1e-6);
      }
  }

  TEST_CASE("level embedding adds exactly its row to every token of the level") {
    PyramidFixture fx(9);
    Rng rng(10);
    const Var image = Var::constant(random_tensor({3, 64, 64}, rng));
    const MultiScalePyramid with = build_pyramid(image, fx.backbone, fx.level_embedding);
    const MultiScalePyramid without =
        build_pyramid(image, fx.backbone, Var::constant(Tensor(fx.level_embedding.shape(), 0.0)));
    for (int l = 0; l < 3; ++l) {
      const Tensor a = with.embedded_level(l).value(), b = without.embedded_level(l).value();
      for (int t = 0; t < a.rows(); ++t)
        for (int c = 0; c < a.cols(); ++c)
          CHECK(std::fabs(a.at(t, c) - b.at(t, c) - fx.level_embedding.value().at(l, c)) <= 1e-12);
    }
  }

  TEST_CASE("pyramid dump writes one graymap per level and channel") {
    PyramidFixture fx(11, 4);
    Rng rng(12);
    const MultiScalePyramid p =
        build_pyramid(Var::constant(random_tensor({3, 32, 32}, rng)), fx.backbone, fx.level_embedding);
    const auto dir = testing::scratch_dir("pyramid");
    dump_pyramid(p, dir);
    for (int l = 1; l <= 3; ++l)
      for (int c = 0; c < 4; ++c) {
        const auto path = dir / ("level-" + std::to_string(l) + "-chan-" + std::to_string(c) + ".pgm");
        CHECK(std::filesystem::exists(path));
      }
  }
}
