#include "mstr/features/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mstr/errors.hpp"
#include "mstr/features/bilinear.hpp"
#include "mstr/image_io.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

NormalizedPoint NormalizedPoint::clamped(double x, double y) {
  return {std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0)};
}

PixelPoint rescale_to_level(NormalizedPoint p, const LevelShape& level) {
  return {p.x * level.width - 0.5, p.y * level.height - 0.5};
}

NormalizedPoint level_to_normalized(PixelPoint q, const LevelShape& level) {
  return {(q.x + 0.5) / level.width, (q.y + 0.5) / level.height};
}

Var bilinear_sample(const Var& features, const LevelShape& level, const Var& coord) {
  const Tensor& fv = features.value();
  if (fv.rows() != level.tokens()) throw DimensionError("bilinear_sample: feature rows do not match level");
  if (coord.value().size() != 2) throw DimensionError("bilinear_sample: coordinate must have 2 entries");
  const int c = fv.cols();
  const auto corners = bilinear_corners(coord.value()[0], coord.value()[1], level.height, level.width);
  Tensor out({c}, 0.0);
  for (int k = 0; k < 4; ++k) {
    if (corners.index[k] < 0) continue;
    for (int j = 0; j < c; ++j) out[j] += corners.weight[k] * fv.at(corners.index[k], j);
  }
  return Var::make(std::move(out), "bilinear_sample", {features, coord}, [corners, c](detail::Node& self) {
    const Tensor& fv = self.inputs[0]->value;
    Tensor* gf = input_grad(self, 0);
    Tensor* gc = input_grad(self, 1);
    for (int k = 0; k < 4; ++k) {
      if (corners.index[k] < 0) continue;
      for (int j = 0; j < c; ++j) {
        const double g = self.grad[j];
        if (gf) gf->at(corners.index[k], j) += corners.weight[k] * g;
        if (gc) {
          const double f = fv.at(corners.index[k], j);
          (*gc)[0] += corners.dwdx[k] * f * g;
          (*gc)[1] += corners.dwdy[k] * f * g;
        }
      }
    }
  });
}

int MultiScalePyramid::channels() const {
  return levels.empty() ? 0 : levels.front().features.value().cols();
}

std::vector<LevelShape> MultiScalePyramid::shapes() const {
  std::vector<LevelShape> out;
  for (const auto& l : levels) out.push_back(l.shape);
  return out;
}

Var MultiScalePyramid::flat_features() const {
  if (levels.size() == 1) return levels.front().features;
  std::vector<Var> parts;
  for (const auto& l : levels) parts.push_back(l.features);
  return ops::concat_rows(parts);
}

Var MultiScalePyramid::flat_position_embedding() const {
  std::vector<Var> parts;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    Var pos = Var::constant(positional[l]);
    parts.push_back(ops::add(pos, ops::reshape(ops::slice_rows(level_embedding, static_cast<int>(l), 1),
                                               {channels()})));
  }
  return parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
}

Var MultiScalePyramid::embedded_level(int l) const {
  Var row = ops::reshape(ops::slice_rows(level_embedding, l, 1), {channels()});
  return ops::add(ops::add(levels.at(l).features, Var::constant(positional.at(l))), row);
}

Tensor sine_position_encoding(int height, int width, int channels, double temperature) {
  if (channels % 4 != 0) throw ConfigError("sine position encoding needs channels divisible by 4");
  const int half = channels / 2;
  Tensor out({height * width, channels});
  std::vector<double> dim_t(half);
  for (int d = 0; d < half; ++d) dim_t[d] = std::pow(temperature, 2.0 * (d / 2) / half);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const double ye = (i + 0.5) / height * two_pi;
      const double xe = (j + 0.5) / width * two_pi;
      const int row = i * width + j;
      for (int d = 0; d < half; ++d) {
        const double py = ye / dim_t[d], px = xe / dim_t[d];
        out.at(row, d) = (d % 2 == 0) ? std::sin(py) : std::cos(py);
        out.at(row, half + d) = (d % 2 == 0) ? std::sin(px) : std::cos(px);
      }
    }
  }
  return out;
}

ToyBackbone::ToyBackbone(ParameterStore& store, const std::string& name, const BackboneConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.strides.empty()) throw ConfigError("backbone needs at least one stride");
  int prev = 1;
  for (std::size_t l = 0; l < cfg.strides.size(); ++l) {
    const int s = cfg.strides[l];
    if (s <= prev || s % prev != 0)
      throw ConfigError("backbone strides must strictly increase by integer ratios");
    const int ratio = s / prev;
    const int cin = l == 0 ? cfg.image_channels : cfg.channels;
    Stage st;
    const int k = l == 0 ? ratio : 2 * ratio - 1;
    st.stride = ratio;
    st.pad = l == 0 ? 0 : ratio - 1;
    const std::string base = name + ".stage" + std::to_string(l);
    st.weight = store.create(base + ".weight", kaiming_uniform({cfg.channels, cin, k, k}, cin * k * k, rng));
    st.bias = store.create(base + ".bias", kaiming_uniform({cfg.channels}, cin * k * k, rng));
    stages.push_back(st);
    Linear proj(store, name + ".input_proj" + std::to_string(l), cfg.channels, cfg.channels, rng);
    proj.bias.mutable_value().fill(0.0);
    input_proj.push_back(proj);
    prev = s;
  }
}

std::vector<FeatureLevel> ToyBackbone::operator()(const Var& image) const {
  const Tensor& iv = image.value();
  if (iv.rank() != 3 || iv.dim(0) != cfg_.image_channels)
    throw DimensionError("backbone input must be [" + std::to_string(cfg_.image_channels) + ",H,W]");
  const int largest = cfg_.strides.back();
  if (iv.dim(1) % largest != 0 || iv.dim(2) % largest != 0)
    throw ConfigError("image size " + std::to_string(iv.dim(1)) + "x" + std::to_string(iv.dim(2)) +
                      " is not divisible by the largest stride " + std::to_string(largest));
  std::vector<FeatureLevel> out;
  Var x = image;
  int start = 0;
  for (std::size_t l = 0; l < stages.size(); ++l) {
    x = ops::relu(ops::conv2d(x, stages[l].weight, stages[l].bias, stages[l].stride, stages[l].pad));
    FeatureLevel lvl;
    lvl.index = static_cast<int>(l) + 1;
    lvl.shape = {x.value().dim(1), x.value().dim(2), start};
    lvl.features = input_proj[l](ops::channels_last(x));
    start += lvl.shape.tokens();
    out.push_back(std::move(lvl));
  }
  return out;
}

MultiScalePyramid build_pyramid(const Var& image, const ToyBackbone& backbone, const Var& level_embedding,
                                const std::vector<int>& keep_levels) {
  auto all = backbone(image);
  MultiScalePyramid p;
  std::vector<int> keep = keep_levels;
  if (keep.empty())
    for (std::size_t l = 0; l < all.size(); ++l) keep.push_back(static_cast<int>(l));
  if (level_embedding.value().rank() != 2 || level_embedding.value().dim(0) != static_cast<int>(keep.size()))
    throw ConfigError("level embedding rows must equal the number of pyramid levels");
  int start = 0;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= static_cast<int>(all.size())) throw ConfigError("pyramid level out of range");
    FeatureLevel lvl = all[keep[k]];
    lvl.index = static_cast<int>(k) + 1;
    lvl.shape.start = start;
    start += lvl.shape.tokens();
    p.positional.push_back(sine_position_encoding(lvl.shape.height, lvl.shape.width, backbone.config().channels));
    p.levels.push_back(std::move(lvl));
  }
  p.level_embedding = level_embedding;
  return p;
}

void dump_pyramid(const MultiScalePyramid& pyramid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& lvl : pyramid.levels) {
    const Tensor& f = lvl.features.value();
    for (int c = 0; c < f.cols(); ++c) {
      double lo = f.at(0, c), hi = f.at(0, c);
      for (int r = 0; r < f.rows(); ++r) {
        lo = std::min(lo, f.at(r, c));
        hi = std::max(hi, f.at(r, c));
      }
      Raster img(lvl.shape.width, lvl.shape.height, 1);
      for (int r = 0; r < f.rows(); ++r)
        img.pixels[r] = to_byte(hi > lo ? (f.at(r, c) - lo) / (hi - lo) : 0.0);
      write_pgm(dir / ("level-" + std::to_string(lvl.index) + "-chan-" + std::to_string(c) + ".pgm"), img);
    }
  }
}

}  // namespace mstr
