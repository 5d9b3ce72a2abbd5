#include "mstr/attention/attention.hpp"

#include <cmath>
#include <numbers>

#include "mstr/errors.hpp"
#include "mstr/features/bilinear.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

void AttentionConfig::validate() const {
  if (heads < 1 || points < 1 || levels < 1 || channels < 1)
    throw ConfigError("attention needs M, K, L, C >= 1");
  if (channels % heads != 0)
    throw ConfigError("channels (" + std::to_string(channels) + ") not divisible by heads (" +
                      std::to_string(heads) + ")");
}

Tensor compute_sampling_locations(const SamplingGrid& grid, const std::vector<LevelShape>& shapes) {
  const Tensor& off = grid.offsets;
  if (off.rank() != 4 || off.dim(1) != static_cast<int>(shapes.size()) || off.dim(3) != 2)
    throw DimensionError("sampling grid offsets must be [M, L, K, 2]");
  const int m_count = off.dim(0), l_count = off.dim(1), k_count = off.dim(2);
  Tensor out(off.shape());
  for (int m = 0; m < m_count; ++m)
    for (int l = 0; l < l_count; ++l) {
      const PixelPoint base = rescale_to_level(grid.reference, shapes[l]);
      for (int k = 0; k < k_count; ++k) {
        const std::size_t i = ((static_cast<std::size_t>(m) * l_count + l) * k_count + k) * 2;
        out[i] = base.x + off[i];
        out[i + 1] = base.y + off[i + 1];
      }
    }
  return out;
}

Var sampling_locations(const Var& refs, const Var& offsets, const std::vector<LevelShape>& shapes, int heads,
                       int points) {
  const int nq = refs.value().rows();
  const int levels = static_cast<int>(shapes.size());
  const int width = heads * levels * points * 2;
  if (refs.value().cols() != 2 || offsets.value().rows() != nq || offsets.value().cols() != width)
    throw DimensionError("sampling_locations: refs " + shape_string(refs.shape()) + ", offsets " +
                         shape_string(offsets.shape()));
  Tensor out = offsets.value();
  for (int q = 0; q < nq; ++q)
    for (int m = 0; m < heads; ++m)
      for (int l = 0; l < levels; ++l)
        for (int k = 0; k < points; ++k) {
          const int c = ((m * levels + l) * points + k) * 2;
          out.at(q, c) += refs.value().at(q, 0) * shapes[l].width - 0.5;
          out.at(q, c + 1) += refs.value().at(q, 1) * shapes[l].height - 0.5;
        }
  return Var::make(std::move(out), "sampling_locations", {refs, offsets},
                   [shapes, heads, points, levels, nq](detail::Node& self) {
                     if (Tensor* gr = input_grad(self, 0))
                       for (int q = 0; q < nq; ++q)
                         for (int m = 0; m < heads; ++m)
                           for (int l = 0; l < levels; ++l)
                             for (int k = 0; k < points; ++k) {
                               const int c = ((m * levels + l) * points + k) * 2;
                               gr->at(q, 0) += shapes[l].width * self.grad.at(q, c);
                               gr->at(q, 1) += shapes[l].height * self.grad.at(q, c + 1);
                             }
                     if (Tensor* go = input_grad(self, 1))
                       for (std::size_t i = 0; i < go->size(); ++i) (*go)[i] += self.grad[i];
                   });
}

Var deform_sample(const Var& value, const std::vector<LevelShape>& shapes, const Var& locations, const Var& weights,
                  int heads, int points) {
  const Tensor& vv = value.value();
  const Tensor& loc = locations.value();
  const Tensor& aw = weights.value();
  const int levels = static_cast<int>(shapes.size());
  const int nq = loc.rows();
  const int c = vv.cols();
  int total = 0;
  for (const auto& s : shapes) total += s.tokens();
  if (vv.rows() != total || c % heads != 0)
    throw DimensionError("deform_sample: value " + shape_string(vv.shape()) + " does not match pyramid");
  if (loc.cols() != heads * levels * points * 2 || aw.rows() != nq || aw.cols() != heads * levels * points)
    throw DimensionError("deform_sample: locations/weights layout mismatch");
  const int cv = c / heads;

  Tensor out({nq, c}, 0.0);
  for (int q = 0; q < nq; ++q)
    for (int m = 0; m < heads; ++m)
      for (int l = 0; l < levels; ++l)
        for (int k = 0; k < points; ++k) {
          const int s = (m * levels + l) * points + k;
          const double a = aw.at(q, s);
          const auto cr = bilinear_corners(loc.at(q, 2 * s), loc.at(q, 2 * s + 1), shapes[l].height, shapes[l].width);
          double* dst = out.data() + static_cast<std::size_t>(q) * c + m * cv;
          for (int t = 0; t < 4; ++t) {
            if (cr.index[t] < 0) continue;
            const double w = a * cr.weight[t];
            const double* src = vv.data() + static_cast<std::size_t>(shapes[l].start + cr.index[t]) * c + m * cv;
            for (int j = 0; j < cv; ++j) dst[j] += w * src[j];
          }
        }

  return Var::make(
      std::move(out), "deform_sample", {value, locations, weights},
      [shapes, heads, points, levels, nq, c, cv](detail::Node& self) {
        const Tensor& vv = self.inputs[0]->value;
        const Tensor& loc = self.inputs[1]->value;
        const Tensor& aw = self.inputs[2]->value;
        Tensor* gv = input_grad(self, 0);
        Tensor* gl = input_grad(self, 1);
        Tensor* ga = input_grad(self, 2);
        for (int q = 0; q < nq; ++q)
          for (int m = 0; m < heads; ++m)
            for (int l = 0; l < levels; ++l)
              for (int k = 0; k < points; ++k) {
                const int s = (m * levels + l) * points + k;
                const double a = aw.at(q, s);
                const auto cr =
                    bilinear_corners(loc.at(q, 2 * s), loc.at(q, 2 * s + 1), shapes[l].height, shapes[l].width);
                const double* g = self.grad.data() + static_cast<std::size_t>(q) * c + m * cv;
                double da = 0, dx = 0, dy = 0;
                for (int t = 0; t < 4; ++t) {
                  if (cr.index[t] < 0) continue;
                  const std::size_t row = static_cast<std::size_t>(shapes[l].start + cr.index[t]) * c + m * cv;
                  const double* src = vv.data() + row;
                  double dot = 0;
                  for (int j = 0; j < cv; ++j) dot += src[j] * g[j];
                  da += cr.weight[t] * dot;
                  dx += cr.dwdx[t] * dot;
                  dy += cr.dwdy[t] * dot;
                  if (gv) {
                    const double w = a * cr.weight[t];
                    double* dst = gv->data() + row;
                    for (int j = 0; j < cv; ++j) dst[j] += w * g[j];
                  }
                }
                if (ga) ga->at(q, s) += da;
                if (gl) {
                  gl->at(q, 2 * s) += a * dx;
                  gl->at(q, 2 * s + 1) += a * dy;
                }
              }
      });
}

SSAttention::SSAttention(ParameterStore& store, const std::string& name, int channels, int heads_, Rng& rng)
    : query_proj(store, name + ".query_proj", channels, channels, rng),
      key_proj(store, name + ".key_proj", channels, channels, rng),
      value_proj(store, name + ".value_proj", channels, channels, rng),
      output_proj(store, name + ".output_proj", channels, channels, rng),
      heads(heads_) {
  if (heads < 1 || channels % heads != 0) throw ConfigError("SSAttention: channels not divisible by heads");
}

SSAttention::Output SSAttention::forward(const Var& queries, const Var& keys, const Var& values) const {
  if (keys.value().rows() == 0 || keys.value().empty()) throw ArgumentError("ss_attention: empty key set");
  if (keys.value().rows() != values.value().rows()) throw DimensionError("ss_attention: keys/values count mismatch");
  const int c = queries.value().cols();
  const int cv = c / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cv));
  Var q = query_proj(queries);
  Var k = key_proj(keys);
  Var v = value_proj(values);
  Output out;
  std::vector<Var> per_head;
  for (int m = 0; m < heads; ++m) {
    Var qm = heads == 1 ? q : ops::slice_cols(q, m * cv, cv);
    Var km = heads == 1 ? k : ops::slice_cols(k, m * cv, cv);
    Var vm = heads == 1 ? v : ops::slice_cols(v, m * cv, cv);
    Var logits = ops::scale(ops::matmul(qm, ops::transpose(km)), inv_sqrt);
    Var a = ops::softmax(logits, 1);
    out.weights.push_back(a);
    per_head.push_back(ops::matmul(a, vm));
  }
  out.out = output_proj(heads == 1 ? per_head.front() : ops::concat_cols(per_head));
  return out;
}

SSAttention::Output SSAttention::forward(const Var& queries, const std::vector<Var>& keys) const {
  if (keys.empty()) throw ArgumentError("ss_attention: empty key set");
  const Var k = keys.size() == 1 ? keys.front() : ops::concat_rows(keys);
  return forward(queries, k, k);
}

MSDeformAttention::MSDeformAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                                     Rng& rng)
    : cfg_(cfg) {
  cfg.validate();
  const int c = cfg.channels;
  const int samples = cfg.heads * cfg.levels * cfg.points;
  offset_proj = Linear(store, name + ".offset_proj", c, samples * 2, rng);
  weight_proj = Linear(store, name + ".weight_proj", c, samples, rng);
  value_proj = Linear(store, name + ".value_proj", c, c, rng);
  output_proj = Linear(store, name + ".output_proj", c, c, rng);

  // Zero offset weights; biases on a small radial pattern with a distinct
  // direction for every (head, point). The 0.3 rad phase keeps the initial
  // samples off the pixel-grid axes.
  offset_proj.weight.mutable_value().fill(0.0);
  Tensor& ob = offset_proj.bias.mutable_value();
  const int mk = cfg.heads * cfg.points;
  for (int m = 0; m < cfg.heads; ++m)
    for (int l = 0; l < cfg.levels; ++l)
      for (int k = 0; k < cfg.points; ++k) {
        const double theta = 2.0 * std::numbers::pi * (m * cfg.points + k) / mk + 0.3;
        const double radius = 0.5 * (k + 1);
        const int s = (m * cfg.levels + l) * cfg.points + k;
        ob[2 * s] = radius * std::cos(theta);
        ob[2 * s + 1] = radius * std::sin(theta);
      }
  weight_proj.weight.mutable_value().fill(0.0);
  weight_proj.bias.mutable_value().fill(0.0);
}

Var MSDeformAttention::attention_weights(const Var& query) const {
  const int nq = query.value().rows();
  Var logits = ops::reshape(weight_proj(query), {nq, cfg_.heads, cfg_.samples_per_head()});
  return ops::reshape(ops::softmax(logits, 2), {nq, cfg_.heads * cfg_.samples_per_head()});
}

Var MSDeformAttention::attend(const Var& value_input, const std::vector<LevelShape>& shapes, const Var& locations,
                              const Var& weights) const {
  Var value = value_proj(value_input);
  return output_proj(deform_sample(value, shapes, locations, weights, cfg_.heads, cfg_.points));
}

MSDeformAttention::Output MSDeformAttention::forward(const Var& query, const Var& refs, const Var& value_input,
                                                     const std::vector<LevelShape>& shapes) const {
  if (static_cast<int>(shapes.size()) != cfg_.levels)
    throw ConfigError("deformable attention configured for " + std::to_string(cfg_.levels) + " levels, pyramid has " +
                      std::to_string(shapes.size()));
  Output o;
  o.weights = attention_weights(query);
  o.locations = sampling_locations(refs, offset_proj(query), shapes, cfg_.heads, cfg_.points);
  o.out = attend(value_input, shapes, o.locations, o.weights);
  return o;
}

SamplingGrid MSDeformAttention::grid_for(const Output& out, const Var& refs, int q,
                                         const std::vector<LevelShape>& shapes) const {
  SamplingGrid g;
  g.reference = {refs.value().at(q, 0), refs.value().at(q, 1)};
  g.offsets = Tensor({cfg_.heads, cfg_.levels, cfg_.points, 2});
  g.weights = Tensor({cfg_.heads, cfg_.levels, cfg_.points});
  for (int m = 0; m < cfg_.heads; ++m)
    for (int l = 0; l < cfg_.levels; ++l) {
      const PixelPoint base = rescale_to_level(g.reference, shapes[l]);
      for (int k = 0; k < cfg_.points; ++k) {
        const int s = (m * cfg_.levels + l) * cfg_.points + k;
        g.offsets[2 * s] = out.locations.value().at(q, 2 * s) - base.x;
        g.offsets[2 * s + 1] = out.locations.value().at(q, 2 * s + 1) - base.y;
        g.weights[s] = out.weights.value().at(q, s);
      }
    }
  return g;
}

DualEntityAttention::DualEntityAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                                         Rng& rng)
    : human_proj(store, name + ".human_proj", cfg.channels, cfg.channels, rng),
      object_proj(store, name + ".object_proj", cfg.channels, cfg.channels, rng),
      human(store, name + ".human", cfg, rng),
      object(store, name + ".object", cfg, rng) {}

DualEntityAttention::Output DualEntityAttention::forward(const Var& query, const Var& human_refs,
                                                         const Var& object_refs, const Var& value_input,
                                                         const std::vector<LevelShape>& shapes) const {
  Output o;
  o.z_human = human_proj(query);
  o.z_object = object_proj(query);
  o.human = human.forward(o.z_human, human_refs, value_input, shapes);
  o.object = object.forward(o.z_object, object_refs, value_input, shapes);
  return o;
}

Var midpoint(const Var& a, const Var& b) { return ops::scale(ops::add(a, b), 0.5); }

ContextAttention::ContextAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                                   ContextReference m, Rng& rng)
    : mode(m), attn(store, name + ".attn", cfg, rng) {
  if (mode == ContextReference::Projected)
    reference_proj = Linear(store, name + ".reference_proj", cfg.channels, 2, rng);
}

ContextAttention::Output ContextAttention::forward(const Var& query, const Var& human_refs, const Var& object_refs,
                                                   const Var& value_input,
                                                   const std::vector<LevelShape>& shapes,
                                                   const Var& reference_query) const {
  Output o;
  o.reference = mode == ContextReference::Midpoint
                    ? midpoint(human_refs, object_refs)
                    : ops::sigmoid(reference_proj(reference_query.defined() ? reference_query : query));
  o.attn = attn.forward(query, o.reference, value_input, shapes);
  return o;
}

KeyCount key_count(const AttentionConfig& cfg, const std::vector<LevelShape>& shapes) {
  KeyCount kc;
  for (const auto& s : shapes) kc.dense += static_cast<long>(s.height) * s.width;
  kc.sampled = static_cast<long>(shapes.size()) * cfg.heads * cfg.points;
  return kc;
}

AttentionRecord make_record(const std::string& stream, const MSDeformAttention::Output& out, const Var& refs, int q,
                            const AttentionConfig& cfg, const std::vector<LevelShape>& shapes) {
  AttentionRecord r;
  r.stream = stream;
  r.reference = {refs.value().at(q, 0), refs.value().at(q, 1)};
  r.heads = cfg.heads;
  r.levels = cfg.levels;
  r.points = cfg.points;
  for (int m = 0; m < cfg.heads; ++m)
    for (int l = 0; l < cfg.levels; ++l)
      for (int k = 0; k < cfg.points; ++k) {
        const int s = (m * cfg.levels + l) * cfg.points + k;
        r.locations.push_back(level_to_normalized(
            {out.locations.value().at(q, 2 * s), out.locations.value().at(q, 2 * s + 1)}, shapes[l]));
        r.weights.push_back(out.weights.value().at(q, s));
      }
  return r;
}

nlohmann::json to_json(const AttentionRecord& r) {
  nlohmann::json j;
  j["stream"] = r.stream;
  j["reference"] = {r.reference.x, r.reference.y};
  j["heads"] = r.heads;
  j["levels"] = r.levels;
  j["points"] = r.points;
  auto& samples = j["samples"] = nlohmann::json::array();
  for (int m = 0; m < r.heads; ++m)
    for (int l = 0; l < r.levels; ++l)
      for (int k = 0; k < r.points; ++k) {
        const std::size_t s = (static_cast<std::size_t>(m) * r.levels + l) * r.points + k;
        samples.push_back({{"head", m},
                           {"level", l + 1},
                           {"point", k},
                           {"x", r.locations[s].x},
                           {"y", r.locations[s].y},
                           {"weight", r.weights[s]}});
      }
  return j;
}

}  // namespace mstr
