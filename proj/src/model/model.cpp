#include "mstr/model/model.hpp"

#include "mstr/errors.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

SABlock::SABlock(ParameterStore& store, const std::string& name, int channels, int heads, Rng& rng)
    : attn(store, name + ".attn", channels, heads, rng), norm(store, name + ".norm", channels) {}

Var SABlock::operator()(const Var& x) const { return norm(ops::add(x, attn.forward(x, x).out)); }

FFNBlock::FFNBlock(ParameterStore& store, const std::string& name, int channels, int hidden, Rng& rng)
    : fc1(store, name + ".fc1", channels, hidden, rng),
      fc2(store, name + ".fc2", hidden, channels, rng),
      norm(store, name + ".norm", channels) {}

Var FFNBlock::operator()(const Var& x) const { return norm(ops::add(x, fc2(ops::relu(fc1(x))))); }

Var boxes_from_head(const Var& u, const Var& refs) {
  const Var center = ops::sigmoid(ops::add(ops::slice_cols(u, 0, 2), ops::inverse_sigmoid(refs)));
  const Var size = ops::sigmoid(ops::slice_cols(u, 2, 2));
  return ops::concat_cols({center, size});
}

AttentionConfig Model::attention_config() const {
  AttentionConfig a;
  a.heads = cfg_.heads;
  a.points = cfg_.points;
  a.levels = cfg_.levels();
  a.channels = cfg_.channels;
  return a;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int c = cfg_.channels;
  const AttentionConfig acfg = attention_config();
  const bool deformable = cfg_.toggles.deformable;

  Tensor queries({cfg_.queries, c});
  for (auto& v : queries.values()) v = rng.normal();
  query_embedding = store_.create("query_embedding", std::move(queries));

  BackboneConfig bcfg;
  bcfg.image_channels = cfg_.image_channels;
  bcfg.channels = c;
  bcfg.strides = cfg_.strides;
  backbone = ToyBackbone(store_, "backbone", bcfg, rng);
  level_embedding = store_.create("level_embedding", kaiming_uniform({cfg_.levels(), c}, c, rng));

  for (int e = 0; e < cfg_.encoder_layers; ++e) {
    const std::string p = "encoder." + std::to_string(e);
    EncoderLayer layer;
    if (deformable)
      layer.deform = MSDeformAttention(store_, p + ".deform", acfg, rng);
    else
      layer.dense = SSAttention(store_, p + ".dense", c, cfg_.heads, rng);
    layer.norm = LayerNorm(store_, p + ".norm", c);
    layer.ffn = FFNBlock(store_, p + ".ffn", c, cfg_.ffn_dim, rng);
    encoder.push_back(std::move(layer));
  }

  const DecoderVariant v = cfg_.variant;
  if (v == DecoderVariant::NaiveDeformable) {
    ref_single = Linear(store_, "ref_single", c, 2, rng);
  } else {
    init_h = Linear(store_, "init_h", c, c, rng);
    init_o = Linear(store_, "init_o", c, c, rng);
    ref_h = Linear(store_, "ref_h", c, 2, rng);
    ref_o = Linear(store_, "ref_o", c, 2, rng);
  }

  for (int d = 0; d < cfg_.decoder_layers; ++d) {
    const std::string p = "decoder." + std::to_string(d);
    DecoderLayer layer;
    switch (v) {
      case DecoderVariant::MergeOutput:
        layer.sa_h = SABlock(store_, p + ".sa_h", c, cfg_.heads, rng);
        layer.sa_o = SABlock(store_, p + ".sa_o", c, cfg_.heads, rng);
        if (cfg_.has_context()) layer.sa_c = SABlock(store_, p + ".sa_c", c, cfg_.heads, rng);
        break;
      case DecoderVariant::MergeInput:
      case DecoderVariant::StandardContext:
      case DecoderVariant::NaiveDeformable:
        layer.sa = SABlock(store_, p + ".sa", c, cfg_.heads, rng);
        break;
      case DecoderVariant::DoubleStream:
        layer.sa_h = SABlock(store_, p + ".sa_h", c, cfg_.heads, rng);
        layer.sa_o = SABlock(store_, p + ".sa_o", c, cfg_.heads, rng);
        break;
    }
    if (v == DecoderVariant::NaiveDeformable) {
      if (deformable)
        layer.deform = MSDeformAttention(store_, p + ".deform", acfg, rng);
      else
        layer.dense = SSAttention(store_, p + ".dense", c, cfg_.heads, rng);
      layer.norm = LayerNorm(store_, p + ".norm", c);
      layer.ffn = FFNBlock(store_, p + ".ffn", c, cfg_.ffn_dim, rng);
    } else {
      if (v == DecoderVariant::DoubleStream) {
        layer.deform_h = MSDeformAttention(store_, p + ".deform_h", acfg, rng);
        layer.deform_o = MSDeformAttention(store_, p + ".deform_o", acfg, rng);
      } else {
        layer.dual = DualEntityAttention(store_, p + ".dual", acfg, rng);
      }
      layer.norm_h = LayerNorm(store_, p + ".norm_h", c);
      layer.norm_o = LayerNorm(store_, p + ".norm_o", c);
      layer.ffn_h = FFNBlock(store_, p + ".ffn_h", c, cfg_.ffn_dim, rng);
      layer.ffn_o = FFNBlock(store_, p + ".ffn_o", c, cfg_.ffn_dim, rng);
      if (cfg_.has_context()) {
        const auto mode =
            v == DecoderVariant::StandardContext ? ContextReference::Projected : ContextReference::Midpoint;
        layer.context = ContextAttention(store_, p + ".context", acfg, mode, rng);
        layer.norm_c = LayerNorm(store_, p + ".norm_c", c);
        layer.ffn_c = FFNBlock(store_, p + ".ffn_c", c, cfg_.ffn_dim, rng);
      }
    }
    decoder.push_back(std::move(layer));
  }

  hbox_head = Mlp(store_, "hbox_head", {c, c, c, 4}, rng);
  obox_head = Mlp(store_, "obox_head", {c, c, c, 4}, rng);
  cls_head = Linear(store_, "cls_head", c, cfg_.object_classes, rng);
  act_head = Linear(store_, "act_head", c, cfg_.actions, rng);
  // Boxes start at their reference points; class and action heads start at a
  // low prior so the many unmatched queries do not dominate early training.
  for (Mlp* head : {&hbox_head, &obox_head}) {
    head->layers.back().weight.mutable_value().fill(0.0);
    head->layers.back().bias.mutable_value().fill(0.0);
  }
  cls_head.bias.mutable_value().fill(-2.0);
  act_head.bias.mutable_value().fill(-2.0);
}

MultiScalePyramid Model::pyramid(const Var& image) const {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != cfg_.image_channels)
    throw ConfigError("model expects a [" + std::to_string(cfg_.image_channels) + ", H, W] image, got " +
                      shape_string(s));
  return build_pyramid(image, backbone, level_embedding, cfg_.kept_levels());
}

Tensor Model::token_references(const std::vector<LevelShape>& shapes) {
  int total = 0;
  for (const auto& s : shapes) total += s.tokens();
  Tensor refs({total, 2});
  for (const auto& s : shapes)
    for (int i = 0; i < s.height; ++i)
      for (int j = 0; j < s.width; ++j) {
        const int t = s.start + i * s.width + j;
        refs.at(t, 0) = (j + 0.5) / s.width;
        refs.at(t, 1) = (i + 0.5) / s.height;
      }
  return refs;
}

Var Model::encode(const MultiScalePyramid& pyr) const {
  Var src = pyr.flat_features();
  if (encoder.empty()) return src;
  const Var pos = pyr.flat_position_embedding();
  const std::vector<LevelShape> shapes = pyr.shapes();
  const Var refs = Var::constant(token_references(shapes));
  for (const auto& layer : encoder) {
    const Var q = ops::add(src, pos);
    const Var attn = cfg_.toggles.deformable ? layer.deform.forward(q, refs, src, shapes).out
                                             : layer.dense.forward(q, q, src).out;
    src = layer.ffn(layer.norm(ops::add(src, attn)));
  }
  return src;
}

Model::References Model::init_references() const {
  References r;
  if (cfg_.variant == DecoderVariant::NaiveDeformable) {
    r.single = ops::sigmoid(ref_single(query_embedding));
    r.human = r.single;
    r.object = r.single;
  } else {
    r.z_human = init_h(query_embedding);
    r.z_object = init_o(query_embedding);
    r.human = ops::sigmoid(ref_h(r.z_human));
    r.object = ops::sigmoid(ref_o(r.z_object));
  }
  return r;
}

PredictionSet Model::predict(const Var& f_human, const Var& f_object, const Var& f_action, const Var& human_refs,
                             const Var& object_refs) const {
  PredictionSet p;
  p.human_boxes = boxes_from_head(hbox_head(f_human), human_refs);
  p.object_boxes = boxes_from_head(obox_head(f_object), object_refs);
  p.class_logits = cls_head(f_object);
  p.action_logits = act_head(f_action);
  return p;
}

ModelOutput Model::forward(const Var& image) const {
  ModelOutput out;
  out.pyramid = pyramid(image);
  out.shapes = out.pyramid.shapes();
  const auto& shapes = out.shapes;
  const Var memory = encode(out.pyramid);
  const References refs = init_references();
  out.human_refs = refs.human;
  out.object_refs = refs.object;
  const Var& zq = query_embedding;

  switch (cfg_.variant) {
    case DecoderVariant::NaiveDeformable: {
      Var memory_keys;
      if (!cfg_.toggles.deformable) memory_keys = ops::add(memory, out.pyramid.flat_position_embedding());
      Var f = zq;
      for (const auto& layer : decoder) {
        LayerTrace t;
        t.memory = memory;
        t.query = layer.sa(f);
        Var cross;
        if (cfg_.toggles.deformable) {
          t.single = layer.deform.forward(t.query, refs.single, memory, shapes);
          cross = t.single.out;
        } else {
          cross = layer.dense.forward(t.query, memory_keys, memory).out;
        }
        f = layer.ffn(layer.norm(ops::add(t.query, cross)));
        out.layers.push_back(predict(f, f, f, refs.single, refs.single));
        out.traces.push_back(std::move(t));
      }
      break;
    }
    case DecoderVariant::DoubleStream: {
      Var fh = refs.z_human, fo = refs.z_object;
      for (const auto& layer : decoder) {
        LayerTrace t;
        t.memory = memory;
        const Var zh = layer.sa_h(fh);
        const Var zo = layer.sa_o(fo);
        t.query = zh;
        t.human = layer.deform_h.forward(zh, refs.human, memory, shapes);
        t.object = layer.deform_o.forward(zo, refs.object, memory, shapes);
        fh = layer.ffn_h(layer.norm_h(ops::add(zh, t.human.out)));
        fo = layer.ffn_o(layer.norm_o(ops::add(zo, t.object.out)));
        out.layers.push_back(predict(fh, fo, ops::add(fh, fo), refs.human, refs.object));
        out.traces.push_back(std::move(t));
      }
      break;
    }
    case DecoderVariant::MergeOutput:
    case DecoderVariant::MergeInput:
    case DecoderVariant::StandardContext: {
      const bool context = cfg_.has_context();
      const bool merge_output = cfg_.variant == DecoderVariant::MergeOutput;
      Var fh = refs.z_human, fo = refs.z_object, fc = zq;
      for (const auto& layer : decoder) {
        LayerTrace t;
        t.memory = memory;
        if (merge_output) {
          std::vector<Var> parts{layer.sa_h(fh), layer.sa_o(fo)};
          if (context) parts.push_back(layer.sa_c(fc));
          t.query = ops::sum_of(parts);
        } else {
          std::vector<Var> parts{fh, fo};
          if (context) parts.push_back(fc);
          t.query = layer.sa(ops::sum_of(parts));
        }
        const auto dual = layer.dual.forward(t.query, refs.human, refs.object, memory, shapes);
        t.human = dual.human;
        t.object = dual.object;
        fh = layer.ffn_h(layer.norm_h(ops::add(dual.z_human, dual.human.out)));
        fo = layer.ffn_o(layer.norm_o(ops::add(dual.z_object, dual.object.out)));
        Var f_act;
        if (context) {
          const auto ctx = layer.context.forward(t.query, refs.human, refs.object, memory, shapes,
                                                 cfg_.variant == DecoderVariant::StandardContext ? zq : Var());
          t.context = ctx.attn;
          t.context_refs = ctx.reference;
          fc = layer.ffn_c(layer.norm_c(ops::add(t.query, ctx.attn.out)));
          f_act = fc;
        } else {
          f_act = ops::add(fh, fo);
        }
        out.layers.push_back(predict(fh, fo, f_act, refs.human, refs.object));
        out.traces.push_back(std::move(t));
      }
      break;
    }
  }
  return out;
}

}  // namespace mstr
