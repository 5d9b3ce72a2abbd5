#pragma once

#include <cstdint>
#include <vector>

#include "mstr/attention/attention.hpp"
#include "mstr/hoi.hpp"
#include "mstr/model/config.hpp"

namespace mstr {

// x -> LN(x + SA(x)), self-attention across the query set.
struct SABlock {
  SABlock() = default;
  SABlock(ParameterStore& store, const std::string& name, int channels, int heads, Rng& rng);
  Var operator()(const Var& x) const;
  SSAttention attn;
  LayerNorm norm;
};

// x -> LN(x + W2 relu(W1 x))
struct FFNBlock {
  FFNBlock() = default;
  FFNBlock(ParameterStore& store, const std::string& name, int channels, int hidden, Rng& rng);
  Var operator()(const Var& x) const;
  Linear fc1, fc2;
  LayerNorm norm;
};

struct EncoderLayer {
  MSDeformAttention deform;  // deformable self-attention
  SSAttention dense;         // dense self-attention when deformable attention is off
  LayerNorm norm;
  FFNBlock ffn;
};

// Only the members used by the configured variant are initialized.
struct DecoderLayer {
  SABlock sa;                  // merge-input, standard-context, naive
  SABlock sa_h, sa_o, sa_c;    // merge-output (and the two streams of double-stream)
  DualEntityAttention dual;    // merge-output, merge-input, standard-context
  ContextAttention context;    // when the context stream exists
  MSDeformAttention deform_h, deform_o;  // double-stream
  MSDeformAttention deform;    // naive
  SSAttention dense;           // naive without deformable attention
  LayerNorm norm_h, norm_o, norm_c, norm;
  FFNBlock ffn_h, ffn_o, ffn_c, ffn;
};

// Attention internals of one decoder layer, kept for introspection and tests.
struct LayerTrace {
  Var query;  // input of the cross-attention, z-bar
  MSDeformAttention::Output human, object, context, single;
  Var context_refs;
  Var memory;  // encoded pyramid tokens [S, C]
};

struct ModelOutput {
  std::vector<PredictionSet> layers;  // one per decoder layer, last = final
  Var human_refs;                     // [N, 2]
  Var object_refs;                    // [N, 2]
  std::vector<LayerTrace> traces;
  std::vector<LevelShape> shapes;
  MultiScalePyramid pyramid;

  const PredictionSet& final() const { return layers.back(); }
};

// Box head output u = [u_x, u_y, u_w, u_h] -> (sigmoid(u_x + logit(ref_x)),
// sigmoid(u_y + logit(ref_y)), sigmoid(u_w), sigmoid(u_h)).
Var boxes_from_head(const Var& u, const Var& refs);

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  AttentionConfig attention_config() const;

  MultiScalePyramid pyramid(const Var& image) const;
  // Encoded tokens [S, C], stacked level by level.
  Var encode(const MultiScalePyramid& pyramid) const;
  // Per-token normalized reference points used by the encoder, [S, 2].
  static Tensor token_references(const std::vector<LevelShape>& shapes);

  struct References {
    Var z_human, z_object;  // initial projections of the query embeddings
    Var human, object;      // sigmoid(linear(z^h)), sigmoid(linear(z^o)), [N, 2]
    Var single;             // naive variant: sigmoid(linear(z_q))
  };
  References init_references() const;

  // image: [C_img, H, W]
  ModelOutput forward(const Var& image) const;
  ModelOutput forward(const Tensor& image) const { return forward(Var::constant(image)); }

  PredictionSet predict(const Var& f_human, const Var& f_object, const Var& f_action, const Var& human_refs,
                        const Var& object_refs) const;

  Var query_embedding;  // [N, C]
  ToyBackbone backbone;
  Var level_embedding;  // [levels, C]
  std::vector<EncoderLayer> encoder;
  Linear init_h, init_o, ref_h, ref_o, ref_single;
  std::vector<DecoderLayer> decoder;
  Mlp hbox_head, obox_head;
  Linear cls_head, act_head;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
};

}  // namespace mstr
