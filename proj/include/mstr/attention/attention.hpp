#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "mstr/features/pyramid.hpp"
#include "mstr/numerics/parameter.hpp"

namespace mstr {

struct AttentionConfig {
  int heads = 2;     // M
  int points = 2;    // K, per head and level
  int levels = 3;    // L
  int channels = 32; // C

  int head_dim() const { return channels / heads; }
  int samples_per_head() const { return levels * points; }
  void validate() const;
};

// Geometry of one query's deformable attention.
struct SamplingGrid {
  NormalizedPoint reference;
  Tensor offsets;  // [M, L, K, 2], in pixels of each level
  Tensor weights;  // [M, L, K], sums to 1 per head
};

// p_mlk = rescale_to_level(reference, level l) + offset_mlk, as [M, L, K, 2] pixel coordinates.
Tensor compute_sampling_locations(const SamplingGrid& grid, const std::vector<LevelShape>& shapes);

// Differentiable batched form: refs [Nq, 2] normalized, offsets [Nq, M*L*K*2]
// -> pixel locations [Nq, M*L*K*2]. Layout of the last axis is ((m*L + l)*K + k)*2 + {x, y}.
Var sampling_locations(const Var& refs, const Var& offsets, const std::vector<LevelShape>& shapes, int heads,
                       int points);

// Weighted bilinear gather. value: [S, C] flattened levels (head m owns columns
// [m*C/M, (m+1)*C/M)), locations: [Nq, M*L*K*2], weights: [Nq, M*L*K].
// Returns [Nq, C]: per head sum_{l,k} A_mlk * value_m(p_mlk).
Var deform_sample(const Var& value, const std::vector<LevelShape>& shapes, const Var& locations, const Var& weights,
                  int heads, int points);

// Single-scale multi-head attention over an explicit key set:
// f = sum_m W_m [ sum_k A_mk W'_m x_k ],  A_mk = softmax_k(z^T U_m^T V_m x_k / sqrt(C_v)).
class SSAttention {
 public:
  SSAttention() = default;
  SSAttention(ParameterStore& store, const std::string& name, int channels, int heads, Rng& rng);

  struct Output {
    Var out;              // [Nq, C]
    std::vector<Var> weights;  // per head, [Nq, Nk]
  };
  Output forward(const Var& queries, const Var& keys, const Var& values) const;
  Output forward(const Var& queries, const Var& keys) const { return forward(queries, keys, keys); }
  // Keys given as a sequence of [1, C] rows; an empty sequence is an ArgumentError.
  Output forward(const Var& queries, const std::vector<Var>& keys) const;

  Linear query_proj;   // U
  Linear key_proj;     // V
  Linear value_proj;   // W'
  Linear output_proj;  // W
  int heads = 1;
};

// Multi-scale deformable attention. Offsets and weights are linear projections of
// the query; weights are normalized jointly over the L*K samples of each head.
class MSDeformAttention {
 public:
  MSDeformAttention() = default;
  MSDeformAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg, Rng& rng);

  struct Output {
    Var out;        // [Nq, C]
    Var locations;  // [Nq, M*L*K*2] level pixel coordinates
    Var weights;    // [Nq, M*L*K]
  };
  // query: [Nq, C]; refs: [Nq, 2] normalized; value_input: [S, C] flattened pyramid.
  Output forward(const Var& query, const Var& refs, const Var& value_input,
                 const std::vector<LevelShape>& shapes) const;

  // Deformable attention with explicit sampling geometry (no offset/weight prediction).
  Var attend(const Var& value_input, const std::vector<LevelShape>& shapes, const Var& locations,
             const Var& weights) const;

  // Normalized attention weights for the given queries, [Nq, M*L*K].
  Var attention_weights(const Var& query) const;

  SamplingGrid grid_for(const Output& out, const Var& refs, int q, const std::vector<LevelShape>& shapes) const;

  const AttentionConfig& config() const { return cfg_; }

  Linear offset_proj;
  Linear weight_proj;
  Linear value_proj;
  Linear output_proj;

 private:
  AttentionConfig cfg_;
};

// Dual-Entity attention: z^h, z^o are linear projections of z; each drives its own
// deformable attention anchored at the human resp. object reference point.
class DualEntityAttention {
 public:
  DualEntityAttention() = default;
  DualEntityAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg, Rng& rng);

  struct Output {
    Var z_human, z_object;
    MSDeformAttention::Output human, object;
  };
  Output forward(const Var& query, const Var& human_refs, const Var& object_refs, const Var& value_input,
                 const std::vector<LevelShape>& shapes) const;

  Linear human_proj;
  Linear object_proj;
  MSDeformAttention human;
  MSDeformAttention object;
};

enum class ContextReference { Midpoint, Projected };

// Context attention. With Midpoint the reference is ((h_x+o_x)/2, (h_y+o_y)/2)
// (entity-conditioned); with Projected it is sigmoid(linear(z)), z being
// `reference_query` when given and the attention query otherwise.
class ContextAttention {
 public:
  ContextAttention() = default;
  ContextAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                   ContextReference mode, Rng& rng);

  struct Output {
    Var reference;  // [Nq, 2]
    MSDeformAttention::Output attn;
  };
  Output forward(const Var& query, const Var& human_refs, const Var& object_refs, const Var& value_input,
                 const std::vector<LevelShape>& shapes, const Var& reference_query = Var()) const;

  ContextReference mode = ContextReference::Midpoint;
  MSDeformAttention attn;
  Linear reference_proj;  // only for Projected
};

Var midpoint(const Var& a, const Var& b);

struct KeyCount {
  long dense = 0;    // sum_l H_l W_l
  long sampled = 0;  // L * M * K
};
KeyCount key_count(const AttentionConfig& cfg, const std::vector<LevelShape>& shapes);

// Per-query record of one deformable attention: reference, all sampling
// locations (normalized image coordinates) and weights.
struct AttentionRecord {
  std::string stream;
  NormalizedPoint reference;
  std::vector<NormalizedPoint> locations;  // M*L*K entries, (m, l, k) row-major
  std::vector<double> weights;
  int heads = 0, levels = 0, points = 0;
};

AttentionRecord make_record(const std::string& stream, const MSDeformAttention::Output& out, const Var& refs, int q,
                            const AttentionConfig& cfg, const std::vector<LevelShape>& shapes);
nlohmann::json to_json(const AttentionRecord& r);

}  // namespace mstr
