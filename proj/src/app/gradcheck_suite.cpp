#include "mstr/app/gradcheck_suite.hpp"

#include <chrono>

#include "mstr/attention/attention.hpp"
#include "mstr/data/scene.hpp"
#include "mstr/matching/boxes.hpp"
#include "mstr/matching/losses.hpp"
#include "mstr/model/model.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values with |x| >= 0.2, away from the kinks of relu / abs.
Tensor off_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return t;
}

// Pixel coordinates in [-1, extent] whose fractional part avoids the bilinear kinks.
double off_kink(Rng& rng, int extent) { return rng.integer(-1, extent - 1) + rng.uniform(0.15, 0.85); }

Var leaf(Tensor t) { return Var::leaf(std::move(t)); }

// Scalarizes an op output with fixed random weights so every output entry
// contributes a distinct gradient.
struct Projector {
  Tensor weights;
  Var operator()(const Var& out) const { return ops::sum(ops::mul(out, Var::constant(weights))); }
};

Projector projector_for(const Shape& shape, Rng& rng) { return {uniform(shape, rng, 0.5, 1.5)}; }

GradCheckResult check(const std::string& name, const RunConfig& cfg, const std::vector<Var>& inputs,
                      const std::function<Var()>& build, Rng& rng, std::size_t max_entries = 0) {
  const Var probe = build();
  const Projector p = projector_for(probe.shape(), rng);
  return check_gradients(
      name, [&] { return p(build()); }, inputs, cfg.gradcheck.tolerance, cfg.gradcheck.step, max_entries);
}

using Unary = Var (*)(const Var&);

GradcheckCase unary_case(const std::string& op, Unary f, bool avoid_zero, double lo = -1.0, double hi = 1.0) {
  return {"core_numerics", op, [=](const RunConfig& cfg, std::uint64_t seed) {
            Rng rng(seed);
            const Shape s{rng.integer(2, 4), rng.integer(2, 5)};
            Var x = leaf(avoid_zero ? off_zero(s, rng) : uniform(s, rng, lo, hi));
            return check(op, cfg, {x}, [&] { return f(x); }, rng);
          }};
}

AttentionConfig small_attention(Rng& rng, int levels) {
  AttentionConfig a;
  a.heads = rng.integer(1, 2);
  a.points = rng.integer(1, 2);
  a.levels = levels;
  a.channels = 4 * a.heads;
  return a;
}

std::vector<LevelShape> small_shapes(int levels) {
  std::vector<LevelShape> shapes;
  int start = 0;
  for (int l = 0; l < levels; ++l) {
    const int side = 4 >> l;
    shapes.push_back({side, side + 1, start});
    start += side * (side + 1);
  }
  return shapes;
}

int total_tokens(const std::vector<LevelShape>& shapes) {
  int n = 0;
  for (const auto& s : shapes) n += s.tokens();
  return n;
}

std::vector<GradcheckCase> build_cases() {
  std::vector<GradcheckCase> cases;
  auto add = [&](std::string module, std::string op, std::function<GradCheckResult(const RunConfig&, Rng&)> f) {
    cases.push_back({module, op, [f, op](const RunConfig& cfg, std::uint64_t seed) {
                       Rng rng(seed);
                       GradCheckResult r = f(cfg, rng);
                       r.name = op;
                       return r;
                     }});
  };

  // core_numerics
  add("core_numerics", "add", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng)), b = leaf(uniform({3, 4}, rng));
    return check("add", cfg, {a, b}, [&] { return ops::add(a, b); }, rng);
  });
  add("core_numerics", "add_row_broadcast", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng)), b = leaf(uniform({4}, rng));
    return check("add_row_broadcast", cfg, {a, b}, [&] { return ops::add(a, b); }, rng);
  });
  add("core_numerics", "sub", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({2, 5}, rng)), b = leaf(uniform({2, 5}, rng));
    return check("sub", cfg, {a, b}, [&] { return ops::sub(a, b); }, rng);
  });
  add("core_numerics", "mul", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 3}, rng)), b = leaf(uniform({3, 3}, rng));
    return check("mul", cfg, {a, b}, [&] { return ops::mul(a, b); }, rng);
  });
  add("core_numerics", "scale", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 2}, rng));
    return check("scale", cfg, {a}, [&] { return ops::scale(a, -1.7); }, rng);
  });
  add("core_numerics", "add_scalar", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 2}, rng));
    return check("add_scalar", cfg, {a}, [&] { return ops::add_scalar(a, 0.3); }, rng);
  });
  cases.push_back(unary_case("relu", &ops::relu, true));
  cases.push_back(unary_case("sigmoid", &ops::sigmoid, false, -4.0, 4.0));
  cases.push_back(unary_case("inverse_sigmoid", [](const Var& y) { return ops::inverse_sigmoid(y); }, false, 0.05,
                             0.95));
  cases.push_back(unary_case("abs", &ops::abs, true));
  add("core_numerics", "sum_of", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({2, 3}, rng)), b = leaf(uniform({2, 3}, rng)), c = leaf(uniform({2, 3}, rng));
    return check("sum_of", cfg, {a, b, c}, [&] { return ops::sum_of({a, b, c}); }, rng);
  });
  add("core_numerics", "sum", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng));
    return check("sum", cfg, {a}, [&] { return ops::sum(a); }, rng);
  });
  add("core_numerics", "mean", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng));
    return check("mean", cfg, {a}, [&] { return ops::mean(a); }, rng);
  });
  add("core_numerics", "row_sum", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng));
    return check("row_sum", cfg, {a}, [&] { return ops::row_sum(a); }, rng);
  });
  add("core_numerics", "matmul", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng)), b = leaf(uniform({4, 2}, rng));
    return check("matmul", cfg, {a, b}, [&] { return ops::matmul(a, b); }, rng);
  });
  add("core_numerics", "linear", [](const RunConfig& cfg, Rng& rng) {
    Var x = leaf(uniform({3, 4}, rng)), w = leaf(uniform({5, 4}, rng)), b = leaf(uniform({5}, rng));
    return check("linear", cfg, {x, w, b}, [&] { return ops::linear(x, w, b); }, rng);
  });
  add("core_numerics", "transpose", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng));
    return check("transpose", cfg, {a}, [&] { return ops::transpose(a); }, rng);
  });
  add("core_numerics", "softmax", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({2, 3, 4}, rng, -2.0, 2.0));
    return check("softmax", cfg, {a}, [&] { return ops::add(ops::softmax(a, 1), ops::softmax(a, 2)); }, rng);
  });
  add("core_numerics", "layer_norm", [](const RunConfig& cfg, Rng& rng) {
    Var x = leaf(uniform({3, 6}, rng)), g = leaf(uniform({6}, rng, 0.5, 1.5)), b = leaf(uniform({6}, rng));
    return check("layer_norm", cfg, {x, g, b}, [&] { return ops::layer_norm(x, g, b); }, rng);
  });
  add("core_numerics", "reshape", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 4}, rng));
    return check("reshape", cfg, {a}, [&] { return ops::reshape(a, {2, 6}); }, rng);
  });
  add("core_numerics", "slice_cols", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 5}, rng));
    return check("slice_cols", cfg, {a}, [&] { return ops::slice_cols(a, 1, 3); }, rng);
  });
  add("core_numerics", "slice_rows", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({5, 3}, rng));
    return check("slice_rows", cfg, {a}, [&] { return ops::slice_rows(a, 2, 2); }, rng);
  });
  add("core_numerics", "concat_cols", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({3, 2}, rng)), b = leaf(uniform({3, 4}, rng));
    return check("concat_cols", cfg, {a, b}, [&] { return ops::concat_cols({a, b}); }, rng);
  });
  add("core_numerics", "concat_rows", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({2, 3}, rng)), b = leaf(uniform({4, 3}, rng));
    return check("concat_rows", cfg, {a, b}, [&] { return ops::concat_rows({a, b}); }, rng);
  });
  add("core_numerics", "gather_rows", [](const RunConfig& cfg, Rng& rng) {
    Var a = leaf(uniform({4, 3}, rng));
    return check("gather_rows", cfg, {a}, [&] { return ops::gather_rows(a, {2, 0, 2}); }, rng);
  });
  add("core_numerics", "conv2d", [](const RunConfig& cfg, Rng& rng) {
    Var x = leaf(uniform({2, 6, 5}, rng)), w = leaf(uniform({3, 2, 3, 3}, rng)), b = leaf(uniform({3}, rng));
    return check("conv2d", cfg, {x, w, b}, [&] { return ops::conv2d(x, w, b, 2, 1); }, rng);
  });
  add("core_numerics", "channels_last", [](const RunConfig& cfg, Rng& rng) {
    Var x = leaf(uniform({3, 2, 4}, rng));
    return check("channels_last", cfg, {x}, [&] { return ops::channels_last(x); }, rng);
  });
  add("core_numerics", "bce_with_logits", [](const RunConfig& cfg, Rng& rng) {
    Var x = leaf(uniform({3, 4}, rng, -3.0, 3.0));
    Tensor t({3, 4});
    for (auto& v : t.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    const Tensor w = uniform({3, 4}, rng, 0.1, 1.0);
    return check("bce_with_logits", cfg, {x}, [&] { return ops::bce_with_logits(x, t, w); }, rng);
  });

  // feature_maps
  add("feature_maps", "bilinear_sample", [](const RunConfig& cfg, Rng& rng) {
    const LevelShape level{4, 5, 0};
    Var f = leaf(uniform({level.tokens(), 3}, rng));
    Var coord = leaf(Tensor({2}, {off_kink(rng, level.width), off_kink(rng, level.height)}));
    return check("bilinear_sample", cfg, {f, coord}, [&] { return bilinear_sample(f, level, coord); }, rng);
  });

  // deformable_attention
  add("deformable_attention", "sampling_locations", [](const RunConfig& cfg, Rng& rng) {
    const auto shapes = small_shapes(2);
    const int m = 2, k = 2, nq = 3;
    Var refs = leaf(uniform({nq, 2}, rng, 0.1, 0.9));
    Var off = leaf(uniform({nq, m * 2 * k * 2}, rng));
    return check("sampling_locations", cfg, {refs, off}, [&] { return sampling_locations(refs, off, shapes, m, k); },
                 rng);
  });
  add("deformable_attention", "deform_sample", [](const RunConfig& cfg, Rng& rng) {
    const auto shapes = small_shapes(2);
    const int m = 2, k = 2, nq = 2, c = 4;
    Var value = leaf(uniform({total_tokens(shapes), c}, rng));
    Tensor loc({nq, m * 2 * k * 2});
    for (int q = 0; q < nq; ++q)
      for (int mm = 0; mm < m; ++mm)
        for (int l = 0; l < 2; ++l)
          for (int kk = 0; kk < k; ++kk) {
            const int s = (mm * 2 + l) * k + kk;
            loc.at(q, 2 * s) = off_kink(rng, shapes[l].width);
            loc.at(q, 2 * s + 1) = off_kink(rng, shapes[l].height);
          }
    Var locations = leaf(loc);
    Var weights = leaf(uniform({nq, m * 2 * k}, rng, 0.1, 1.0));
    return check("deform_sample", cfg, {value, locations, weights},
                 [&] { return deform_sample(value, shapes, locations, weights, m, k); }, rng);
  });
  add("deformable_attention", "ss_attention", [](const RunConfig& cfg, Rng& rng) {
    ParameterStore store;
    SSAttention attn(store, "ss", 4, 2, rng);
    Var q = leaf(uniform({2, 4}, rng)), keys = leaf(uniform({3, 4}, rng));
    std::vector<Var> inputs{q, keys};
    for (auto& p : store.parameters()) inputs.push_back(p.var);
    return check("ss_attention", cfg, inputs, [&] { return attn.forward(q, keys).out; }, rng);
  });
  add("deformable_attention", "ms_deform_attn", [](const RunConfig& cfg, Rng& rng) {
    ParameterStore store;
    const AttentionConfig a = small_attention(rng, 2);
    MSDeformAttention attn(store, "msda", a, rng);
    // non-zero offset weights so the query gradient also flows through the sampling geometry
    attn.offset_proj.weight.mutable_value() = uniform(attn.offset_proj.weight.shape(), rng, -0.3, 0.3);
    const auto shapes = small_shapes(2);
    Var q = leaf(uniform({2, a.channels}, rng)), refs = leaf(uniform({2, 2}, rng, 0.1, 0.9));
    Var value = leaf(uniform({total_tokens(shapes), a.channels}, rng));
    std::vector<Var> inputs{q, refs, value};
    for (auto& p : store.parameters()) inputs.push_back(p.var);
    return check("ms_deform_attn", cfg, inputs, [&] { return attn.forward(q, refs, value, shapes).out; }, rng);
  });
  add("deformable_attention", "dual_entity_attn", [](const RunConfig& cfg, Rng& rng) {
    ParameterStore store;
    const AttentionConfig a = small_attention(rng, 2);
    DualEntityAttention attn(store, "de", a, rng);
    const auto shapes = small_shapes(2);
    Var q = leaf(uniform({2, a.channels}, rng));
    Var h = leaf(uniform({2, 2}, rng, 0.1, 0.9)), o = leaf(uniform({2, 2}, rng, 0.1, 0.9));
    Var value = leaf(uniform({total_tokens(shapes), a.channels}, rng));
    std::vector<Var> inputs{q, h, o, value};
    for (auto& p : store.parameters()) inputs.push_back(p.var);
    return check("dual_entity_attn", cfg, inputs, [&] {
      const auto out = attn.forward(q, h, o, value, shapes);
      return ops::concat_cols({out.human.out, out.object.out});
    }, rng);
  });
  add("deformable_attention", "entity_conditioned_context_attn", [](const RunConfig& cfg, Rng& rng) {
    ParameterStore store;
    const AttentionConfig a = small_attention(rng, 2);
    ContextAttention attn(store, "ec", a, ContextReference::Midpoint, rng);
    const auto shapes = small_shapes(2);
    Var q = leaf(uniform({2, a.channels}, rng));
    Var h = leaf(uniform({2, 2}, rng, 0.1, 0.9)), o = leaf(uniform({2, 2}, rng, 0.1, 0.9));
    Var value = leaf(uniform({total_tokens(shapes), a.channels}, rng));
    std::vector<Var> inputs{q, h, o, value};
    for (auto& p : store.parameters()) inputs.push_back(p.var);
    return check("entity_conditioned_context_attn", cfg, inputs,
                 [&] { return attn.forward(q, h, o, value, shapes).attn.out; }, rng);
  });

  // model
  add("model", "prediction_heads", [](const RunConfig& cfg, Rng& rng) {
    Var u = leaf(uniform({3, 4}, rng, -2.0, 2.0)), refs = leaf(uniform({3, 2}, rng, 0.1, 0.9));
    return check("prediction_heads", cfg, {u, refs}, [&] { return boxes_from_head(u, refs); }, rng);
  });
  add("model", "full_model", [](const RunConfig& cfg, Rng& rng) {
    ModelConfig mc = cfg.model;
    mc.queries = 2;
    mc.decoder_layers = 1;
    mc.image_size = cfg.gradcheck.model_image_size;
    Model model(mc, rng.next());
    SceneConfig sc = cfg.data;
    sc.image_size = mc.image_size;
    sc.pairs = 1;
    sc.min_side_px = 2;
    const Scene scene = generate_scene(rng.next(), sc.for_index(rng.integer(0, 8)));
    std::vector<Assignment> fixed;
    for (const auto& layer : model.forward(scene.image).layers)
      fixed.push_back(set_loss(scene.triplets, layer).assignment);
    std::vector<Var> inputs;
    for (auto& p : model.parameters().parameters()) inputs.push_back(p.var);
    auto build = [&] {
      const ModelOutput out = model.forward(scene.image);
      std::vector<Var> terms;
      for (std::size_t l = 0; l < out.layers.size(); ++l)
        terms.push_back(compute_losses(scene.triplets, out.layers[l], fixed[l]).total);
      return ops::sum_of(terms);
    };
    return check_gradients("full_model", build, inputs, cfg.gradcheck.tolerance, cfg.gradcheck.step,
                           static_cast<std::size_t>(cfg.gradcheck.max_entries_per_tensor));
  });

  // matching_losses
  add("matching_losses", "giou", [](const RunConfig& cfg, Rng& rng) {
    // overlapping boxes with distinct edges
    Tensor a({3, 4}), b({3, 4});
    for (int i = 0; i < 3; ++i) {
      a.at(i, 0) = rng.uniform(0.3, 0.7);
      a.at(i, 1) = rng.uniform(0.3, 0.7);
      a.at(i, 2) = rng.uniform(0.2, 0.4);
      a.at(i, 3) = rng.uniform(0.2, 0.4);
      b.at(i, 0) = a.at(i, 0) + rng.uniform(0.03, 0.1);
      b.at(i, 1) = a.at(i, 1) - rng.uniform(0.03, 0.1);
      b.at(i, 2) = a.at(i, 2) * rng.uniform(1.3, 1.6);
      b.at(i, 3) = a.at(i, 3) * rng.uniform(0.5, 0.7);
    }
    Var va = leaf(a), vb = leaf(b);
    return check("giou", cfg, {va, vb}, [&] { return giou_rows(va, vb); }, rng);
  });
  add("matching_losses", "compute_losses", [](const RunConfig& cfg, Rng& rng) {
    const int n = 3, classes = 3, actions = 3;
    PredictionSet p;
    Var hb = leaf(uniform({n, 4}, rng, 0.3, 0.6)), ob = leaf(uniform({n, 4}, rng, 0.3, 0.6));
    Var cl = leaf(uniform({n, classes}, rng, -2.0, 2.0)), al = leaf(uniform({n, actions}, rng, -2.0, 2.0));
    p.human_boxes = hb;
    p.object_boxes = ob;
    p.class_logits = cl;
    p.action_logits = al;
    std::vector<HOITriplet> gts{{{0.4, 0.5, 0.3, 0.4}, {0.6, 0.45, 0.2, 0.3}, 1, {0, 1, 0}},
                                {{0.5, 0.4, 0.25, 0.35}, {0.35, 0.6, 0.3, 0.2}, 2, {1, 0, 1}}};
    const Assignment sigma = set_loss(gts, p).assignment;
    return check_gradients("compute_losses", [&] { return compute_losses(gts, p, sigma).total; }, {hb, ob, cl, al},
                           cfg.gradcheck.tolerance, cfg.gradcheck.step);
  });
  return cases;
}

}  // namespace

const std::vector<GradcheckCase>& gradcheck_cases() {
  static const std::vector<GradcheckCase> cases = build_cases();
  return cases;
}

std::vector<GradcheckRow> run_gradcheck_suite(const RunConfig& cfg, std::uint64_t seed) {
  std::vector<GradcheckRow> rows;
  std::uint64_t case_seed = seed;
  for (const auto& c : gradcheck_cases()) {
    const auto t0 = std::chrono::steady_clock::now();
    const GradCheckResult r = c.run(cfg, case_seed++);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({c.module, c.op, r.max_rel_error, r.passed, r.checked, r.kinks, secs});
  }
  return rows;
}

GradCheckResult corrupted_backward_check(const RunConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Var x = leaf(uniform({2, 3}, rng));
  auto broken_square = [](const Var& v) {
    Tensor out = v.value();
    for (auto& e : out.values()) e *= e;
    return Var::make(std::move(out), "broken_square", {v}, [](detail::Node& self) {
      const Tensor& in = self.inputs[0]->value;
      if (Tensor* g = input_grad(self, 0))
        for (std::size_t i = 0; i < in.size(); ++i) (*g)[i] += 4.0 * in[i] * self.grad[i];  // should be 2x
    });
  };
  return check("broken_square", cfg, {x}, [&] { return broken_square(x); }, rng);
}

}  // namespace mstr
