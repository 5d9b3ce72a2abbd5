#include <algorithm>
#include <cmath>
#include <string>

#include "helpers.hpp"
#include "mstr/app/gradcheck_suite.hpp"
#include "mstr/app/training.hpp"
#include "mstr/errors.hpp"
#include "mstr/model/model.hpp"
#include "mstr/numerics/gradcheck.hpp"
#include "mstr/numerics/ops.hpp"

using namespace mstr;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

ModelConfig small_config(const std::string& preset = "mstr") {
  ModelConfig c = preset_config(preset);
  c.image_size = 32;
  c.channels = 8;
  c.queries = 4;
  c.ffn_dim = 16;
  return c;
}

ModelConfig variant_config(DecoderVariant v) {
  ModelConfig c = small_config();
  c.variant = v;
  if (v == DecoderVariant::NaiveDeformable) c.toggles = {true, true, false, false};
  if (v == DecoderVariant::DoubleStream || v == DecoderVariant::StandardContext) c.toggles.entity_context = false;
  return c;
}

const DecoderVariant kVariants[] = {DecoderVariant::MergeOutput, DecoderVariant::MergeInput,
                                    DecoderVariant::DoubleStream, DecoderVariant::NaiveDeformable,
                                    DecoderVariant::StandardContext};

Tensor image(std::uint64_t seed, int size = 32) {
  Rng rng(seed);
  return random_tensor({3, size, size}, rng, 0, 1);
}

Tensor permute_rows(const Tensor& t, const std::vector<int>& perm) {
  Tensor out(t.shape());
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(perm[r], c);
  return out;
}

std::vector<Tensor> prediction_tensors(const PredictionSet& p) {
  return {p.human_boxes.value(), p.object_boxes.value(), p.class_logits.value(), p.action_logits.value()};
}

void copy_linear(const Linear& from, Linear& to) {
  to.weight.mutable_value() = from.weight.value();
  to.bias.mutable_value() = from.bias.value();
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation names the violated constraint") {
    ModelConfig c = small_config();
    c.toggles.dual_entity = false;
    try {
      c.validate();
      FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("EC requires DE") != std::string::npos);
    }
    c = small_config();
    c.image_size = 40;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.channels = 10;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.variant = DecoderVariant::NaiveDeformable;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(parse_variant("triple_stream"), ConfigError);
    CHECK_THROWS_AS(preset_config("huge"), ConfigError);
    for (const char* p : {"qpic", "ss", "ss+de", "ss+de+ec", "ms", "ms+de", "ms+de+ec", "mstr"})
      CHECK_NOTHROW(preset_config(p).validate());
  }

  TEST_CASE("config round trips through JSON") {
    ModelConfig c = small_config("ss+de");
    c.points = 3;
    nlohmann::json j = c;
    CHECK(j.get<ModelConfig>() == c);
    j["bogus"] = 1;
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }

  TEST_CASE("encoder with zero layers is the identity") {
    ModelConfig c = small_config();
    c.encoder_layers = 0;
    Model m(c, 1);
    const MultiScalePyramid p = m.pyramid(Var::constant(image(2)));
    CHECK(max_abs_diff(m.encode(p).value(), p.flat_features().value()) == 0.0);
  }

  TEST_CASE("encoder preserves the pyramid shapes") {
    ModelConfig c = small_config();
    c.encoder_layers = 2;
    Model m(c, 3);
    const MultiScalePyramid p = m.pyramid(Var::constant(image(4)));
    const Tensor enc = m.encode(p).value();
    CHECK(enc.rows() == 8 * 8 + 4 * 4 + 2 * 2);
    CHECK(enc.cols() == 8);
  }

  TEST_CASE("token references sit on pixel centers") {
    const std::vector<LevelShape> shapes{{2, 4, 0}, {1, 2, 8}};
    const Tensor r = Model::token_references(shapes);
    CHECK(r.at(0, 0) == 0.125);
    CHECK(r.at(0, 1) == 0.25);
    CHECK(r.at(7, 0) == 0.875);
    CHECK(r.at(7, 1) == 0.75);
    CHECK(r.at(9, 0) == 0.75);
    CHECK(r.at(9, 1) == 0.5);
  }

  TEST_CASE("degenerate encoder layer is a pointwise transform of each token") {
    ModelConfig c = small_config("ss");
    c.points = 1;
    c.heads = 1;
    c.encoder_layers = 1;
    Model m(c, 5);
    EncoderLayer& layer = m.encoder.front();
    layer.deform.offset_proj.weight.mutable_value().fill(0.0);
    layer.deform.offset_proj.bias.mutable_value().fill(0.0);
    const MultiScalePyramid p = m.pyramid(Var::constant(image(6)));
    REQUIRE(p.levels.size() == 1);
    const Var src = p.flat_features();
    const Var expected = layer.ffn(
        layer.norm(ops::add(src, layer.deform.output_proj(layer.deform.value_proj(src)))));
    CHECK(max_abs_diff(m.encode(p).value(), expected.value()) <= 1e-10);
  }

  TEST_CASE("init_references examples") {
    Model m(small_config(), 7);
    for (Linear* l : {&m.ref_h, &m.ref_o}) {
      l->weight.mutable_value().fill(0.0);
      l->bias.mutable_value().fill(0.0);
    }
    Model::References r = m.init_references();
    for (double v : r.human.value().values()) CHECK(v == 0.5);
    for (double v : r.object.value().values()) CHECK(v == 0.5);

    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      for (Linear* l : {&m.ref_h, &m.ref_o})
        for (auto& v : l->weight.mutable_value().values()) v = rng.uniform(-3, 3);
      r = m.init_references();
      for (const Var& refs : {r.human, r.object})
        for (double v : refs.value().values()) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
      const Tensor& h = r.human.value();
      for (int a = 0; a < h.rows(); ++a)
        for (int b = a + 1; b < h.rows(); ++b)
          CHECK(std::max(std::fabs(h.at(a, 0) - h.at(b, 0)), std::fabs(h.at(a, 1) - h.at(b, 1))) > 1e-9);
    }
  }

  TEST_CASE("a single query produces finite, shape-correct outputs for every variant") {
    for (DecoderVariant v : kVariants) {
      ModelConfig c = variant_config(v);
      c.queries = 1;
      Model m(c, 9);
      const ModelOutput out = m.forward(image(10));
      REQUIRE(out.layers.size() == 2);
      const PredictionSet& p = out.final();
      CHECK(p.size() == 1);
      CHECK(p.class_logits.value().cols() == c.object_classes);
      CHECK(p.action_logits.value().cols() == c.actions);
      for (const Tensor& t : prediction_tensors(p))
        for (double x : t.values()) CHECK(std::isfinite(x));
    }
  }

  TEST_CASE("permuting the queries permutes the predictions") {
    const std::vector<int> perm{2, 0, 3, 1};
    for (DecoderVariant v : kVariants) {
      INFO(to_string(v));
      Model m(variant_config(v), 11);
      const Tensor img = image(12);
      const ModelOutput a = m.forward(img);
      m.query_embedding.mutable_value() = permute_rows(m.query_embedding.value(), perm);
      const ModelOutput b = m.forward(img);
      const auto ta = prediction_tensors(a.final()), tb = prediction_tensors(b.final());
      for (std::size_t i = 0; i < ta.size(); ++i) CHECK(max_abs_diff(permute_rows(ta[i], perm), tb[i]) <= 1e-10);
    }
  }

  TEST_CASE("merging self-attention outputs differs from merging inputs") {
    Rng rng(13);
    ParameterStore store;
    SABlock sa(store, "sa", 8, 2, rng);
    const Var a = Var::constant(random_tensor({2, 8}, rng)), b = Var::constant(random_tensor({2, 8}, rng));
    const Tensor merged_outputs = ops::add(sa(a), sa(b)).value();
    const Tensor merged_inputs = sa(ops::add(a, b)).value();
    CHECK(max_abs_diff(merged_outputs, merged_inputs) > 1e-3);

    // whole decoders with every shared parameter tied
    Model out_model(variant_config(DecoderVariant::MergeOutput), 14);
    Model in_model(variant_config(DecoderVariant::MergeInput), 14);
    for (auto& p : in_model.parameters().parameters())
      if (const Parameter* q = out_model.parameters().find(p.name)) p.var.mutable_value() = q->var.value();
    const Tensor img = image(15);
    const auto po = prediction_tensors(out_model.forward(img).final());
    const auto pi = prediction_tensors(in_model.forward(img).final());
    CHECK(max_abs_diff(po[2], pi[2]) > 1e-6);
  }

  TEST_CASE("zero box head outputs put the centers on the reference points") {
    Rng rng(16);
    const Tensor u({1000, 4}, 0.0);
    const Tensor refs = random_tensor({1000, 2}, rng, 0, 1);
    const Tensor boxes = boxes_from_head(Var::constant(u), Var::constant(refs)).value();
    for (int i = 0; i < 1000; ++i) {
      CHECK(std::fabs(boxes.at(i, 0) - refs.at(i, 0)) <= 1e-12);
      CHECK(std::fabs(boxes.at(i, 1) - refs.at(i, 1)) <= 1e-12);
      CHECK(boxes.at(i, 2) == 0.5);
    }
    // the freshly initialized model has zero last box-head layers
    Model m(small_config(), 17);
    const ModelOutput out = m.forward(image(18));
    for (int q = 0; q < 4; ++q) {
      CHECK(std::fabs(out.final().human_box(q).cx - out.human_refs.value().at(q, 0)) <= 1e-12);
      CHECK(std::fabs(out.final().object_box(q).cy - out.object_refs.value().at(q, 1)) <= 1e-12);
    }
  }

  TEST_CASE("box head hand case") {
    const Tensor b =
        boxes_from_head(Var::constant(Tensor({1, 4}, {1, 0, 0, 0})), Var::constant(Tensor({1, 2}, {0.5, 0.5})))
            .value();
    CHECK(std::fabs(b[0] - 0.7310585786300049) <= 1e-15);
    CHECK(b[1] == 0.5);
  }

  TEST_CASE("predictions are bounded") {
    Model m(small_config(), 19);
    Rng rng(20);
    for (Mlp* head : {&m.hbox_head, &m.obox_head})
      for (auto& v : head->layers.back().weight.mutable_value().values()) v = rng.uniform(-1, 1);
    for (int trial = 0; trial < 5; ++trial) {
      const ModelOutput out = m.forward(image(21 + trial));
      for (const Var& boxes : {out.final().human_boxes, out.final().object_boxes})
        for (double v : boxes.value().values()) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
      for (const Tensor& probs : {out.final().class_probs(), out.final().action_probs()})
        for (double v : probs.values()) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
    }
  }

  TEST_CASE("forward is deterministic and always yields N entries") {
    Model a(small_config(), 30), b(small_config(), 30);
    const Tensor zero({3, 32, 32}, 0.0);
    for (const Tensor& img : {image(31), zero}) {
      const auto pa = prediction_tensors(a.forward(img).final());
      const auto pb = prediction_tensors(b.forward(img).final());
      for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].rows() == 4);
        CHECK(max_abs_diff(pa[i], pb[i]) == 0.0);
      }
    }
  }

  TEST_CASE("every decoder layer yields auxiliary predictions") {
    ModelConfig c = small_config();
    c.decoder_layers = 3;
    Model m(c, 32);
    const ModelOutput out = m.forward(image(33));
    CHECK(out.layers.size() == 3);
    CHECK(out.traces.size() == 3);
  }

  TEST_CASE("the naive variant reduces to plain deformable attention per query") {
    Model m(variant_config(DecoderVariant::NaiveDeformable), 34);
    const Tensor img = image(35);
    const ModelOutput out = m.forward(img);

    // baseline assembled from standalone blocks with copied weights
    Rng rng(36);
    ParameterStore store;
    const MultiScalePyramid pyr = m.pyramid(Var::constant(img));
    const Var memory = m.encode(pyr);
    const Var refs = ops::sigmoid(m.ref_single(m.query_embedding));
    Var f = m.query_embedding;
    for (std::size_t d = 0; d < m.decoder.size(); ++d) {
      const DecoderLayer& layer = m.decoder[d];
      MSDeformAttention plain(store, "plain" + std::to_string(d), m.attention_config(), rng);
      copy_linear(layer.deform.offset_proj, plain.offset_proj);
      copy_linear(layer.deform.weight_proj, plain.weight_proj);
      copy_linear(layer.deform.value_proj, plain.value_proj);
      copy_linear(layer.deform.output_proj, plain.output_proj);
      const Var q = layer.sa(f);
      const Var cross = plain.forward(q, refs, memory, pyr.shapes()).out;
      CHECK(max_abs_diff(cross.value(), out.traces[d].single.out.value()) <= 1e-10);
      f = layer.ffn(layer.norm(ops::add(q, cross)));
    }
    const PredictionSet p = m.predict(f, f, f, refs, refs);
    const auto expected = prediction_tensors(p), actual = prediction_tensors(out.final());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(max_abs_diff(expected[i], actual[i]) <= 1e-10);
  }

  TEST_CASE("context references are entity midpoints in a forward pass") {
    Model m(small_config(), 37);
    const ModelOutput out = m.forward(image(38));
    for (const auto& t : out.traces) {
      const Tensor& c = t.context_refs.value();
      for (int q = 0; q < 4; ++q)
        for (int d = 0; d < 2; ++d)
          CHECK(std::fabs(c.at(q, d) - 0.5 * (out.human_refs.value().at(q, d) + out.object_refs.value().at(q, d))) <=
                1e-12);
    }
  }

  TEST_CASE("model heads and the small full model pass their gradient checks") {
    RunConfig cfg;
    for (const auto& c : gradcheck_cases()) {
      if (c.module != "model") continue;
      for (std::uint64_t seed = 1; seed <= 2; ++seed) {
        const GradCheckResult r = c.run(cfg, seed);
        INFO(c.op << " seed " << seed << " err " << r.max_rel_error << " kinks " << r.kinks);
        CHECK(r.passed);
      }
    }
  }

  TEST_CASE("toy model forward and total-loss gradient check") {
    ModelConfig c;  // C=32, L=3, D=2, N=8, M=2, K=2 on 64x64
    Model m(c, 40);
    SceneConfig sc;
    const Scene scene = generate_scene(41, sc.for_index(0));
    const ModelOutput first = m.forward(scene.image);
    CHECK(first.final().size() == 8);
    CHECK(first.shapes.size() == 3);
    std::vector<Assignment> fixed;
    for (const auto& layer : first.layers) fixed.push_back(set_loss(scene.triplets, layer).assignment);
    std::vector<Var> inputs;
    for (auto& p : m.parameters().parameters()) inputs.push_back(p.var);
    auto build = [&] {
      const ModelOutput out = m.forward(scene.image);
      std::vector<Var> terms;
      for (std::size_t l = 0; l < out.layers.size(); ++l)
        terms.push_back(compute_losses(scene.triplets, out.layers[l], fixed[l]).total);
      return ops::sum_of(terms);
    };
    const GradCheckResult r = check_gradients("toy_model", build, inputs, 1e-4, 1e-5, 2);
    INFO("err " << r.max_rel_error << " kinks " << r.kinks << " checked " << r.checked);
    CHECK(r.passed);
  }
}
