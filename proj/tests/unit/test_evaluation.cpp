#include <algorithm>
#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "mstr/data/bins.hpp"
#include "mstr/errors.hpp"
#include "mstr/eval/detections.hpp"
#include "mstr/eval/metrics.hpp"
#include "oracles.hpp"

using namespace mstr;

namespace {

const Box kHuman{0.3, 0.4, 0.2, 0.4};
const Box kObject{0.7, 0.6, 0.2, 0.2};

GroundTruth gt_at(int scene, Box h, Box o, int cls = 0, std::vector<int> actions = {1, 0}) {
  return {scene, {h, o, cls, std::move(actions)}};
}

DetectionRecord det_at(int scene, int index, Box h, Box o, double score, int cls = 0, int action = 0,
                       int num_actions = 2) {
  DetectionRecord d;
  d.scene = scene;
  d.index = index;
  d.triplet = {h, o, cls, std::vector<int>(num_actions, 0)};
  d.triplet.actions[action] = 1;
  d.action = action;
  d.score = score;
  return d;
}

Box shifted(Box b, double dx) {
  b.cx += dx;
  return b;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("triplet match thresholds") {
    const HOITriplet gt{kHuman, kObject, 0, {1, 0}};
    CHECK(triplet_match(det_at(0, 0, kHuman, kObject, 1.0), gt));
    // object box shifted by a quarter width: IoU = 0.75 / 1.25 = 0.6
    CHECK(std::fabs(oracle::box_iou(shifted(kObject, 0.05), kObject) - 0.6) <= 1e-12);
    CHECK(triplet_match(det_at(0, 0, kHuman, shifted(kObject, 0.05), 1.0), gt));
    // human IoU just under one half
    Box h = kHuman;
    h.w = kHuman.w * 0.49;
    CHECK(std::fabs(oracle::box_iou(h, kHuman) - 0.49) <= 1e-12);
    CHECK_FALSE(triplet_match(det_at(0, 0, h, kObject, 1.0), gt));
    h.w = kHuman.w * 0.51;
    CHECK(triplet_match(det_at(0, 0, h, kObject, 1.0), gt));
    CHECK_FALSE(triplet_match(det_at(0, 0, kHuman, kObject, 1.0, 1), gt));
    CHECK_FALSE(triplet_match(det_at(0, 0, kHuman, kObject, 1.0, 0, 1), gt));
  }

  TEST_CASE("average precision examples") {
    const std::vector<GroundTruth> one{gt_at(0, kHuman, kObject)};
    CHECK(*average_precision({det_at(0, 0, kHuman, kObject, 0.9)}, one) == 1.0);
    CHECK(*average_precision({}, one) == 0.0);
    CHECK_FALSE(average_precision({det_at(0, 0, kHuman, kObject, 0.9)}, {}).has_value());

    // ranked TP, FP, TP over two ground truths: 0.5 * 1 + 0.5 * 2/3
    const std::vector<GroundTruth> two{gt_at(0, kHuman, kObject), gt_at(1, kHuman, kObject)};
    const std::vector<DetectionRecord> dets{det_at(0, 0, kHuman, kObject, 0.9),
                                            det_at(0, 1, shifted(kHuman, 0.3), kObject, 0.8),
                                            det_at(1, 0, kHuman, kObject, 0.7)};
    CHECK(std::fabs(*average_precision(dets, two) - (0.5 + 0.5 * 2.0 / 3.0)) <= 1e-12);

    // a duplicate of an already matched ground truth is a false positive
    const std::vector<DetectionRecord> dup{det_at(0, 0, kHuman, kObject, 0.9), det_at(0, 1, kHuman, kObject, 0.8)};
    CHECK(*average_precision(dup, two) == 0.5);
    CHECK(ap_from_flags({1, 0, 1}, 2) == average_precision(dets, two));
  }

  TEST_CASE("greedy AP equals the exhaustive matcher") {
    Rng rng(21);
    int nontrivial = 0;
    for (int i = 0; i < 3000; ++i) {
      const oracle::APCase c = oracle::random_ap_case(rng);
      const double expected = oracle::exhaustive_ap(c.dets, c.gts);
      CHECK(*average_precision(c.dets, c.gts) == expected);
      nontrivial += expected > 0.0 && expected < 1.0;
    }
    CHECK(nontrivial > 300);
  }

  TEST_CASE("AP depends only on the score order") {
    Rng rng(22);
    for (int i = 0; i < 300; ++i) {
      oracle::APCase c = oracle::random_ap_case(rng);
      const double ap = *average_precision(c.dets, c.gts);
      CHECK(ap >= 0.0);
      CHECK(ap <= 1.0);
      for (auto& d : c.dets) d.score = 0.25 * d.score * d.score + 0.01;
      CHECK(*average_precision(c.dets, c.gts) == ap);
    }
  }

  TEST_CASE("finding a missed ground truth at the top rank raises AP") {
    Rng rng(23);
    int tried = 0;
    for (int i = 0; i < 500; ++i) {
      oracle::APCase c = oracle::random_ap_case(rng);
      const double before = *average_precision(c.dets, c.gts);
      for (const GroundTruth& g : c.gts) {
        const bool contested = std::any_of(c.dets.begin(), c.dets.end(),
                                           [&](const DetectionRecord& d) { return oracle::matches(d, g); });
        if (contested) continue;
        std::vector<DetectionRecord> dets = c.dets;
        dets.push_back(det_at(g.scene, 100, g.triplet.human, g.triplet.object, 2.0));
        CHECK(*average_precision(dets, c.gts) > before);
        ++tried;
        break;
      }
    }
    CHECK(tried > 100);
  }

  TEST_CASE("greedy matching prefers the closer ground truth and breaks ties by index") {
    const std::vector<GroundTruth> gts{gt_at(0, shifted(kHuman, 0.03), kObject), gt_at(0, kHuman, kObject),
                                       gt_at(0, kHuman, kObject)};
    std::vector<DetectionRecord> dets{det_at(0, 0, kHuman, kObject, 0.9), det_at(0, 1, kHuman, kObject, 0.8)};
    sort_detections(dets);
    CHECK(greedy_match(dets, gts) == std::vector<int>{1, 2});
    // ignored ground truth is taken only when nothing else matches
    CHECK(greedy_match(dets, gts, {0, 1, 0}) == std::vector<int>{2, 0});
    CHECK(greedy_match(dets, gts, {0, 1, 1}) == std::vector<int>{0, 1});
    std::vector<DetectionRecord> tied{det_at(1, 0, kHuman, kObject, 0.5), det_at(0, 3, kHuman, kObject, 0.5),
                                      det_at(0, 1, kHuman, kObject, 0.5)};
    sort_detections(tied);
    CHECK(tied[0].scene == 0);
    CHECK(tied[0].index == 1);
    CHECK(tied[2].scene == 1);
  }

  TEST_CASE("mAP averages over classes present in the ground truth") {
    const std::vector<GroundTruth> gts{gt_at(0, kHuman, kObject, 0, {1, 1}), gt_at(1, kHuman, kObject, 1, {0, 1})};
    // class (0,0) found, (1,0) found, (1,1) missed
    const std::vector<DetectionRecord> dets{det_at(0, 0, kHuman, kObject, 0.9, 0, 0),
                                            det_at(0, 1, kHuman, kObject, 0.8, 0, 1),
                                            det_at(1, 0, shifted(kHuman, 0.3), kObject, 0.7, 1, 1)};
    const APResult r = evaluate_map(dets, gts);
    CHECK(r.per_class.size() == 3);
    CHECK(r.per_class.at({0, 0}) == 1.0);
    CHECK(r.per_class.at({1, 0}) == 1.0);
    CHECK(r.per_class.at({1, 1}) == 0.0);
    CHECK(std::fabs(r.map - 2.0 / 3.0) <= 1e-12);
    CHECK(evaluate_map(ground_truth_as_detections(gts), gts).map == 1.0);
  }

  TEST_CASE("binned AP") {
    Rng rng(24);
    std::vector<GroundTruth> gts;
    std::vector<DetectionRecord> dets;
    for (int s = 0; s < 6; ++s) {
      // three small and three large humans
      Box h = kHuman;
      h.w = h.h = s < 3 ? 0.1 + 0.01 * s : 0.4 + 0.01 * s;
      gts.push_back(gt_at(s, h, kObject));
      if (s % 3 != 2) dets.push_back(det_at(s, 0, h, kObject, rng.uniform(0.5, 1.0)));
    }
    std::vector<HOITriplet> triplets;
    for (const auto& g : gts) triplets.push_back(g.triplet);
    BinConfig cfg;
    cfg.human_size = Thresholds{0.05, 0.1};
    const ResolvedBins bins = assign_bins(triplets, cfg);
    const std::vector<BinAP> out = binned_ap(dets, gts, bins);

    int human_bins = 0;
    for (const auto& b : out) {
      CHECK(b.num_gt > 0);
      if (b.axis != BinAxis::HumanSize) continue;
      ++human_bins;
      // the other bin's detections are ignored, not false positives
      CHECK(b.num_gt == 3);
      CHECK(std::fabs(b.map - 2.0 / 3.0) <= 1e-12);
    }
    CHECK(human_bins == 2);

    // with one bin holding everything, the bin mAP is the overall mAP
    const double overall = evaluate_map(dets, gts).map;
    cfg.human_size = Thresholds{1e-6, 2e-6};
    for (const auto& b : binned_ap(dets, gts, assign_bins(triplets, cfg)))
      if (b.axis == BinAxis::HumanSize) CHECK(b.map == overall);
  }

  TEST_CASE("detections from predictions") {
    PredictionSet p;
    p.human_boxes = Var::constant(Tensor({2, 4}, {0.3, 0.4, 0.2, 0.4, 0.5, 0.5, 0.1, 0.1}));
    p.object_boxes = Var::constant(Tensor({2, 4}, {0.7, 0.6, 0.2, 0.2, 0.5, 0.5, 0.1, 0.1}));
    p.class_logits = Var::constant(Tensor({2, 3}, {0.0, 2.0, -1.0, 1.0, 0.0, 0.0}));
    p.action_logits = Var::constant(Tensor({2, 2}, {-1.0, 1.0, 3.0, 0.0}));
    const auto dets = detections_from_predictions(5, p);
    REQUIRE(dets.size() == 2);
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    CHECK(dets[0].scene == 5);
    CHECK(dets[1].index == 1);
    CHECK(dets[0].triplet.object_class == 1);
    CHECK(dets[0].action == 1);
    CHECK(dets[0].triplet.actions == std::vector<int>{0, 1});
    CHECK(std::fabs(dets[0].score - sig(1.0) * sig(2.0)) <= 1e-12);
    CHECK(std::fabs(dets[1].score - sig(3.0) * sig(1.0)) <= 1e-12);
    CHECK(dets[0].triplet.human == kHuman);
  }

  TEST_CASE("detection files and CSV reports") {
    Rng rng(25);
    const oracle::APCase c = oracle::random_ap_case(rng);
    const auto dir = testing::scratch_dir("detections");
    write_detections(dir / "dets.jsonl", c.dets);
    const auto back = read_detections(dir / "dets.jsonl");
    REQUIRE(back.size() == c.dets.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].triplet == c.dets[i].triplet);
      CHECK(back[i].score == c.dets[i].score);
      CHECK(back[i].index == c.dets[i].index);
    }

    APResult r;
    r.per_class[{0, 1}] = 0.5;
    r.per_class[{1, 0}] = 1.0;
    r.map = 0.75;
    write_ap_csv(dir / "ap.csv", r);
    CHECK(testing::read_file(dir / "ap.csv") == "action,object,ap\n0,1,0.500000\n1,0,1.000000\nmAP,,0.750000\n");
    write_binned_csv(dir / "bins.csv", {{BinAxis::AreaRatio, 2, 4, 0.25}});
    CHECK(testing::read_file(dir / "bins.csv") == "axis,bin,num_gt,ap\narea_ratio,h>o,4,0.250000\n");

    std::ofstream(dir / "bad.jsonl") << "{\"scene\": 1}\n";
    CHECK_THROWS_AS(read_detections(dir / "bad.jsonl"), ConfigError);
  }
}
