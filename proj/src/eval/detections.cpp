#include "mstr/eval/detections.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "mstr/data/manifest.hpp"
#include "mstr/errors.hpp"

namespace mstr {

namespace {

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.cols(); ++c)
    if (t.at(row, c) > t.at(row, best)) best = c;
  return best;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<DetectionRecord> detections_from_predictions(int scene, const PredictionSet& pred) {
  const Tensor cls = pred.class_probs();
  const Tensor act = pred.action_probs();
  std::vector<DetectionRecord> out;
  for (int q = 0; q < pred.size(); ++q) {
    DetectionRecord d;
    d.scene = scene;
    d.index = q;
    d.triplet.human = pred.human_box(q);
    d.triplet.object = pred.object_box(q);
    d.triplet.object_class = argmax_row(cls, q);
    d.action = argmax_row(act, q);
    d.triplet.actions.assign(act.cols(), 0);
    d.triplet.actions[d.action] = 1;
    d.score = act.at(q, d.action) * cls.at(q, d.triplet.object_class);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<GroundTruth> ground_truth_of(const std::vector<Scene>& scenes) {
  std::vector<GroundTruth> out;
  for (const auto& s : scenes)
    for (const auto& t : s.triplets) out.push_back({s.id, t});
  return out;
}

std::vector<DetectionRecord> ground_truth_as_detections(const std::vector<GroundTruth>& gts) {
  std::vector<DetectionRecord> out;
  int index = 0;
  for (const auto& g : gts)
    for (std::size_t a = 0; a < g.triplet.actions.size(); ++a) {
      if (!g.triplet.actions[a]) continue;
      DetectionRecord d;
      d.scene = g.scene;
      d.index = index++;
      d.triplet = g.triplet;
      d.triplet.actions.assign(g.triplet.actions.size(), 0);
      d.triplet.actions[a] = 1;
      d.action = static_cast<int>(a);
      d.score = 1.0;
      out.push_back(std::move(d));
    }
  return out;
}

void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& dets) {
  auto out = open_out(path);
  for (const auto& d : dets) {
    const nlohmann::json j{{"scene", d.scene},
                           {"index", d.index},
                           {"object_class", d.triplet.object_class},
                           {"action", d.action},
                           {"actions", d.triplet.actions.size()},
                           {"human", d.triplet.human},
                           {"object", d.triplet.object},
                           {"score", d.score}};
    out << j.dump() << '\n';
  }
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read detections " + path.string());
  std::vector<DetectionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DetectionRecord d;
      d.scene = j.at("scene").get<int>();
      d.index = j.at("index").get<int>();
      d.triplet.object_class = j.at("object_class").get<int>();
      d.action = j.at("action").get<int>();
      d.triplet.actions.assign(j.at("actions").get<std::size_t>(), 0);
      d.triplet.actions.at(d.action) = 1;
      d.triplet.human = j.at("human").get<Box>();
      d.triplet.object = j.at("object").get<Box>();
      d.score = j.at("score").get<double>();
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw ConfigError("detections " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_ap_csv(const std::filesystem::path& path, const APResult& r) {
  auto out = open_out(path);
  out << "action,object,ap\n";
  for (const auto& [cls, ap] : r.per_class) out << cls.first << ',' << cls.second << ',' << fixed(ap) << '\n';
  out << "mAP,," << fixed(r.map) << '\n';
}

void write_binned_csv(const std::filesystem::path& path, const std::vector<BinAP>& bins) {
  auto out = open_out(path);
  out << "axis,bin,num_gt,ap\n";
  for (const auto& b : bins)
    out << axis_name(b.axis) << ',' << bin_name(b.axis, b.band) << ',' << b.num_gt << ',' << fixed(b.map) << '\n';
}

}  // namespace mstr
