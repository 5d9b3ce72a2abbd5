#include "mstr/data/bins.hpp"

#include <algorithm>
#include <cmath>

#include "mstr/errors.hpp"

namespace mstr {

double d_interaction(const Box& human, const Box& object) {
  const double ah = human.area();
  const double ao = object.area();
  if (!(ah > 0) || !(ao > 0)) throw ArgumentError("d_interaction: boxes must have positive area");
  const double d_center = std::hypot(human.cx - object.cx, human.cy - object.cy);
  return d_center / (ah * ao);
}

double area_ratio(const Box& human, const Box& object) {
  if (!(object.area() > 0)) throw ArgumentError("area_ratio: object box has zero area");
  return human.area() / object.area();
}

int band_of(double value, const Thresholds& t) {
  if (value < t[0]) return 0;
  if (value < t[1]) return 1;
  return 2;
}

Thresholds equal_count_thresholds(std::vector<double> values) {
  if (values.empty()) return {0.0, 0.0};
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t k1 = std::min(n - 1, (n + 1) / 3);
  const std::size_t k2 = std::min(n - 1, (2 * n + 1) / 3);
  return {values[k1], values[k2]};
}

void BinConfig::validate() const {
  auto check = [](const Thresholds& t, const char* what) {
    if (!(t[0] < t[1])) throw ConfigError(std::string(what) + " thresholds must be strictly increasing");
  };
  check(area_ratio, "area_ratio");
  if (human_size) check(*human_size, "human_size");
  if (object_size) check(*object_size, "object_size");
  if (distance) check(*distance, "distance");
}

std::string axis_name(BinAxis axis) {
  switch (axis) {
    case BinAxis::AreaRatio: return "area_ratio";
    case BinAxis::HumanSize: return "human_size";
    case BinAxis::ObjectSize: return "object_size";
    case BinAxis::Distance: return "distance";
  }
  return "unknown";
}

std::string bin_name(BinAxis axis, int band) {
  static const char* ratio[] = {"h<o", "h=o", "h>o"};
  static const char* size[] = {"S", "M", "L"};
  static const char* dist[] = {"adjacent", "moderate", "distant"};
  if (band < 0 || band > 2) throw ArgumentError("bin band out of range");
  switch (axis) {
    case BinAxis::AreaRatio: return ratio[band];
    case BinAxis::HumanSize:
    case BinAxis::ObjectSize: return size[band];
    case BinAxis::Distance: return dist[band];
  }
  return "unknown";
}

ResolvedBins assign_bins(const std::vector<HOITriplet>& gts, const BinConfig& cfg) {
  cfg.validate();
  ResolvedBins out;
  out.config = cfg;
  std::vector<double> hs, os, ds;
  for (const auto& g : gts) {
    hs.push_back(g.human.area());
    os.push_back(g.object.area());
    ds.push_back(d_interaction(g.human, g.object));
  }
  if (!cfg.human_size) out.config.human_size = equal_count_thresholds(hs);
  if (!cfg.object_size) out.config.object_size = equal_count_thresholds(os);
  if (!cfg.distance) out.config.distance = equal_count_thresholds(ds);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    BinLabels b;
    b.band[0] = band_of(area_ratio(gts[i].human, gts[i].object), out.config.area_ratio);
    b.band[1] = band_of(hs[i], *out.config.human_size);
    b.band[2] = band_of(os[i], *out.config.object_size);
    b.band[3] = band_of(ds[i], *out.config.distance);
    out.labels.push_back(b);
  }
  return out;
}

void to_json(nlohmann::json& j, const BinConfig& c) {
  j = nlohmann::json{{"area_ratio", c.area_ratio}};
  if (c.human_size) j["human_size"] = *c.human_size;
  if (c.object_size) j["object_size"] = *c.object_size;
  if (c.distance) j["distance"] = *c.distance;
}

void from_json(const nlohmann::json& j, BinConfig& c) {
  try {
    c = BinConfig{};
    if (j.contains("area_ratio")) c.area_ratio = j.at("area_ratio").get<Thresholds>();
    if (j.contains("human_size")) c.human_size = j.at("human_size").get<Thresholds>();
    if (j.contains("object_size")) c.object_size = j.at("object_size").get<Thresholds>();
    if (j.contains("distance")) c.distance = j.at("distance").get<Thresholds>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bin config: ") + e.what());
  }
  c.validate();
}

}  // namespace mstr
