#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mstr/hoi.hpp"

namespace mstr {

// Two cut points t_lo < t_hi splitting values into [.., t_lo), [t_lo, t_hi), [t_hi, ..).
using Thresholds = std::array<double, 2>;

inline constexpr Thresholds kAreaRatioThresholds{0.48, 4.33};

// d_center / (area(h) * area(o)), d_center being the distance between box centers.
// Throws ArgumentError for a zero-area box.
double d_interaction(const Box& human, const Box& object);
double area_ratio(const Box& human, const Box& object);  // area(h) / area(o)

// Half-open bands: 0 below t_lo, 1 in [t_lo, t_hi), 2 from t_hi on.
int band_of(double value, const Thresholds& t);

// Cut points that split `values` into three groups whose sizes differ by at most
// one (ties permitting).
Thresholds equal_count_thresholds(std::vector<double> values);

struct BinConfig {
  Thresholds area_ratio = kAreaRatioThresholds;
  std::optional<Thresholds> human_size;    // area(h); equal-count tertiles when unset
  std::optional<Thresholds> object_size;   // area(o)
  std::optional<Thresholds> distance;      // d_interaction

  // Throws ConfigError unless every set pair is strictly increasing.
  void validate() const;
};

enum class BinAxis { AreaRatio, HumanSize, ObjectSize, Distance };
inline constexpr std::array<BinAxis, 4> kBinAxes{BinAxis::AreaRatio, BinAxis::HumanSize, BinAxis::ObjectSize,
                                                 BinAxis::Distance};

std::string axis_name(BinAxis axis);
// "h<o"/"h=o"/"h>o", "S"/"M"/"L", "adjacent"/"moderate"/"distant".
std::string bin_name(BinAxis axis, int band);

struct BinLabels {
  std::array<int, 4> band{};  // indexed like kBinAxes
  int operator[](BinAxis a) const { return band[static_cast<int>(a)]; }
};

struct ResolvedBins {
  BinConfig config;  // with every threshold filled in
  std::vector<BinLabels> labels;
};

ResolvedBins assign_bins(const std::vector<HOITriplet>& gts, const BinConfig& cfg = {});

void to_json(nlohmann::json& j, const BinConfig& c);
void from_json(const nlohmann::json& j, BinConfig& c);

}  // namespace mstr
