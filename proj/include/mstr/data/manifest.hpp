#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "mstr/data/scene.hpp"

namespace mstr {

void to_json(nlohmann::json& j, const Box& b);  // [cx, cy, w, h]
void from_json(const nlohmann::json& j, Box& b);
void to_json(nlohmann::json& j, const HOITriplet& t);
void from_json(const nlohmann::json& j, HOITriplet& t);

// One JSON object per line: {"id", "seed", "config", "triplets"}. Images are not
// stored; they are regenerated from (seed, config).
void write_manifest(const std::filesystem::path& path, const std::vector<Scene>& scenes);

struct ManifestRecord {
  int id = 0;
  std::uint64_t seed = 0;
  SceneConfig config;
  std::vector<HOITriplet> triplets;
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Re-renders a scene and checks that its labels match the record (GenerationError otherwise).
Scene regenerate(const ManifestRecord& record);
std::vector<Scene> load_dataset(const std::filesystem::path& manifest);

}  // namespace mstr
