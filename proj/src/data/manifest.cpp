#include "mstr/data/manifest.hpp"

#include <fstream>

#include "mstr/errors.hpp"

namespace mstr {

void to_json(nlohmann::json& j, const Box& b) { j = nlohmann::json::array({b.cx, b.cy, b.w, b.h}); }

void from_json(const nlohmann::json& j, Box& b) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("box must be [cx, cy, w, h]");
  b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(nlohmann::json& j, const HOITriplet& t) {
  j = nlohmann::json{{"human", t.human}, {"object", t.object}, {"object_class", t.object_class}, {"actions", t.actions}};
}

void from_json(const nlohmann::json& j, HOITriplet& t) {
  t.human = j.at("human").get<Box>();
  t.object = j.at("object").get<Box>();
  t.object_class = j.at("object_class").get<int>();
  t.actions = j.at("actions").get<std::vector<int>>();
}

void write_manifest(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& s : scenes) {
    const nlohmann::json rec{{"id", s.id}, {"seed", s.seed}, {"config", s.config}, {"triplets", s.triplets}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<int>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.config = j.at("config").get<SceneConfig>();
      r.triplets = j.at("triplets").get<std::vector<HOITriplet>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Scene regenerate(const ManifestRecord& record) {
  Scene s = generate_scene(record.seed, record.config);
  s.id = record.id;
  if (s.triplets != record.triplets)
    throw GenerationError("scene " + std::to_string(record.id) + " does not reproduce its manifest labels");
  return s;
}

std::vector<Scene> load_dataset(const std::filesystem::path& manifest) {
  std::vector<Scene> out;
  for (const auto& r : read_manifest(manifest)) out.push_back(regenerate(r));
  return out;
}

}  // namespace mstr
