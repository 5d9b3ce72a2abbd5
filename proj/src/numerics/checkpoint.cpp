#include "mstr/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

#include "mstr/errors.hpp"

namespace mstr {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'T', 'R', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::filesystem::filesystem_error("cannot write checkpoint", path, std::make_error_code(std::errc::io_error));
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(store.parameters().size()));
  for (const auto& p : store.parameters()) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& t = p.var.value();
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f64(os, v);
  }
  if (!os) throw std::filesystem::filesystem_error("failed writing checkpoint", path, std::make_error_code(std::errc::io_error));
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("not a checkpoint file: " + path.string());
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(is);
  TensorMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = get_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ConfigError("checkpoint truncated");
    const std::uint32_t rank = get_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(is));
    Tensor t(shape);
    for (auto& v : t.values()) v = get_f64(is);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void apply_checkpoint(ParameterStore& store, const TensorMap& values) {
  if (values.size() != store.parameters().size())
    throw ConfigError("checkpoint has " + std::to_string(values.size()) + " tensors, model has " +
                      std::to_string(store.parameters().size()));
  for (auto& p : store.parameters()) {
    auto it = values.find(p.name);
    if (it == values.end()) throw ConfigError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.var.value().shape())
      throw ConfigError("checkpoint shape " + shape_string(it->second.shape()) + " for " + p.name +
                        " does not match model shape " + shape_string(p.var.value().shape()));
  }
  for (auto& p : store.parameters()) p.var.mutable_value() = values.at(p.name);
}

}  // namespace mstr
