#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "mstr/numerics/parameter.hpp"

namespace mstr {

// Checkpoint file, version 1. All integers are unsigned 32-bit little-endian,
// all values IEEE-754 binary64 little-endian:
//
//   "MSTRCKPT"                     8-byte magic
//   version                        u32 (= 1)
//   count                          u32, number of entries
//   per entry, in store order:
//     name_length, name bytes      u32 + UTF-8 bytes (no terminator)
//     rank, dims[rank]             u32 + u32 * rank
//     values                       f64 * prod(dims), row-major
//
// Values are stored bit-exactly; save -> load reproduces every double.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store);
TensorMap read_checkpoint(const std::filesystem::path& path);

// Copies values into the store. Throws ConfigError on a missing name or a shape
// mismatch; extra entries in the map are also rejected.
void apply_checkpoint(ParameterStore& store, const TensorMap& values);

}  // namespace mstr
