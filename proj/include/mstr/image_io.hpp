#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mstr {

// 8-bit raster, `channels` = 1 (graymap) or 3 (pixmap), row-major interleaved.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, int c) : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * channels]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * channels];
  }
};

// Binary P5 / P6 writers.
void write_pgm(const std::filesystem::path& path, const Raster& img);
void write_ppm(const std::filesystem::path& path, const Raster& img);
Raster read_pnm(const std::filesystem::path& path);

inline std::uint8_t to_byte(double v) {
  if (!(v > 0)) return 0;
  if (v >= 1) return 255;
  return static_cast<std::uint8_t>(v * 255.0 + 0.5);
}

}  // namespace mstr
