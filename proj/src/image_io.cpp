#include "mstr/image_io.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace mstr {

namespace {

void write_pnm(const std::filesystem::path& path, const Raster& img, const char* magic, int channels) {
  if (img.channels != channels) throw std::invalid_argument("raster channel count does not match format");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << magic << '\n' << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Raster& img) { write_pnm(path, img, "P5", 1); }
void write_ppm(const std::filesystem::path& path, const Raster& img) { write_pnm(path, img, "P6", 3); }

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  is.get();
  if ((magic != "P5" && magic != "P6") || maxval != 255) throw std::runtime_error("unsupported PNM: " + path.string());
  Raster img(w, h, magic == "P5" ? 1 : 3);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw std::runtime_error("truncated PNM: " + path.string());
  return img;
}

}  // namespace mstr
