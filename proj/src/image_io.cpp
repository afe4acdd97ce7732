#include "dsn/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dsn {

void write_pnm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_pnm: cannot open " + path);
  f << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw std::runtime_error("write_pnm: write failed for " + path);
}

ImageU8 read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pnm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255) throw std::runtime_error("read_pnm: unsupported format in " + path);
  f.get();  // single whitespace after header
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.channels = magic == "P6" ? 3 : 1;
  img.pixels.resize(static_cast<size_t>(w) * h * img.channels);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw std::runtime_error("read_pnm: truncated file " + path);
  return img;
}

ImageU8 to_u8(const Tensor& image) {
  if (image.rank() != 3 || (image.shape[2] != 1 && image.shape[2] != 3))
    throw std::invalid_argument("to_u8: expected [H,W,C] with C in {1,3}, got " + shape_str(image.shape));
  ImageU8 img;
  img.height = image.shape[0];
  img.width = image.shape[1];
  img.channels = image.shape[2];
  img.pixels.resize(image.data.size());
  for (size_t i = 0; i < image.data.size(); ++i) {
    double v = std::round((image.data[i] + 1.0) * 0.5 * 255.0);
    img.pixels[i] = static_cast<uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
  }
  return img;
}

}  // namespace dsn
