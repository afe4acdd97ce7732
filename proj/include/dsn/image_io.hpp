#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsn/tensor.hpp"

namespace dsn {

struct ImageU8 {
  int width = 0, height = 0, channels = 0;  // channels 1 or 3
  std::vector<uint8_t> pixels;              // row-major, interleaved
};

void write_pnm(const std::string& path, const ImageU8& img);  // P5 or P6, maxval 255
ImageU8 read_pnm(const std::string& path);

// [-1,1] -> [0,255] with rounding and clamping; tensor is [H,W,C] with C in {1,3}.
ImageU8 to_u8(const Tensor& image);

}  // namespace dsn
