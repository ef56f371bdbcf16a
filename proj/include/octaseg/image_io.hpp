#pragma once

#include <string>

#include "octaseg/image.hpp"

namespace octaseg {

// File IO for 8-bit single-channel images. Two formats:
//   - PGM, binary P5 with maxval 255 (the canonical format, bit-exact)
//   - PNG, 8-bit grayscale, color type 0, non-interlaced
// The format of an input file is detected from its magic bytes; the format
// of an output file follows its extension (.png writes PNG, anything else
// writes PGM).
//
// Byte contract: load scales byte k to k/255; save_gray writes
// floor(v*255 + 0.5) (round half up); save_mask writes 0 or 255;
// load_mask thresholds at >127.

GrayImage load_gray(const std::string& path);
BinaryMask load_mask(const std::string& path);
void save_gray(const GrayImage& img, const std::string& path);
void save_mask(const BinaryMask& mask, const std::string& path);

}  // namespace octaseg
