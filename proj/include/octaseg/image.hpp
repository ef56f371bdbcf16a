#pragma once

#include <cstdint>
#include <vector>

#include "octaseg/error.hpp"

namespace octaseg {

// Single-channel image, row-major, values in [0,1].
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

// Boolean grid, true = vessel.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w, bool fill = false)
      : height(h), width(w), bits(static_cast<size_t>(h) * w, fill ? 1 : 0) {}

  uint8_t& at(int y, int x) { return bits[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x]; }
  bool get(int y, int x) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }

  size_t count_true() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }

  bool operator==(const BinaryMask& o) const {
    return height == o.height && width == o.width && bits == o.bits;
  }
};

// A thinned mask: no 2x2 block of four true pixels.
using SkeletonMask = BinaryMask;

inline void require_same_dims(const BinaryMask& a, const BinaryMask& b,
                              const char* what) {
  if (a.height != b.height || a.width != b.width)
    raise(ErrorCode::ShapeMismatch, std::string(what) + ": mask dimensions differ");
}

inline bool has_2x2_block(const BinaryMask& m) {
  for (int y = 0; y + 1 < m.height; ++y)
    for (int x = 0; x + 1 < m.width; ++x)
      if (m.get(y, x) && m.get(y, x + 1) && m.get(y + 1, x) && m.get(y + 1, x + 1))
        return true;
  return false;
}

}  // namespace octaseg
