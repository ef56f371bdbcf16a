#pragma once

#include <cstdint>
#include <vector>

#include "octaseg/image.hpp"

namespace octaseg {

struct ComponentLabeling {
  int height = 0;
  int width = 0;
  std::vector<int32_t> labels;  // 0 = background, components numbered 1..count
  int count = 0;
  int connectivity = 8;
};

// Two-subiteration parallel thinning (Zhang-Suen). Pixels outside the image
// count as background. Iterates until a full pass deletes nothing, then peels
// topology-preserving pixels off any remaining 2x2 junction residue. Component
// structure wins over thinness: a 2x2 core whose four corners each anchor a
// separate diagonal branch admits no deletion that keeps the mask connected,
// and is left in place.
SkeletonMask zhang_suen_thin(const BinaryMask& mask);

// True wherever some source pixel lies within Euclidean distance <= radius.
BinaryMask dilate_disc(const BinaryMask& mask, double radius);

// Deterministic first-encounter labeling in row-major order.
ComponentLabeling connected_components(const BinaryMask& mask, int connectivity = 8);

}  // namespace octaseg
