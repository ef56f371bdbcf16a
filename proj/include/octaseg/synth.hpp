#pragma once

#include <cstdint>
#include <utility>

#include "octaseg/image.hpp"

namespace octaseg {

// Procedural OCTA-like test data: branching vessel trees drawn as random
// walks, a bright trunk network with dim 1-px capillaries, multiplicative
// speckle over everything. All randomness comes from the SplitMix64 stream
// and all walk geometry is integer fixed-point, so output is bit-identical
// across platforms for a fixed seed.
struct SynthConfig {
  int num_trunks = 2;
  int num_capillaries = 14;
  int trunk_steps = 90;        // walk length per trunk
  int capillary_steps = 28;    // walk length per capillary
  double trunk_intensity_lo = 0.7;
  double trunk_intensity_hi = 1.0;
  double capillary_intensity_lo = 0.25;
  double capillary_intensity_hi = 0.5;
  double speckle_lo = 0.7;     // multiplicative noise bounds
  double speckle_hi = 1.3;
  double background = 0.12;    // base tissue signal under the speckle
  double min_fraction = 0.05;  // admissible vessel pixel fraction
  double max_fraction = 0.45;
};

// Returns the noisy image and the exact support mask of the drawn vessels.
// The mask fraction is kept inside [min_fraction, max_fraction] by drawing
// more walks or stopping early.
std::pair<GrayImage, BinaryMask> gen_synthetic_vessels(uint64_t seed, int height,
                                                       int width,
                                                       const SynthConfig& cfg = {});

}  // namespace octaseg
