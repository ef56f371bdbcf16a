#pragma once

#include <string>
#include <vector>

#include "octaseg/image.hpp"

namespace octaseg {

struct ThresholdConfig {
  int window = 0;              // odd window size; 0 = round(width/8) forced odd
  double sensitivity = 15.0;   // percent below the local mean that still counts
};

struct FrangiConfig {
  std::vector<double> scales{1.0, 1.5, 2.0};  // Gaussian sigma, pixels
  double beta = 0.5;                          // blobness weight
  double c = 0.0;  // structureness weight; 0 = half the max Hessian norm per scale
};

struct GaborConfig {
  std::vector<double> wavelengths{4.0, 8.0};  // pixels
  int orientations = 12;                      // evenly spaced over [0, pi)
  double sigma_ratio = 0.5;                   // envelope sigma / wavelength
};

enum class FilterKind { None, Frangi, Gabor, ScirdTs };

// "at" selects no enhancement filter (threshold the raw image).
FilterKind parse_filter_kind(const std::string& name);
const char* filter_kind_name(FilterKind kind);

// Bradley-style local mean threshold on an integral image. A pixel is vessel
// iff value*count > window_sum*(100-t)/100, with windows clipped at the
// borders (true local mean). Values are quantized to a 2^20 integer grid
// before summing, so results are independent of summation order.
BinaryMask adaptive_threshold(const GrayImage& img, const ThresholdConfig& cfg);

// Scale-normalized Gaussian second derivatives (sigma^2 * d2G), kernels
// truncated at 4 sigma, reflect padding. Planes hold signed values.
struct HessianResponse {
  GrayImage ixx, ixy, iyy;
};
HessianResponse hessian_2d(const GrayImage& img, double sigma);

// Bright-ridge vesselness from the Hessian eigenvalues (|l1| <= |l2|):
// 0 where l2 > 0, else exp(-Rb^2/2beta^2) * (1 - exp(-S^2/2c^2)), maximized
// over scales. Response lies in [0,1].
GrayImage frangi_vesselness(const GrayImage& img, const FrangiConfig& cfg);

// Max over the orientation/wavelength bank of the even/odd pair modulus.
// Kernels are DC-free (offset-invariant response) and L1-normalized so the
// response stays in [0,1] and scales linearly with image contrast.
GrayImage gabor_response(const GrayImage& img, const GaborConfig& cfg);

// None: threshold the raw image. Otherwise threshold the min-max normalized
// filter response. response_out, when given, receives the thresholded image.
BinaryMask filter_then_threshold(const GrayImage& img, FilterKind kind,
                                 const FrangiConfig& fcfg, const GaborConfig& gcfg,
                                 const ThresholdConfig& tcfg,
                                 GrayImage* response_out = nullptr);

}  // namespace octaseg
