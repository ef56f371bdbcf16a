#include "octaseg/classical.hpp"

#include <algorithm>
#include <cmath>

namespace octaseg {

FilterKind parse_filter_kind(const std::string& name) {
  if (name == "at") return FilterKind::None;
  if (name == "frangi") return FilterKind::Frangi;
  if (name == "gabor") return FilterKind::Gabor;
  if (name == "scird-ts") return FilterKind::ScirdTs;
  raise(ErrorCode::ConfigInvalid,
        "unknown method: " + name + " (expected at, frangi, gabor or scird-ts)");
}

const char* filter_kind_name(FilterKind kind) {
  switch (kind) {
    case FilterKind::None: return "at";
    case FilterKind::Frangi: return "frangi";
    case FilterKind::Gabor: return "gabor";
    case FilterKind::ScirdTs: return "scird-ts";
  }
  return "?";
}

namespace {

constexpr double kQuantGrid = 1048576.0;  // 2^20

int resolve_window(const GrayImage& img, const ThresholdConfig& cfg) {
  int win = cfg.window;
  if (win == 0) {
    win = int(std::lround(img.width / 8.0));
    if (win < 3) win = 3;
    if (win % 2 == 0) win += 1;
  }
  if (win < 3 || win % 2 == 0)
    raise(ErrorCode::ConfigInvalid, "threshold window must be odd and >= 3");
  if (cfg.sensitivity < 0 || cfg.sensitivity >= 100)
    raise(ErrorCode::ConfigInvalid, "sensitivity must lie in [0, 100)");
  return win;
}

// symmetric reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// separable convolution, horizontal kernel kx then vertical kernel ky
GrayImage conv_sep(const GrayImage& img, const std::vector<double>& kx,
                   const std::vector<double>& ky) {
  const int h = img.height, w = img.width;
  const int rx = int(kx.size()) / 2, ry = int(ky.size()) / 2;
  GrayImage tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -rx; k <= rx; ++k)
        acc += kx[size_t(k + rx)] * img.at(y, reflect(x + k, w));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -ry; k <= ry; ++k)
        acc += ky[size_t(k + ry)] * tmp.at(reflect(y + k, h), x);
      out.at(y, x) = acc;
    }
  return out;
}

struct GaussKernels {
  std::vector<double> g, g1, g2;  // smoother, first and second derivative
};

GaussKernels gauss_kernels(double sigma) {
  const int r = int(std::ceil(4.0 * sigma));
  GaussKernels k;
  k.g.resize(size_t(2 * r + 1));
  double z = 0;
  for (int i = -r; i <= r; ++i) {
    k.g[size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    z += k.g[size_t(i + r)];
  }
  for (double& v : k.g) v /= z;
  k.g1.resize(k.g.size());
  k.g2.resize(k.g.size());
  for (int i = -r; i <= r; ++i) {
    k.g1[size_t(i + r)] = -i / (sigma * sigma) * k.g[size_t(i + r)];
    k.g2[size_t(i + r)] =
        (i * i - sigma * sigma) / (sigma * sigma * sigma * sigma) * k.g[size_t(i + r)];
  }
  // force the second derivative exactly DC-free so flat regions respond 0
  double mean2 = 0;
  for (double v : k.g2) mean2 += v;
  mean2 /= double(k.g2.size());
  for (double& v : k.g2) v -= mean2;
  return k;
}

GrayImage normalize01(const GrayImage& img) {
  double lo = img.values.empty() ? 0 : img.values[0], hi = lo;
  for (double v : img.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  GrayImage out(img.height, img.width);
  if (hi > lo)
    for (size_t i = 0; i < img.values.size(); ++i)
      out.values[i] = (img.values[i] - lo) / (hi - lo);
  return out;
}

}  // namespace

BinaryMask adaptive_threshold(const GrayImage& img, const ThresholdConfig& cfg) {
  const int win = resolve_window(img, cfg);
  const int h = img.height, w = img.width, half = win / 2;

  std::vector<uint64_t> q(img.pixel_count());
  for (size_t i = 0; i < q.size(); ++i)
    q[i] = uint64_t(std::llround(img.values[i] * kQuantGrid));

  // integral image with a zero top row / left column
  std::vector<uint64_t> integ(size_t(h + 1) * (w + 1), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      integ[size_t(y + 1) * (w + 1) + x + 1] = q[size_t(y) * w + x] +
                                               integ[size_t(y) * (w + 1) + x + 1] +
                                               integ[size_t(y + 1) * (w + 1) + x] -
                                               integ[size_t(y) * (w + 1) + x];

  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half), y1 = std::min(h - 1, y + half);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half), x1 = std::min(w - 1, x + half);
      const uint64_t sum = integ[size_t(y1 + 1) * (w + 1) + x1 + 1] -
                           integ[size_t(y0) * (w + 1) + x1 + 1] -
                           integ[size_t(y1 + 1) * (w + 1) + x0] +
                           integ[size_t(y0) * (w + 1) + x0];
      const uint64_t count = uint64_t(y1 - y0 + 1) * uint64_t(x1 - x0 + 1);
      // value*count > sum*(100-t)/100, scaled by 100 to keep integers exact
      const double lhs = double(q[size_t(y) * w + x]) * double(count) * 100.0;
      const double rhs = double(sum) * (100.0 - cfg.sensitivity);
      out.bits[size_t(y) * w + x] = lhs > rhs ? 1 : 0;
    }
  }
  return out;
}

HessianResponse hessian_2d(const GrayImage& img, double sigma) {
  if (sigma <= 0) raise(ErrorCode::ConfigInvalid, "sigma must be > 0");
  const GaussKernels k = gauss_kernels(sigma);
  HessianResponse r;
  r.ixx = conv_sep(img, k.g2, k.g);
  r.iyy = conv_sep(img, k.g, k.g2);
  r.ixy = conv_sep(img, k.g1, k.g1);
  const double s2 = sigma * sigma;
  for (double& v : r.ixx.values) v *= s2;
  for (double& v : r.ixy.values) v *= s2;
  for (double& v : r.iyy.values) v *= s2;
  return r;
}

GrayImage frangi_vesselness(const GrayImage& img, const FrangiConfig& cfg) {
  if (cfg.scales.empty())
    raise(ErrorCode::ConfigInvalid, "frangi needs at least one scale");
  if (cfg.beta <= 0 || cfg.c < 0)
    raise(ErrorCode::ConfigInvalid, "frangi beta must be > 0 and c >= 0");

  GrayImage out(img.height, img.width);
  std::vector<double> l1(img.pixel_count()), l2(img.pixel_count());
  for (double sigma : cfg.scales) {
    const HessianResponse h = hessian_2d(img, sigma);
    double max_s = 0;
    for (size_t i = 0; i < img.pixel_count(); ++i) {
      const double ixx = h.ixx.values[i], ixy = h.ixy.values[i],
                   iyy = h.iyy.values[i];
      const double half_tr = 0.5 * (ixx + iyy);
      const double d = std::sqrt(0.25 * (ixx - iyy) * (ixx - iyy) + ixy * ixy);
      double la = half_tr + d, lb = half_tr - d;
      if (std::abs(la) > std::abs(lb)) std::swap(la, lb);
      l1[i] = la;  // |l1| <= |l2|
      l2[i] = lb;
      max_s = std::max(max_s, std::sqrt(la * la + lb * lb));
    }
    // below the double rounding floor of the DC-corrected kernels the image
    // is flat at this scale, and auto-c would normalize pure rounding noise
    if (cfg.c <= 0 && max_s < 1e-12) continue;
    const double c = cfg.c > 0 ? cfg.c : 0.5 * max_s;
    for (size_t i = 0; i < img.pixel_count(); ++i) {
      if (l2[i] >= 0) continue;  // dark-ridge or flat: not a bright vessel
      const double rb = l1[i] / l2[i];
      const double s = std::sqrt(l1[i] * l1[i] + l2[i] * l2[i]);
      const double v = std::exp(-rb * rb / (2 * cfg.beta * cfg.beta)) *
                       (1.0 - std::exp(-s * s / (2 * c * c)));
      out.values[i] = std::max(out.values[i], v);
    }
  }
  return out;
}

GrayImage gabor_response(const GrayImage& img, const GaborConfig& cfg) {
  if (cfg.wavelengths.empty() || cfg.orientations < 1 || cfg.sigma_ratio <= 0)
    raise(ErrorCode::ConfigInvalid, "invalid gabor config");

  const int h = img.height, w = img.width;
  GrayImage out(h, w);
  for (double wavelength : cfg.wavelengths) {
    if (wavelength <= 0) raise(ErrorCode::ConfigInvalid, "wavelength must be > 0");
    const double sigma = cfg.sigma_ratio * wavelength;
    const int r = int(std::ceil(3.0 * sigma));
    const int side = 2 * r + 1;
    for (int o = 0; o < cfg.orientations; ++o) {
      const double theta = o * 3.14159265358979323846 / cfg.orientations;
      const double ct = std::cos(theta), st = std::sin(theta);
      std::vector<double> even(size_t(side) * side), odd(even.size()),
          env(even.size());
      double env_sum = 0, even_sum = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const size_t i = size_t(dy + r) * side + size_t(dx + r);
          const double xr = dx * ct + dy * st;
          env[i] = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
          const double phase = 2.0 * 3.14159265358979323846 * xr / wavelength;
          even[i] = std::cos(phase) * env[i];
          odd[i] = std::sin(phase) * env[i];
          env_sum += env[i];
          even_sum += even[i];
        }
      // remove the DC component along the envelope so offsets cancel
      for (size_t i = 0; i < even.size(); ++i) even[i] -= even_sum / env_sum * env[i];
      double even_l1 = 0, odd_l1 = 0;
      for (size_t i = 0; i < even.size(); ++i) {
        even_l1 += std::abs(even[i]);
        odd_l1 += std::abs(odd[i]);
      }
      // |kernel|_1 = 1/2 each, so the pair modulus stays within [0,1]
      for (double& v : even) v /= 2.0 * even_l1;
      for (double& v : odd) v /= 2.0 * odd_l1;

      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double e = 0, od = 0;
          for (int dy = -r; dy <= r; ++dy) {
            const int yy = reflect(y + dy, h);
            for (int dx = -r; dx <= r; ++dx) {
              const double pv = img.at(yy, reflect(x + dx, w));
              const size_t i = size_t(dy + r) * side + size_t(dx + r);
              e += even[i] * pv;
              od += odd[i] * pv;
            }
          }
          const double mag = std::sqrt(e * e + od * od);
          if (mag > out.at(y, x)) out.at(y, x) = mag;
        }
    }
  }
  return out;
}

BinaryMask filter_then_threshold(const GrayImage& img, FilterKind kind,
                                 const FrangiConfig& fcfg, const GaborConfig& gcfg,
                                 const ThresholdConfig& tcfg, GrayImage* response_out) {
  GrayImage response;
  switch (kind) {
    case FilterKind::None: response = img; break;
    case FilterKind::Frangi: response = normalize01(frangi_vesselness(img, fcfg)); break;
    case FilterKind::Gabor: response = normalize01(gabor_response(img, gcfg)); break;
    case FilterKind::ScirdTs:
      raise(ErrorCode::UnsupportedFilter, "unsupported filter: scird-ts");
  }
  if (response_out) *response_out = response;
  return adaptive_threshold(response, tcfg);
}

}  // namespace octaseg
