#include "octaseg/synth.hpp"

#include <algorithm>
#include <cstdlib>

#include "octaseg/rng.hpp"

namespace octaseg {

namespace {

// 16 compass directions as unit vectors in 1/256-px fixed point. Walk
// positions stay in int64 fixed point so the drawn geometry is identical
// on every platform.
struct Dir {
  int dx, dy;
};
constexpr Dir kDirs[16] = {
    {256, 0},    {237, 98},   {181, 181},  {98, 237},
    {0, 256},    {-98, 237},  {-181, 181}, {-237, 98},
    {-256, 0},   {-237, -98}, {-181, -181},{-98, -237},
    {0, -256},   {98, -237},  {181, -181}, {237, -98},
};

// Intensities are integer micro-units in [0, 1000000]; 1000000 == 1.0.
constexpr int64_t kMicro = 1000000;

int micro(double v) { return static_cast<int>(v * kMicro + 0.5); }

struct Canvas {
  int h, w;
  std::vector<int> intensity_mu;  // 0 = background
  std::vector<std::pair<int, int>> trunk_pixels;
  size_t vessel_count = 0;
  size_t hard_cap = 0;

  Canvas(int h_, int w_) : h(h_), w(w_), intensity_mu(size_t(h_) * w_, 0) {}

  bool stamp(int y, int x, int half, int value_mu, bool record_trunk) {
    // Refuses the stamp (and thereby ends the walk) once the pixel budget
    // is reached, keeping the vessel fraction under the configured cap.
    int side = 2 * half + 1;
    size_t added = 0;
    for (int dy = 0; dy < side; ++dy)
      for (int dx = 0; dx < side; ++dx) {
        int yy = y + dy - half, xx = x + dx - half;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        if (intensity_mu[size_t(yy) * w + xx] == 0) ++added;
      }
    if (vessel_count + added > hard_cap) return false;
    for (int dy = 0; dy < side; ++dy)
      for (int dx = 0; dx < side; ++dx) {
        int yy = y + dy - half, xx = x + dx - half;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        int& cell = intensity_mu[size_t(yy) * w + xx];
        if (cell == 0) ++vessel_count;
        cell = std::max(cell, value_mu);
      }
    if (record_trunk) trunk_pixels.emplace_back(y, x);
    return true;
  }
};

// One random walk. width_px: 1 draws single pixels, 2 a 2x2 block trailing
// down-right, 3 a 3x3 block. Returns false when the pixel budget stopped it.
bool walk(Canvas& cv, Rng& rng, int start_y, int start_x, int steps, int width_px,
          int value_mu, bool is_trunk) {
  int64_t fy = int64_t(start_y) << 8, fx = int64_t(start_x) << 8;
  int dir = static_cast<int>(rng.next_below(16));
  const int margin = 2;
  for (int s = 0; s < steps; ++s) {
    int py = static_cast<int>(fy >> 8), px = static_cast<int>(fx >> 8);
    bool ok;
    if (width_px == 1) {
      ok = cv.stamp(py, px, 0, value_mu, false);
    } else if (width_px == 2) {
      // 2x2 block: stamp as a 3x3 minus nothing would be width 3; emulate
      // width 2 by stamping the pixel and its right/down/diag neighbors.
      ok = true;
      size_t added = 0;
      for (int dy = 0; dy < 2 && ok; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          int yy = py + dy, xx = px + dx;
          if (yy >= cv.h || xx >= cv.w) continue;
          if (cv.intensity_mu[size_t(yy) * cv.w + xx] == 0) ++added;
        }
      if (cv.vessel_count + added > cv.hard_cap) {
        ok = false;
      } else {
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int yy = py + dy, xx = px + dx;
            if (yy >= cv.h || xx >= cv.w) continue;
            int& cell = cv.intensity_mu[size_t(yy) * cv.w + xx];
            if (cell == 0) ++cv.vessel_count;
            cell = std::max(cell, value_mu);
          }
        cv.trunk_pixels.emplace_back(py, px);
      }
    } else {
      ok = cv.stamp(py, px, 1, value_mu, is_trunk);
    }
    if (!ok) return false;

    // Meander: turn by one compass step with probability 6/8.
    uint64_t r = rng.next_below(8);
    if (r < 3) dir = (dir + 15) & 15;
    else if (r >= 5) dir = (dir + 1) & 15;
    fy += kDirs[dir].dy;
    fx += kDirs[dir].dx;
    int ny = static_cast<int>(fy >> 8), nx = static_cast<int>(fx >> 8);
    if (ny < margin || ny >= cv.h - margin || nx < margin || nx >= cv.w - margin) {
      dir = (dir + 8) & 15;  // bounce back toward the interior
      fy = std::clamp(fy, int64_t(margin) << 8, int64_t(cv.h - margin - 1) << 8);
      fx = std::clamp(fx, int64_t(margin) << 8, int64_t(cv.w - margin - 1) << 8);
    }
  }
  return true;
}

int uniform_mu(Rng& rng, double lo, double hi) {
  int lo_mu = micro(lo), hi_mu = micro(hi);
  return lo_mu + static_cast<int>(rng.next_below(uint64_t(hi_mu - lo_mu + 1)));
}

void spawn_trunk(Canvas& cv, Rng& rng, const SynthConfig& cfg) {
  int y = 2 + static_cast<int>(rng.next_below(uint64_t(cv.h - 4)));
  int x = 2 + static_cast<int>(rng.next_below(uint64_t(cv.w - 4)));
  int width_px = 2 + static_cast<int>(rng.next_below(2));  // 2 or 3
  int value = uniform_mu(rng, cfg.trunk_intensity_lo, cfg.trunk_intensity_hi);
  walk(cv, rng, y, x, cfg.trunk_steps, width_px, value, true);
}

void spawn_capillary(Canvas& cv, Rng& rng, const SynthConfig& cfg) {
  int y, x;
  if (!cv.trunk_pixels.empty()) {
    auto [ty, tx] = cv.trunk_pixels[rng.next_below(cv.trunk_pixels.size())];
    y = std::clamp(ty, 2, cv.h - 3);
    x = std::clamp(tx, 2, cv.w - 3);
  } else {
    y = 2 + static_cast<int>(rng.next_below(uint64_t(cv.h - 4)));
    x = 2 + static_cast<int>(rng.next_below(uint64_t(cv.w - 4)));
  }
  int value = uniform_mu(rng, cfg.capillary_intensity_lo, cfg.capillary_intensity_hi);
  walk(cv, rng, y, x, cfg.capillary_steps, 1, value, false);
}

}  // namespace

std::pair<GrayImage, BinaryMask> gen_synthetic_vessels(uint64_t seed, int height,
                                                       int width,
                                                       const SynthConfig& cfg) {
  if (height < 16 || width < 16)
    raise(ErrorCode::ConfigInvalid, "synthetic image dimensions must be >= 16");

  Rng rng(seed);
  Canvas cv(height, width);
  size_t total = size_t(height) * width;
  cv.hard_cap = static_cast<size_t>(cfg.max_fraction * double(total));

  for (int t = 0; t < cfg.num_trunks; ++t) spawn_trunk(cv, rng, cfg);
  for (int c = 0; c < cfg.num_capillaries; ++c) spawn_capillary(cv, rng, cfg);

  // Keep drawing until the minimum vessel fraction is met. Extra growth uses
  // capillaries when the config has any, otherwise more trunk walks so a
  // capillary-free mask stays capillary-free.
  size_t min_pixels = static_cast<size_t>(cfg.min_fraction * double(total)) + 1;
  for (int attempt = 0; cv.vessel_count < min_pixels && attempt < 400; ++attempt) {
    if (cfg.num_capillaries > 0) spawn_capillary(cv, rng, cfg);
    else spawn_trunk(cv, rng, cfg);
  }
  if (cv.vessel_count < min_pixels || cv.vessel_count > cv.hard_cap)
    raise(ErrorCode::NumericAbort, "synthetic vessel fraction out of bounds");

  // Render: base signal (background or vessel intensity) times multiplicative
  // speckle, all in integer micro-units, quantized to bytes. The returned
  // values are k/255 so a save/load round trip is the identity.
  GrayImage img(height, width);
  BinaryMask mask(height, width);
  int bg_mu = micro(cfg.background);
  for (size_t i = 0; i < total; ++i) {
    int base = cv.intensity_mu[i] > 0 ? cv.intensity_mu[i] : bg_mu;
    int64_t speckle = uniform_mu(rng, cfg.speckle_lo, cfg.speckle_hi);
    int64_t v = std::min<int64_t>(kMicro, int64_t(base) * speckle / kMicro);
    int byte = static_cast<int>((v * 255 + kMicro / 2) / kMicro);
    img.values[i] = byte / 255.0;
    mask.bits[i] = cv.intensity_mu[i] > 0 ? 1 : 0;
  }
  return {std::move(img), std::move(mask)};
}

}  // namespace octaseg
