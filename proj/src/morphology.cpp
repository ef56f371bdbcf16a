#include "octaseg/morphology.hpp"

#include <cmath>

namespace octaseg {

namespace {

// Eight neighbors of p clockwise from north: P2..P9.
inline void neighbors(const BinaryMask& m, int y, int x, int p[8]) {
  auto v = [&](int yy, int xx) {
    return (yy >= 0 && yy < m.height && xx >= 0 && xx < m.width) ? int(m.get(yy, xx))
                                                                 : 0;
  };
  p[0] = v(y - 1, x);      // P2
  p[1] = v(y - 1, x + 1);  // P3
  p[2] = v(y, x + 1);      // P4
  p[3] = v(y + 1, x + 1);  // P5
  p[4] = v(y + 1, x);      // P6
  p[5] = v(y + 1, x - 1);  // P7
  p[6] = v(y, x - 1);      // P8
  p[7] = v(y - 1, x - 1);  // P9
}

// Yokoi connectivity number for 8-connected foreground. 1 means deleting the
// pixel leaves its foreground neighbors mutually 8-connected and opens no
// hole, so the pixel can be removed without changing the mask's topology.
inline int yokoi8(const int p[8]) {
  // x1..x8 = E, NE, N, NW, W, SW, S, SE; p[] is P2..P9 clockwise from north
  const int x[8] = {p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]};
  int n = 0;
  for (int k = 0; k < 8; k += 2) {
    const int xk = 1 - x[k], xk1 = 1 - x[(k + 1) % 8], xk2 = 1 - x[(k + 2) % 8];
    n += xk - xk * xk1 * xk2;
  }
  return n;
}

inline bool in_2x2_block(const BinaryMask& m, int y, int x) {
  for (int oy = -1; oy <= 0; ++oy)
    for (int ox = -1; ox <= 0; ++ox) {
      const int ty = y + oy, tx = x + ox;
      if (ty < 0 || tx < 0 || ty + 1 >= m.height || tx + 1 >= m.width) continue;
      if (m.get(ty, tx) && m.get(ty, tx + 1) && m.get(ty + 1, tx) &&
          m.get(ty + 1, tx + 1))
        return true;
    }
  return false;
}

}  // namespace

SkeletonMask zhang_suen_thin(const BinaryMask& mask) {
  BinaryMask cur = mask;
  std::vector<std::pair<int, int>> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int sub = 0; sub < 2; ++sub) {
      doomed.clear();
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width; ++x) {
          if (!cur.get(y, x)) continue;
          int p[8];
          neighbors(cur, y, x, p);
          const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int i = 0; i < 8; ++i)
            if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
          if (a != 1) continue;
          // sub 0: P2*P4*P6 = 0 and P4*P6*P8 = 0
          // sub 1: P2*P4*P8 = 0 and P2*P6*P8 = 0
          const bool cond = sub == 0
                                ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
          if (cond) doomed.emplace_back(y, x);
        }
      for (auto [y, x] : doomed) cur.set(y, x, false);
      if (!doomed.empty()) changed = true;
    }
  }
  // The parallel passes can leave 2x2 residue at junctions, where every block
  // pixel fails the crossing-number test. Peel simple pixels off such blocks
  // sequentially; yokoi8 == 1 guarantees the topology is untouched.
  changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < cur.height; ++y)
      for (int x = 0; x < cur.width; ++x) {
        if (!cur.get(y, x) || !in_2x2_block(cur, y, x)) continue;
        int p[8];
        neighbors(cur, y, x, p);
        if (yokoi8(p) != 1) continue;
        cur.set(y, x, false);
        changed = true;
      }
  }
  return cur;
}

BinaryMask dilate_disc(const BinaryMask& mask, double radius) {
  if (radius < 0) raise(ErrorCode::ConfigInvalid, "dilation radius must be >= 0");
  const int r = int(std::floor(radius));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (double(dy) * dy + double(dx) * dx <= radius * radius)
        offsets.emplace_back(dy, dx);

  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(y, x)) continue;
      for (auto [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width)
          out.set(yy, xx, true);
      }
    }
  return out;
}

ComponentLabeling connected_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    raise(ErrorCode::ConfigInvalid, "connectivity must be 4 or 8");
  ComponentLabeling out;
  out.height = mask.height;
  out.width = mask.width;
  out.connectivity = connectivity;
  out.labels.assign(mask.pixel_count(), 0);

  static const int d8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                               {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  static const int d4[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  const int n_dirs = connectivity == 8 ? 8 : 4;

  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(y, x) || out.labels[size_t(y) * mask.width + x] != 0) continue;
      const int32_t label = ++out.count;
      stack.assign(1, {y, x});
      out.labels[size_t(y) * mask.width + x] = label;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int i = 0; i < n_dirs; ++i) {
          const int yy = cy + (connectivity == 8 ? d8[i][0] : d4[i][0]);
          const int xx = cx + (connectivity == 8 ? d8[i][1] : d4[i][1]);
          if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width) continue;
          size_t idx = size_t(yy) * mask.width + xx;
          if (mask.bits[idx] && out.labels[idx] == 0) {
            out.labels[idx] = label;
            stack.emplace_back(yy, xx);
          }
        }
      }
    }
  return out;
}

}  // namespace octaseg
