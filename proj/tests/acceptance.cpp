// End-to-end acceptance suite. Prints exactly one PASS/FAIL/SKIPPED line per
// criterion; the process exits nonzero if any blocking criterion fails.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "octaseg/classical.hpp"
#include "octaseg/gradcheck.hpp"
#include "octaseg/image_io.hpp"
#include "octaseg/metrics.hpp"
#include "octaseg/morphology.hpp"
#include "octaseg/network.hpp"
#include "octaseg/pipeline.hpp"
#include "octaseg/rng.hpp"
#include "octaseg/synth.hpp"

using namespace octaseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const std::string& status, const std::string& detail) {
  std::cout << "CRITERION " << id << ": " << status;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
}

void pass(int id, const std::string& detail) { report(id, "PASS", detail); }

void fail(int id, const std::string& detail) {
  report(id, "FAIL", detail);
  ++g_failures;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- shared bits

Tensor<double> rand_tensor(Rng& rng, std::vector<int> dims, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(dims);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<double> spread_tensor(Rng& rng, std::vector<int> dims) {
  Tensor<double> t = Tensor<double>::zeros(dims);
  std::vector<int> order(t.numel());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (size_t i = 0; i < t.numel(); ++i)
    t.values()[i] = 0.05 * (order[i] + 1) * (rng.next_bool(0.5) ? 1.0 : -1.0);
  return t;
}

std::vector<double> rand_proj(Rng& rng, size_t n) {
  std::vector<double> r(n);
  for (double& v : r) v = rng.uniform(-1.0, 1.0);
  return r;
}

double dice_of(const BinaryMask& pred, const BinaryMask& gt) {
  const ConfusionCounts c = confusion(pred, gt);
  const double den = double(2 * c.tp + c.fp + c.fn);
  return den == 0 ? 1.0 : double(2 * c.tp) / den;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask out(a.height, a.width);
  for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = a.bits[i] & b.bits[i];
  return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask out(a.height, a.width);
  for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = a.bits[i] | b.bits[i];
  return out;
}

BinaryMask brute_dilate(const BinaryMask& m, double radius) {
  BinaryMask out(m.height, m.width);
  const int r = int(std::floor(radius)) + 1;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.get(y, x)) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= m.height || nx < 0 || nx >= m.width) continue;
          if (double(dy) * dy + double(dx) * dx <= radius * radius)
            out.set(ny, nx, true);
        }
    }
  return out;
}

// Vessel-like random masks: unions of jittered random-walk strokes, dilated to
// vessel width. Strokes left at single-pixel width can cross at pixel parity
// where a 2x2 junction core admits no topology-preserving deletion at all, so
// the corpus stays at domain-representative thickness.
BinaryMask stroke_mask(uint64_t seed, int h, int w) {
  Rng rng(seed);
  BinaryMask m(h, w);
  const int strokes = 1 + int(rng.next_below(5));
  for (int s = 0; s < strokes; ++s) {
    int y = int(rng.next_below(uint64_t(h)));
    int x = int(rng.next_below(uint64_t(w)));
    const int len = 6 + int(rng.next_below(uint64_t(h + w) / 2));
    int dy = int(rng.next_below(3)) - 1;
    int dx = int(rng.next_below(3)) - 1;
    if (dy == 0 && dx == 0) dx = 1;
    for (int i = 0; i < len; ++i) {
      if (y >= 0 && y < h && x >= 0 && x < w) m.set(y, x, true);
      if (rng.next_bool(0.2)) dy = int(rng.next_below(3)) - 1;
      if (rng.next_bool(0.2)) dx = int(rng.next_below(3)) - 1;
      if (dy == 0 && dx == 0) dy = 1;
      y += dy;
      x += dx;
    }
  }
  return dilate_disc(m, 1.0);
}

// thinning reference, transcribed independently of the production code
BinaryMask reference_thin(const BinaryMask& mask) {
  BinaryMask g = mask;
  auto P = [&](int y, int x) -> int {
    if (y < 0 || y >= g.height || x < 0 || x >= g.width) return 0;
    return g.get(y, x) ? 1 : 0;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int sub = 0; sub < 2; ++sub) {
      std::vector<std::pair<int, int>> doomed;
      for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
          if (!g.get(y, x)) continue;
          const int p2 = P(y - 1, x), p3 = P(y - 1, x + 1), p4 = P(y, x + 1),
                    p5 = P(y + 1, x + 1), p6 = P(y + 1, x), p7 = P(y + 1, x - 1),
                    p8 = P(y, x - 1), p9 = P(y - 1, x - 1);
          const int seq[8] = {p2, p3, p4, p5, p6, p7, p8, p9};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += seq[i];
            if (seq[i] == 0 && seq[(i + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (sub == 0) {
            if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
          } else {
            if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
          }
          doomed.emplace_back(y, x);
        }
      for (const auto& [y, x] : doomed) g.set(y, x, false);
      if (!doomed.empty()) changed = true;
    }
  }
  // peel topology-safe pixels off 2x2 junction residue, sequentially
  auto deletable = [&](int y, int x) {
    std::vector<std::pair<int, int>> cells;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if ((dy || dx) && P(y + dy, x + dx)) cells.emplace_back(dy, dx);
    if (cells.empty()) return false;
    if (P(y - 1, x) && P(y + 1, x) && P(y, x - 1) && P(y, x + 1)) return false;
    std::vector<bool> seen(cells.size(), false);
    std::vector<size_t> stack{0};
    seen[0] = true;
    size_t reached = 1;
    while (!stack.empty()) {
      const auto [cy, cx] = cells[stack.back()];
      stack.pop_back();
      for (size_t j = 0; j < cells.size(); ++j)
        if (!seen[j] && std::abs(cells[j].first - cy) <= 1 &&
            std::abs(cells[j].second - cx) <= 1) {
          seen[j] = true;
          stack.push_back(j);
          ++reached;
        }
    }
    return reached == cells.size();
  };
  auto in_block = [&](int y, int x) {
    for (int oy = -1; oy <= 0; ++oy)
      for (int ox = -1; ox <= 0; ++ox)
        if (P(y + oy, x + ox) && P(y + oy, x + ox + 1) && P(y + oy + 1, x + ox) &&
            P(y + oy + 1, x + ox + 1))
          return true;
    return false;
  };
  changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x)
        if (g.get(y, x) && in_block(y, x) && deletable(y, x)) {
          g.set(y, x, false);
          changed = true;
        }
  }
  return g;
}

// ------------------------------------------------------------- criterion 1

double check_primitive_gradients() {
  Rng rng(1000);
  double worst = 0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  for (const auto& s : std::vector<std::array<int, 5>>{{1, 1, 3, 3, 2},
                                                       {1, 2, 4, 5, 1},
                                                       {2, 1, 5, 4, 3},
                                                       {1, 3, 2, 2, 2},
                                                       {2, 2, 3, 5, 2}}) {
    Tensor<double> in = rand_tensor(rng, {s[0], s[1], s[2], s[3]});
    Tensor<double> w = rand_tensor(rng, {s[4], s[1], 3, 3});
    Tensor<double> b = rand_tensor(rng, {s[4]});
    const auto r = rand_proj(rng, size_t(s[0]) * s[4] * s[2] * s[3]);
    std::vector<Tensor<double>> leaves{in, w, b};
    track(gradient_check<double>(leaves, [&](Tape<double>* t) {
      return project_to_scalar<double>(t, conv2d<double>(t, in, w, b), r);
    }));
  }

  for (const auto& s : std::vector<std::array<int, 5>>{{1, 1, 1, 1, 1},
                                                       {1, 2, 2, 3, 1},
                                                       {2, 1, 3, 2, 2},
                                                       {1, 3, 2, 2, 2},
                                                       {2, 2, 4, 1, 3}}) {
    Tensor<double> in = rand_tensor(rng, {s[0], s[1], s[2], s[3]});
    Tensor<double> w = rand_tensor(rng, {s[1], s[4], 2, 2});
    const auto r = rand_proj(rng, size_t(s[0]) * s[4] * 4 * s[2] * s[3]);
    std::vector<Tensor<double>> leaves{in, w};
    track(gradient_check<double>(leaves, [&](Tape<double>* t) {
      return project_to_scalar<double>(t, transposed_conv2d<double>(t, in, w), r);
    }));
  }

  for (const auto& s : std::vector<std::array<int, 4>>{
           {1, 1, 2, 2}, {1, 2, 4, 4}, {2, 1, 6, 4}, {1, 3, 2, 6}, {2, 2, 4, 2}}) {
    Tensor<double> in = spread_tensor(rng, {s[0], s[1], s[2], s[3]});
    const auto r = rand_proj(rng, size_t(s[0]) * s[1] * (s[2] / 2) * (s[3] / 2));
    std::vector<Tensor<double>> leaves{in};
    track(gradient_check<double>(leaves, [&](Tape<double>* t) {
      return project_to_scalar<double>(t, max_pool2d<double>(t, in), r);
    }));
  }

  for (const auto& s : std::vector<std::vector<int>>{
           {4}, {3, 5}, {1, 2, 3, 3}, {2, 1, 4, 2}, {2, 3, 2, 2}}) {
    Tensor<double> in = spread_tensor(rng, s);
    const auto r = rand_proj(rng, in.numel());
    std::vector<Tensor<double>> leaves{in};
    track(gradient_check<double>(leaves, [&](Tape<double>* t) {
      return project_to_scalar<double>(t, relu<double>(t, in), r);
    }));
  }

  for (const auto& s : std::vector<std::array<int, 4>>{
           {1, 1, 2, 2}, {1, 2, 3, 3}, {2, 2, 2, 3}, {1, 3, 4, 2}, {3, 1, 2, 2}}) {
    Tensor<double> in = rand_tensor(rng, {s[0], s[1], s[2], s[3]});
    Tensor<double> gamma = rand_tensor(rng, {s[1]}, 0.5, 1.5);
    Tensor<double> beta = rand_tensor(rng, {s[1]});
    const auto r = rand_proj(rng, in.numel());
    std::vector<Tensor<double>> leaves{in, gamma, beta};
    for (bool training : {true, false}) {
      track(gradient_check<double>(leaves, [&](Tape<double>* t) {
        BatchNormState<double> st(s[1]);
        return project_to_scalar<double>(
            t, batch_norm2d<double>(t, in, gamma, beta, st, training), r);
      }));
    }
  }

  for (const auto& s : std::vector<std::array<int, 7>>{{1, 2, 4, 4, 4, 4, 3},
                                                       {1, 1, 6, 6, 4, 4, 2},
                                                       {2, 2, 5, 3, 3, 3, 1},
                                                       {1, 1, 8, 6, 4, 4, 1},
                                                       {2, 3, 4, 4, 2, 2, 1}}) {
    Tensor<double> skip = rand_tensor(rng, {s[0], s[1], s[2], s[3]});
    Tensor<double> trunk = rand_tensor(rng, {s[0], s[6], s[4], s[5]});
    const auto r = rand_proj(rng, size_t(s[0]) * (s[1] + s[6]) * s[4] * s[5]);
    std::vector<Tensor<double>> leaves{skip, trunk};
    track(gradient_check<double>(leaves, [&](Tape<double>* t) {
      return project_to_scalar<double>(t, concat_crop<double>(t, skip, trunk), r);
    }));
  }

  for (const auto& s : std::vector<std::array<int, 3>>{
           {1, 2, 2}, {2, 3, 3}, {1, 1, 1}, {1, 4, 3}, {3, 2, 2}}) {
    Tensor<double> logits = rand_tensor(rng, {s[0], 2, s[1], s[2]}, -2.0, 2.0);
    std::vector<uint8_t> target(size_t(s[0]) * s[1] * s[2]);
    for (auto& t : target) t = rng.next_bool(0.5) ? 1 : 0;
    std::vector<Tensor<double>> leaves{logits};
    track(gradient_check<double>(leaves, [&](Tape<double>* t) {
      return softmax_cross_entropy<double>(t, logits, target);
    }));
  }
  return worst;
}

// spot checks of d(loss)/d(theta) through the full magnifying network
double check_network_gradients() {
  ArchitectureConfig cfg;
  cfg.kind = ArchKind::IMN;
  cfg.depth = 1;
  cfg.width = 4;
  cfg.seed = 5;
  Network<double> net = build_network<double>(cfg);

  Rng rng(2000);
  Tensor<double> input = rand_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0);
  std::vector<uint8_t> target(64);
  for (auto& t : target) t = rng.next_bool(0.4) ? 1 : 0;

  auto loss_of = [&](Tape<double>* tape) {
    for (auto& st : net.bn_states) {  // probes must all see the same BN state
      std::fill(st.running_mean.begin(), st.running_mean.end(), 0.0);
      std::fill(st.running_var.begin(), st.running_var.end(), 1.0);
    }
    Tensor<double> logits = net.forward(tape, input, /*training=*/true);
    return softmax_cross_entropy<double>(tape, logits, target);
  };

  Tape<double> tape;
  Tensor<double> loss = loss_of(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : net.params) {
    analytic.push_back(p.value.has_grad() ? p.value.grad_view()
                                          : std::vector<double>(p.value.numel(), 0.0));
    p.value.clear_grad();
  }

  // Smaller step than the primitive suite: at 1e-3 a probe can push a pre-ReLU
  // activation or pool argmax across its hinge deeper in the graph, which makes
  // the central difference measure the wrong one-sided slope.
  const double h = 1e-5;
  double worst = 0;
  Rng pick(3000);
  for (int probe = 0; probe < 40; ++probe) {
    const size_t pi = size_t(pick.next_below(net.params.size()));
    auto& vals = net.params[pi].value.values();
    const size_t ei = size_t(pick.next_below(vals.size()));
    const double saved = vals[ei];
    vals[ei] = saved + h;
    const double plus = loss_of(nullptr).item();
    vals[ei] = saved - h;
    const double minus = loss_of(nullptr).item();
    vals[ei] = saved;
    const double numeric = (plus - minus) / (2 * h);
    const double a = analytic[pi][ei];
    // Floor sized to the central-difference resolution eps/(2h), not to the
    // primitive suite's 1e-8: a conv bias feeding batch norm has exactly zero
    // gradient (the mean subtraction cancels it) and its numeric probe is pure
    // cancellation noise of order 1e-11, which the check must accept as zero.
    worst = std::max(worst, std::abs(a - numeric) /
                                std::max(1e-6, std::abs(a) + std::abs(numeric)));
  }
  return worst;
}

void criterion_1() {
  const auto t0 = Clock::now();
  try {
    const double prim = check_primitive_gradients();
    const double e2e = check_network_gradients();
    const double secs = seconds_since(t0);
    const bool ok = prim < 1e-4 && e2e < 1e-3 && secs < 120.0;
    const std::string detail = "primitive max rel err " + fmt(prim) +
                               ", network spot-check max " + fmt(e2e) + ", " +
                               fmt(secs, 3) + " s";
    ok ? pass(1, detail) : fail(1, detail);
  } catch (const std::exception& e) {
    fail(1, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 2

struct OverfitResult {
  double dice = 0;
  int steps = 0;
};

OverfitResult overfit(Network<float>& net,
                      const std::vector<std::pair<GrayImage, BinaryMask>>& crops,
                      double need) {
  AdamConfig<float> opt;
  opt.lr = 1e-3f;
  OverfitResult res;
  for (int step = 1; step <= 300; ++step) {
    const auto& [img, mask] = crops[size_t((step - 1) % crops.size())];
    train_step(net, image_to_tensor<float>(img), mask, opt);
    res.steps = step;
    if (step % 10 == 0 || step == 300) {
      double sum = 0;
      for (const auto& [ci, cm] : crops) sum += dice_of(predict_mask(net, ci), cm);
      res.dice = sum / double(crops.size());
      if (res.dice >= need) return res;
    }
  }
  return res;
}

std::optional<Network<float>> g_trained_imn;

void criterion_2() {
  const auto t0 = Clock::now();
  try {
    std::vector<std::pair<GrayImage, BinaryMask>> crops;
    for (uint64_t i = 0; i < 4; ++i)
      crops.push_back(gen_synthetic_vessels(100 + i, 76, 76));

    auto make = [&](ArchKind kind) {
      ArchitectureConfig cfg;
      cfg.kind = kind;
      cfg.depth = 2;
      cfg.width = 16;
      cfg.seed = 1;
      return build_network<float>(cfg);
    };

    Network<float> imn = make(ArchKind::IMN);
    const OverfitResult ri = overfit(imn, crops, 0.95);
    g_trained_imn = std::move(imn);
    Network<float> unet = make(ArchKind::UNET);
    const OverfitResult ru = overfit(unet, crops, 0.90);
    Network<float> cnn = make(ArchKind::CNN7);
    const OverfitResult rc = overfit(cnn, crops, 0.90);

    const double secs = seconds_since(t0);
    const bool ok =
        ri.dice >= 0.95 && ru.dice >= 0.90 && rc.dice >= 0.90 && secs < 600.0;
    const std::string detail =
        "imn dice " + fmt(ri.dice) + " @" + std::to_string(ri.steps) +
        " steps, unet " + fmt(ru.dice) + " @" + std::to_string(ru.steps) +
        ", cnn7 " + fmt(rc.dice) + " @" + std::to_string(rc.steps) + ", " +
        fmt(secs, 3) + " s";
    ok ? pass(2, detail) : fail(2, detail);
  } catch (const std::exception& e) {
    fail(2, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 3

void criterion_3() {
  const auto t0 = Clock::now();
  try {
    Rng rng(42);
    int exact_fail = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      BinaryMask pred(16, 16), gt(16, 16);
      const double dp = rng.uniform(0.05, 0.9), dg = rng.uniform(0.05, 0.9);
      for (auto& b : pred.bits) b = rng.next_bool(dp) ? 1 : 0;
      for (auto& b : gt.bits) b = rng.next_bool(dg) ? 1 : 0;
      uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
      for (size_t i = 0; i < pred.bits.size(); ++i) {
        if (pred.bits[i] && gt.bits[i]) ++tp;
        else if (pred.bits[i]) ++fp;
        else if (gt.bits[i]) ++fn;
        else ++tn;
      }
      const ConfusionCounts c = confusion(pred, gt);
      if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn) ++exact_fail;
      const OverlapMetrics m = overlap_metrics(c);
      const double total = double(tp + fp + fn + tn);
      auto bad = [](std::optional<double> got, double want) {
        return !got || *got != want;
      };
      if (2 * tp + fp + fn > 0 &&
          bad(m.dice, 2.0 * double(tp) / double(2 * tp + fp + fn)))
        ++exact_fail;
      if (bad(m.acc, double(tp + tn) / total)) ++exact_fail;
      if (tp + fn > 0 && bad(m.rec, double(tp) / double(tp + fn))) ++exact_fail;
      if (tp + fp > 0 && bad(m.pre, double(tp) / double(tp + fp))) ++exact_fail;
    }

    double cal_err = 0;
    int cal_pairs = 0;
    for (uint64_t seed = 0; cal_pairs < 50; ++seed) {
      const BinaryMask pred = stroke_mask(seed * 2 + 1, 24, 24);
      const BinaryMask gt = stroke_mask(seed * 2 + 2, 24, 24);
      if (gt.count_true() == 0) continue;
      ++cal_pairs;
      const CalResult got = cal_score(pred, gt, 2.0);
      const double c_ref =
          1.0 - std::min(1.0, std::abs(double(connected_components(gt, 8).count) -
                                       double(connected_components(pred, 8).count)) /
                                  double(gt.count_true()));
      const BinaryMask dp = brute_dilate(pred, 2.0), dg = brute_dilate(gt, 2.0);
      const double a_num =
          double(mask_or(mask_and(dp, gt), mask_and(pred, dg)).count_true());
      const double a_den = double(mask_or(pred, gt).count_true());
      const double a_ref = a_den == 0 ? 1.0 : a_num / a_den;
      const BinaryMask sp = reference_thin(pred), sg = reference_thin(gt);
      const double l_num =
          double(mask_or(mask_and(sp, dg), mask_and(dp, sg)).count_true());
      const double l_den = double(mask_or(sp, sg).count_true());
      const double l_ref = l_den == 0 ? 1.0 : l_num / l_den;
      cal_err = std::max({cal_err, std::abs(got.c - c_ref), std::abs(got.a - a_ref),
                          std::abs(got.l - l_ref),
                          std::abs(got.cal - c_ref * a_ref * l_ref)});
    }

    bool srec_ok = true;
    {
      const auto [img, mask] = gen_synthetic_vessels(77, 48, 48);
      if (skeleton_recall(mask, mask, 0) != 1.0) srec_ok = false;
      BinaryMask line(1, 10);
      for (int x = 0; x < 10; ++x) line.set(0, x, true);
      if (skeleton_recall(BinaryMask(1, 10), line, 0) != 0.0) srec_ok = false;
      BinaryMask half(1, 10);
      for (int x = 0; x < 5; ++x) half.set(0, x, true);
      if (skeleton_recall(half, line, 0) != 0.5) srec_ok = false;
    }

    const double secs = seconds_since(t0);
    const bool ok = exact_fail == 0 && cal_err < 1e-12 && srec_ok && secs < 60.0;
    const std::string detail = std::to_string(exact_fail) +
                               " oracle mismatches, cal max err " + fmt(cal_err) +
                               ", srec degenerates " + (srec_ok ? "ok" : "BAD") +
                               ", " + fmt(secs, 3) + " s";
    ok ? pass(3, detail) : fail(3, detail);
  } catch (const std::exception& e) {
    fail(3, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 4

void criterion_4() {
  const auto t0 = Clock::now();
  try {
    int violations = 0;
    std::string first_bad;
    auto check_mask = [&](const BinaryMask& m, const std::string& tag) {
      const SkeletonMask skel = zhang_suen_thin(m);
      bool ok = true;
      for (size_t i = 0; i < m.bits.size(); ++i)
        if (skel.bits[i] && !m.bits[i]) ok = false;
      if (!(zhang_suen_thin(skel) == skel)) ok = false;
      if (connected_components(skel, 8).count != connected_components(m, 8).count)
        ok = false;
      if (has_2x2_block(skel)) ok = false;
      if (!(skel == reference_thin(m))) ok = false;
      if (!ok) {
        ++violations;
        if (first_bad.empty()) first_bad = tag;
      }
    };

    for (uint64_t seed = 0; seed < 200; ++seed)
      check_mask(stroke_mask(9000 + seed, 40, 40), "random " + std::to_string(seed));
    for (uint64_t seed = 0; seed < 50; ++seed) {
      const auto [img, mask] = gen_synthetic_vessels(seed, 64, 64);
      check_mask(mask, "vessel " + std::to_string(seed));
    }

    BinaryMask bar(3, 7);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 7; ++x) bar.set(y, x, true);
    BinaryMask pinned(3, 7);
    for (int x = 1; x <= 4; ++x) pinned.set(1, x, true);
    const bool bar_ok = zhang_suen_thin(bar) == pinned;

    const double secs = seconds_since(t0);
    const bool ok = violations == 0 && bar_ok && secs < 60.0;
    std::string detail = std::to_string(violations) + " property violations";
    if (!first_bad.empty()) detail += " (first: " + first_bad + ")";
    detail += std::string(", 3x7 pin ") + (bar_ok ? "ok" : "BAD") + ", " +
              fmt(secs, 3) + " s";
    ok ? pass(4, detail) : fail(4, detail);
  } catch (const std::exception& e) {
    fail(4, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 5

void criterion_5() {
  const auto t0 = Clock::now();
  try {
    Rng rng(555);
    int exact_fail = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const int h = 80 + int(rng.next_below(81));
      const int w = 80 + int(rng.next_below(81));
      const int tile = 16 + int(rng.next_below(uint64_t(std::min({h, w, 76}) - 15)));
      const int stride = std::max(1, tile / 2 + int(rng.next_below(uint64_t(tile / 2))));
      const TileLayout layout = make_tile_layout(h, w, tile, stride);
      GrayImage img(h, w);
      for (double& v : img.values) v = rng.next_double();
      std::vector<std::vector<double>> tiles;
      for (const auto& [oy, ox] : layout.origins) {
        std::vector<double> t(size_t(tile) * tile);
        for (int y = 0; y < tile; ++y)
          for (int x = 0; x < tile; ++x)
            t[size_t(y) * tile + x] = img.at(oy + y, ox + x);
        tiles.push_back(std::move(t));
      }
      const GrayImage stitched = stitch_tiles(layout, tiles);
      if (!(stitched.values == img.values)) ++exact_fail;

      // order invariance under a random permutation
      std::vector<size_t> perm(layout.origins.size());
      std::iota(perm.begin(), perm.end(), size_t(0));
      rng.shuffle(perm);
      TileLayout shuffled = layout;
      std::vector<std::vector<double>> shuffled_tiles;
      for (size_t i = 0; i < perm.size(); ++i) {
        shuffled.origins[i] = layout.origins[perm[i]];
        shuffled_tiles.push_back(tiles[perm[i]]);
      }
      if (!(stitch_tiles(shuffled, shuffled_tiles).values == stitched.values))
        ++exact_fail;
    }

    if (!g_trained_imn) {
      std::vector<std::pair<GrayImage, BinaryMask>> crops;
      for (uint64_t i = 0; i < 4; ++i)
        crops.push_back(gen_synthetic_vessels(100 + i, 76, 76));
      ArchitectureConfig cfg;
      cfg.kind = ArchKind::IMN;
      cfg.depth = 2;
      cfg.width = 16;
      cfg.seed = 1;
      Network<float> net = build_network<float>(cfg);
      overfit(net, crops, 0.95);
      g_trained_imn = std::move(net);
    }

    double worst_agreement = 1.0;
    for (uint64_t seed = 300; seed < 303; ++seed) {
      const auto [img, mask] = gen_synthetic_vessels(seed, 152, 152);
      const TileLayout layout = make_tile_layout(152, 152, 76, 56);
      const BinaryMask stitched = infer_full_image(*g_trained_imn, img, layout);
      const BinaryMask single = predict_mask(*g_trained_imn, img);
      size_t agree = 0;
      for (size_t i = 0; i < stitched.bits.size(); ++i)
        if (stitched.bits[i] == single.bits[i]) ++agree;
      worst_agreement =
          std::min(worst_agreement, double(agree) / double(stitched.bits.size()));
    }

    const double secs = seconds_since(t0);
    const bool ok = exact_fail == 0 && worst_agreement >= 0.95;
    const std::string detail = std::to_string(exact_fail) +
                               " stitch mismatches, worst agreement " +
                               fmt(worst_agreement) + ", " + fmt(secs, 3) + " s";
    ok ? pass(5, detail) : fail(5, detail);
  } catch (const std::exception& e) {
    fail(5, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 6

std::string find_octa_ss() {
  std::vector<std::string> candidates;
  if (const char* env = std::getenv("OCTA_SS_DIR")) candidates.push_back(env);
  candidates.insert(candidates.end(), {"data/octa-ss", "data/OCTA-SS",
                                       "../data/octa-ss", "/root/data/octa-ss"});
  for (const std::string& c : candidates)
    if (fs::is_directory(c) && fs::is_directory(fs::path(c) / "images")) return c;
  return "";
}

void criterion_6() {
  const std::string root = find_octa_ss();
  if (root.empty()) {
    report(6, "SKIPPED", "OCTA-SS dataset not present; set OCTA_SS_DIR to enable");
    return;
  }
  try {
    const Dataset ds = load_dataset(root);
    double best_dice = -1.0, best_t = 0.0;
    for (double t = 1.0; t <= 40.0; t += 1.0) {
      ThresholdConfig cfg;
      cfg.sensitivity = t;
      double sum = 0;
      int n = 0;
      for (const DatasetItem& item : ds.items) {
        if (!item.label) continue;
        sum += dice_of(adaptive_threshold(item.image, cfg), *item.label);
        ++n;
      }
      if (n == 0) break;
      if (sum / n > best_dice) {
        best_dice = sum / n;
        best_t = t;
      }
    }
    const bool ok = best_dice >= 0 && std::abs(best_dice - 0.8423) <= 0.03;
    const std::string detail = "best mean dice " + fmt(best_dice) +
                               " at sensitivity " + fmt(best_t, 3) + " over " +
                               root;
    ok ? pass(6, detail) : fail(6, detail);
  } catch (const std::exception& e) {
    fail(6, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 7

void criterion_7() {
  const auto t0 = Clock::now();
  try {
    Dataset all;
    for (int i = 0; i < 200; ++i) {
      DatasetItem item;
      item.id = "bench" + std::to_string(i);
      auto [img, mask] = gen_synthetic_vessels(uint64_t(7000 + i), 76, 76);
      item.image = std::move(img);
      item.label = std::move(mask);
      all.items.push_back(std::move(item));
    }

    auto srec_of = [&](Network<float>& net, const Dataset& test) {
      const TileLayout layout = make_tile_layout(76, 76, 76, 76);
      double sum = 0;
      for (const DatasetItem& item : test.items)
        sum += skeleton_recall(infer_full_image(net, item.image, layout),
                               *item.label, 0);
      return sum / double(test.items.size());
    };

    const fs::path scratch = fs::temp_directory_path() / "octaseg_acceptance_srec";
    int imn_wins = 0;
    std::string per_seed;
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const auto [train_ds, test_ds] = split_dataset(all, 180, seed);
      ArchitectureConfig acfg;
      acfg.depth = 2;
      acfg.width = 8;
      acfg.seed = seed;
      TrainConfig tcfg;
      tcfg.lr = 1e-3;
      tcfg.max_steps = 80;
      tcfg.crop = 76;
      tcfg.seed = seed;

      auto train_one = [&](ArchKind kind, const char* tag) {
        acfg.kind = kind;
        const fs::path out = scratch / (std::string(tag) + std::to_string(seed));
        fs::remove_all(out);
        fs::create_directories(out);
        const TrainRun run = train(train_ds, nullptr, acfg, tcfg, out.string());
        return load_checkpoint(run.final_checkpoint);
      };

      Network<float> imn = train_one(ArchKind::IMN, "imn");
      const double s_imn = srec_of(imn, test_ds);
      Network<float> unet = train_one(ArchKind::UNET, "unet");
      const double s_unet = srec_of(unet, test_ds);

      if (s_imn >= s_unet) ++imn_wins;
      per_seed += (per_seed.empty() ? "" : "; ") + std::string("seed ") +
                  std::to_string(seed) + ": imn " + fmt(s_imn, 3) + " vs unet " +
                  fmt(s_unet, 3);
    }
    const double secs = seconds_since(t0);
    const std::string detail = "advisory, non-blocking: imn wins " +
                               std::to_string(imn_wins) + "/5 [" + per_seed + "], " +
                               fmt(secs, 3) + " s";
    // logged either way; this criterion never gates the build
    report(7, imn_wins >= 3 ? "PASS" : "FAIL", detail);
  } catch (const std::exception& e) {
    report(7, "FAIL", std::string("advisory, non-blocking exception: ") + e.what());
  }
}

// ------------------------------------------------------------- criterion 8

void criterion_8() {
  const auto t0 = Clock::now();
  try {
    Dataset ds;
    for (int i = 0; i < 6; ++i) {
      DatasetItem item;
      item.id = "det" + std::to_string(i);
      auto [img, mask] = gen_synthetic_vessels(uint64_t(8800 + i), 76, 76);
      item.image = std::move(img);
      item.label = std::move(mask);
      ds.items.push_back(std::move(item));
    }
    const auto [train_ds, eval_ds] = split_dataset(ds, 4, 1);

    auto run_once = [&](const std::string& tag) {
      const fs::path out =
          fs::temp_directory_path() / ("octaseg_acceptance_det_" + tag);
      fs::remove_all(out);
      fs::create_directories(out);
      ArchitectureConfig acfg;
      acfg.kind = ArchKind::IMN;
      acfg.depth = 1;
      acfg.width = 8;
      acfg.seed = 77;
      TrainConfig tcfg;
      tcfg.lr = 1e-3;
      tcfg.max_steps = 15;
      tcfg.crop = 38;
      tcfg.seed = 77;
      tcfg.eval_every = 5;
      std::ostringstream log;
      const TrainRun run = train(train_ds, &eval_ds, acfg, tcfg, out.string(), &log);
      std::ifstream f(run.final_checkpoint, std::ios::binary);
      const std::string ckpt((std::istreambuf_iterator<char>(f)), {});
      return std::make_tuple(run.loss_log, log.str(), ckpt);
    };

    const auto a = run_once("a");
    const auto b = run_once("b");
    const bool ok = std::get<0>(a) == std::get<0>(b) &&
                    std::get<1>(a) == std::get<1>(b) &&
                    std::get<2>(a) == std::get<2>(b) && !std::get<2>(a).empty();
    const double secs = seconds_since(t0);
    const std::string detail =
        std::string("loss log, json log and checkpoint bytes ") +
        (ok ? "identical" : "DIFFER") + " across runs, " + fmt(secs, 3) + " s";
    ok ? pass(8, detail) : fail(8, detail);
  } catch (const std::exception& e) {
    fail(8, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  if (g_failures) {
    std::cout << g_failures << " blocking criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all blocking criteria passed" << std::endl;
  return 0;
}
