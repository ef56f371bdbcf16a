#include "octaseg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace octaseg {

namespace {

template <typename T>
void check_4d(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) raise(ErrorCode::ShapeMismatch, std::string(what) + " must be 4-D");
}

// Copies NCHW values into an N*C*(H+2)*(W+2) buffer with a one-pixel zero
// frame, so the 3x3 kernel loops never branch on bounds.
template <typename T>
std::shared_ptr<std::vector<T>> pad1(const std::vector<T>& src, int n, int c, int h,
                                     int w) {
  auto out = std::make_shared<std::vector<T>>(size_t(n) * c * (h + 2) * (w + 2), T(0));
  const int hp = h + 2, wp = w + 2;
  for (int i = 0; i < n * c; ++i) {
    const T* s = src.data() + size_t(i) * h * w;
    T* d = out->data() + size_t(i) * hp * wp;
    for (int y = 0; y < h; ++y)
      std::copy(s + size_t(y) * w, s + size_t(y) * w + w, d + size_t(y + 1) * wp + 1);
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  check_4d(input, "conv2d input");
  check_4d(weight, "conv2d weight");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oc = weight.dim(0);
  if (weight.dim(1) != c || weight.dim(2) != 3 || weight.dim(3) != 3)
    raise(ErrorCode::ShapeMismatch, "conv2d weight must be [outC][inC][3][3]");
  if (bias.rank() != 1 || bias.dim(0) != oc)
    raise(ErrorCode::ShapeMismatch, "conv2d bias must be [outC]");

  auto padded = pad1(input.values(), n, c, h, w);
  const int wp = w + 2;

  Tensor<T> out = Tensor<T>::zeros({n, oc, h, w});
  const T* wgt = weight.values().data();
  const T* bs = bias.values().data();
  T* ov = out.values().data();
  for (int in = 0; in < n; ++in) {
    for (int io = 0; io < oc; ++io) {
      T* oplane = ov + (size_t(in) * oc + io) * h * w;
      std::fill(oplane, oplane + size_t(h) * w, bs[io]);
      for (int ic = 0; ic < c; ++ic) {
        const T* iplane = padded->data() + (size_t(in) * c + ic) * (h + 2) * wp;
        const T* k = wgt + ((size_t(io) * c + ic) * 9);
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T kv = k[ky * 3 + kx];
            for (int y = 0; y < h; ++y) {
              const T* irow = iplane + size_t(y + ky) * wp + kx;
              T* orow = oplane + size_t(y) * w;
              for (int x = 0; x < w; ++x) orow[x] += kv * irow[x];
            }
          }
        }
      }
    }
  }

  if (tape) {
    out.set_requires_grad(input.requires_grad() || weight.requires_grad() ||
                          bias.requires_grad());
    if (out.requires_grad()) {
      Tensor<T> in_h = input, w_h = weight, b_h = bias, out_h = out;
      tape->record([in_h, w_h, b_h, out_h, padded, n, c, h, w, oc]() mutable {
        const std::vector<T>& g = out_h.grad_view();
        if (g.empty()) return;
        const int wp = w + 2;
        if (b_h.requires_grad()) {
          std::vector<T>& db = b_h.grad();
          for (int in = 0; in < n; ++in)
            for (int io = 0; io < oc; ++io) {
              const T* gp = g.data() + (size_t(in) * oc + io) * h * w;
              T acc = 0;
              for (size_t i = 0; i < size_t(h) * w; ++i) acc += gp[i];
              db[io] += acc;
            }
        }
        if (w_h.requires_grad()) {
          std::vector<T>& dw = w_h.grad();
          for (int in = 0; in < n; ++in)
            for (int io = 0; io < oc; ++io) {
              const T* gp = g.data() + (size_t(in) * oc + io) * h * w;
              for (int ic = 0; ic < c; ++ic) {
                const T* iplane = padded->data() + (size_t(in) * c + ic) * (h + 2) * wp;
                T* dk = dw.data() + ((size_t(io) * c + ic) * 9);
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx) {
                    T acc = 0;
                    for (int y = 0; y < h; ++y) {
                      const T* irow = iplane + size_t(y + ky) * wp + kx;
                      const T* grow = gp + size_t(y) * w;
                      for (int x = 0; x < w; ++x) acc += irow[x] * grow[x];
                    }
                    dk[ky * 3 + kx] += acc;
                  }
              }
            }
        }
        if (in_h.requires_grad()) {
          // Accumulate into a padded buffer, then crop the frame off.
          std::vector<T> dpad(size_t(n) * c * (h + 2) * wp, T(0));
          const T* wgt = w_h.values().data();
          for (int in = 0; in < n; ++in)
            for (int io = 0; io < oc; ++io) {
              const T* gp = g.data() + (size_t(in) * oc + io) * h * w;
              for (int ic = 0; ic < c; ++ic) {
                T* dplane = dpad.data() + (size_t(in) * c + ic) * (h + 2) * wp;
                const T* k = wgt + ((size_t(io) * c + ic) * 9);
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx) {
                    const T kv = k[ky * 3 + kx];
                    for (int y = 0; y < h; ++y) {
                      T* drow = dplane + size_t(y + ky) * wp + kx;
                      const T* grow = gp + size_t(y) * w;
                      for (int x = 0; x < w; ++x) drow[x] += kv * grow[x];
                    }
                  }
              }
            }
          std::vector<T>& din = in_h.grad();
          for (int i = 0; i < n * c; ++i) {
            const T* s = dpad.data() + size_t(i) * (h + 2) * wp;
            T* d = din.data() + size_t(i) * h * w;
            for (int y = 0; y < h; ++y) {
              const T* srow = s + size_t(y + 1) * wp + 1;
              T* drow = d + size_t(y) * w;
              for (int x = 0; x < w; ++x) drow[x] += srow[x];
            }
          }
        }
      });
    }
  }
  return out;
}

template <typename T>
Tensor<T> transposed_conv2d(Tape<T>* tape, const Tensor<T>& input,
                            const Tensor<T>& weight) {
  check_4d(input, "transposed_conv2d input");
  check_4d(weight, "transposed_conv2d weight");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oc = weight.dim(1);
  if (weight.dim(0) != c || weight.dim(2) != 2 || weight.dim(3) != 2)
    raise(ErrorCode::ShapeMismatch, "transposed_conv2d weight must be [inC][outC][2][2]");

  const int oh = 2 * h, ow = 2 * w;
  Tensor<T> out = Tensor<T>::zeros({n, oc, oh, ow});
  const T* wgt = weight.values().data();
  const T* iv = input.values().data();
  T* ov = out.values().data();
  for (int in = 0; in < n; ++in)
    for (int io = 0; io < oc; ++io) {
      T* oplane = ov + (size_t(in) * oc + io) * oh * ow;
      for (int ic = 0; ic < c; ++ic) {
        const T* iplane = iv + (size_t(in) * c + ic) * h * w;
        const T* k = wgt + ((size_t(ic) * oc + io) * 4);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const T kv = k[dy * 2 + dx];
            for (int y = 0; y < h; ++y) {
              const T* irow = iplane + size_t(y) * w;
              T* orow = oplane + size_t(2 * y + dy) * ow + dx;
              for (int x = 0; x < w; ++x) orow[2 * x] += kv * irow[x];
            }
          }
      }
    }

  if (tape) {
    out.set_requires_grad(input.requires_grad() || weight.requires_grad());
    if (out.requires_grad()) {
      Tensor<T> in_h = input, w_h = weight, out_h = out;
      tape->record([in_h, w_h, out_h, n, c, h, w, oc]() mutable {
        const std::vector<T>& g = out_h.grad_view();
        if (g.empty()) return;
        const int oh = 2 * h, ow = 2 * w;
        if (w_h.requires_grad()) {
          std::vector<T>& dw = w_h.grad();
          const T* iv = in_h.values().data();
          for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < c; ++ic) {
              const T* iplane = iv + (size_t(in) * c + ic) * h * w;
              for (int io = 0; io < oc; ++io) {
                const T* gplane = g.data() + (size_t(in) * oc + io) * oh * ow;
                T* dk = dw.data() + ((size_t(ic) * oc + io) * 4);
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx) {
                    T acc = 0;
                    for (int y = 0; y < h; ++y) {
                      const T* irow = iplane + size_t(y) * w;
                      const T* grow = gplane + size_t(2 * y + dy) * ow + dx;
                      for (int x = 0; x < w; ++x) acc += irow[x] * grow[2 * x];
                    }
                    dk[dy * 2 + dx] += acc;
                  }
              }
            }
        }
        if (in_h.requires_grad()) {
          std::vector<T>& din = in_h.grad();
          const T* wgt = w_h.values().data();
          for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < c; ++ic) {
              T* dplane = din.data() + (size_t(in) * c + ic) * h * w;
              for (int io = 0; io < oc; ++io) {
                const T* gplane = g.data() + (size_t(in) * oc + io) * oh * ow;
                const T* k = wgt + ((size_t(ic) * oc + io) * 4);
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx) {
                    const T kv = k[dy * 2 + dx];
                    for (int y = 0; y < h; ++y) {
                      T* drow = dplane + size_t(y) * w;
                      const T* grow = gplane + size_t(2 * y + dy) * ow + dx;
                      for (int x = 0; x < w; ++x) drow[x] += kv * grow[2 * x];
                    }
                  }
              }
            }
        }
      });
    }
  }
  return out;
}

template <typename T>
Tensor<T> max_pool2d(Tape<T>* tape, const Tensor<T>& input) {
  check_4d(input, "max_pool2d input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    raise(ErrorCode::ShapeMismatch, "max_pool2d requires even spatial dims");
  const int oh = h / 2, ow = w / 2;

  Tensor<T> out = Tensor<T>::zeros({n, c, oh, ow});
  // argmax per output cell, as offset into the input plane
  auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());
  const T* iv = input.values().data();
  T* ov = out.values().data();
  int32_t* am = argmax->data();
  for (int i = 0; i < n * c; ++i) {
    const T* iplane = iv + size_t(i) * h * w;
    T* oplane = ov + size_t(i) * oh * ow;
    int32_t* aplane = am + size_t(i) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        // row-major scan of the window; strict > keeps the first of a tie
        int32_t best = (2 * y) * w + 2 * x;
        T bv = iplane[best];
        const int32_t cands[3] = {(2 * y) * w + 2 * x + 1, (2 * y + 1) * w + 2 * x,
                                  (2 * y + 1) * w + 2 * x + 1};
        for (int32_t idx : cands)
          if (iplane[idx] > bv) {
            bv = iplane[idx];
            best = idx;
          }
        oplane[size_t(y) * ow + x] = bv;
        aplane[size_t(y) * ow + x] = best;
      }
  }

  if (tape && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> in_h = input, out_h = out;
    tape->record([in_h, out_h, argmax, n, c, h, w]() mutable {
      const std::vector<T>& g = out_h.grad_view();
      if (g.empty()) return;
      const int oh = h / 2, ow = w / 2;
      std::vector<T>& din = in_h.grad();
      for (int i = 0; i < n * c; ++i) {
        const T* gplane = g.data() + size_t(i) * oh * ow;
        const int32_t* aplane = argmax->data() + size_t(i) * oh * ow;
        T* dplane = din.data() + size_t(i) * h * w;
        for (size_t j = 0; j < size_t(oh) * ow; ++j) dplane[aplane[j]] += gplane[j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& input) {
  Tensor<T> out = Tensor<T>::zeros(
      std::vector<int>(input.dims().begin(), input.dims().begin() + input.rank()));
  const std::vector<T>& iv = input.values();
  std::vector<T>& ov = out.values();
  for (size_t i = 0; i < iv.size(); ++i) ov[i] = iv[i] > T(0) ? iv[i] : T(0);

  if (tape && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> in_h = input, out_h = out;
    tape->record([in_h, out_h]() mutable {
      const std::vector<T>& g = out_h.grad_view();
      if (g.empty()) return;
      const std::vector<T>& iv = in_h.values();
      std::vector<T>& din = in_h.grad();
      for (size_t i = 0; i < iv.size(); ++i)
        if (iv[i] > T(0)) din[i] += g[i];  // subgradient at 0 is 0
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, BatchNormState<T>& state, bool training,
                       T eps, T momentum) {
  check_4d(input, "batch_norm2d input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    raise(ErrorCode::ShapeMismatch, "batch_norm2d gamma/beta must be [C]");
  if (static_cast<int>(state.running_mean.size()) != c)
    raise(ErrorCode::ShapeMismatch, "batch_norm2d state channel mismatch");

  const size_t plane = size_t(h) * w;
  const size_t m = size_t(n) * plane;  // elements per channel
  Tensor<T> out = Tensor<T>::zeros({n, c, h, w});

  auto mean = std::make_shared<std::vector<T>>(c);
  auto invstd = std::make_shared<std::vector<T>>(c);
  const T* iv = input.values().data();
  const T* gm = gamma.values().data();
  const T* bt = beta.values().data();
  T* ov = out.values().data();

  if (training) {
    for (int ic = 0; ic < c; ++ic) {
      T sum = 0, sumsq = 0;
      for (int in = 0; in < n; ++in) {
        const T* p = iv + (size_t(in) * c + ic) * plane;
        for (size_t j = 0; j < plane; ++j) {
          sum += p[j];
          sumsq += p[j] * p[j];
        }
      }
      const T mu = sum / T(m);
      T var = sumsq / T(m) - mu * mu;
      if (var < T(0)) var = T(0);
      (*mean)[ic] = mu;
      (*invstd)[ic] = T(1) / std::sqrt(var + eps);
      const T var_unbiased = m > 1 ? var * T(m) / T(m - 1) : var;
      state.running_mean[ic] = (T(1) - momentum) * state.running_mean[ic] + momentum * mu;
      state.running_var[ic] =
          (T(1) - momentum) * state.running_var[ic] + momentum * var_unbiased;
    }
  } else {
    for (int ic = 0; ic < c; ++ic) {
      (*mean)[ic] = state.running_mean[ic];
      (*invstd)[ic] = T(1) / std::sqrt(state.running_var[ic] + eps);
    }
  }

  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* p = iv + (size_t(in) * c + ic) * plane;
      T* q = ov + (size_t(in) * c + ic) * plane;
      const T mu = (*mean)[ic], is = (*invstd)[ic], gmc = gm[ic], btc = bt[ic];
      for (size_t j = 0; j < plane; ++j) q[j] = gmc * (p[j] - mu) * is + btc;
    }

  if (tape) {
    out.set_requires_grad(input.requires_grad() || gamma.requires_grad() ||
                          beta.requires_grad());
    if (out.requires_grad()) {
      Tensor<T> in_h = input, g_h = gamma, b_h = beta, out_h = out;
      tape->record([in_h, g_h, b_h, out_h, mean, invstd, training, n, c, plane,
                    m]() mutable {
        const std::vector<T>& g = out_h.grad_view();
        if (g.empty()) return;
        const T* iv = in_h.values().data();
        for (int ic = 0; ic < c; ++ic) {
          const T mu = (*mean)[ic], is = (*invstd)[ic];
          T s1 = 0, s2 = 0;  // sum(dy), sum(dy * xhat)
          for (int in = 0; in < n; ++in) {
            const T* gp = g.data() + (size_t(in) * c + ic) * plane;
            const T* p = iv + (size_t(in) * c + ic) * plane;
            for (size_t j = 0; j < plane; ++j) {
              s1 += gp[j];
              s2 += gp[j] * (p[j] - mu) * is;
            }
          }
          if (g_h.requires_grad()) g_h.grad()[ic] += s2;
          if (b_h.requires_grad()) b_h.grad()[ic] += s1;
          if (in_h.requires_grad()) {
            const T gmc = g_h.values()[ic];
            std::vector<T>& din = in_h.grad();
            if (training) {
              // full gradient through the batch statistics
              const T k1 = s1 / T(m), k2 = s2 / T(m);
              for (int in = 0; in < n; ++in) {
                const T* gp = g.data() + (size_t(in) * c + ic) * plane;
                const T* p = iv + (size_t(in) * c + ic) * plane;
                T* dp = din.data() + (size_t(in) * c + ic) * plane;
                for (size_t j = 0; j < plane; ++j) {
                  const T xhat = (p[j] - mu) * is;
                  dp[j] += gmc * is * (gp[j] - k1 - xhat * k2);
                }
              }
            } else {
              for (int in = 0; in < n; ++in) {
                const T* gp = g.data() + (size_t(in) * c + ic) * plane;
                T* dp = din.data() + (size_t(in) * c + ic) * plane;
                for (size_t j = 0; j < plane; ++j) dp[j] += gmc * is * gp[j];
              }
            }
          }
        }
      });
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_crop(Tape<T>* tape, const Tensor<T>& skip, const Tensor<T>& trunk) {
  check_4d(skip, "concat_crop skip");
  check_4d(trunk, "concat_crop trunk");
  const int n = skip.dim(0), cs = skip.dim(1), hs = skip.dim(2), ws = skip.dim(3);
  const int ct = trunk.dim(1), ht = trunk.dim(2), wt = trunk.dim(3);
  if (trunk.dim(0) != n) raise(ErrorCode::ShapeMismatch, "concat_crop batch mismatch");
  if (hs < ht || ws < wt)
    raise(ErrorCode::ShapeMismatch, "concat_crop skip smaller than trunk");
  if ((hs - ht) % 2 != 0 || (ws - wt) % 2 != 0)
    raise(ErrorCode::ShapeMismatch, "concat_crop size difference must be even");
  const int oy = (hs - ht) / 2, ox = (ws - wt) / 2;

  Tensor<T> out = Tensor<T>::zeros({n, cs + ct, ht, wt});
  const T* sv = skip.values().data();
  const T* tv = trunk.values().data();
  T* ov = out.values().data();
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < cs; ++ic) {
      const T* sp = sv + (size_t(in) * cs + ic) * hs * ws;
      T* op = ov + (size_t(in) * (cs + ct) + ic) * ht * wt;
      for (int y = 0; y < ht; ++y)
        std::copy(sp + size_t(y + oy) * ws + ox, sp + size_t(y + oy) * ws + ox + wt,
                  op + size_t(y) * wt);
    }
    for (int ic = 0; ic < ct; ++ic) {
      const T* tp = tv + (size_t(in) * ct + ic) * ht * wt;
      T* op = ov + (size_t(in) * (cs + ct) + cs + ic) * ht * wt;
      std::copy(tp, tp + size_t(ht) * wt, op);
    }
  }

  if (tape) {
    out.set_requires_grad(skip.requires_grad() || trunk.requires_grad());
    if (out.requires_grad()) {
      Tensor<T> s_h = skip, t_h = trunk, out_h = out;
      tape->record([s_h, t_h, out_h, n, cs, hs, ws, ct, ht, wt, oy, ox]() mutable {
        const std::vector<T>& g = out_h.grad_view();
        if (g.empty()) return;
        if (s_h.requires_grad()) {
          std::vector<T>& ds = s_h.grad();
          for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < cs; ++ic) {
              const T* gp = g.data() + (size_t(in) * (cs + ct) + ic) * ht * wt;
              T* dp = ds.data() + (size_t(in) * cs + ic) * hs * ws;
              for (int y = 0; y < ht; ++y)
                for (int x = 0; x < wt; ++x)
                  dp[size_t(y + oy) * ws + ox + x] += gp[size_t(y) * wt + x];
            }
        }
        if (t_h.requires_grad()) {
          std::vector<T>& dt = t_h.grad();
          for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < ct; ++ic) {
              const T* gp = g.data() + (size_t(in) * (cs + ct) + cs + ic) * ht * wt;
              T* dp = dt.data() + (size_t(in) * ct + ic) * ht * wt;
              for (size_t j = 0; j < size_t(ht) * wt; ++j) dp[j] += gp[j];
            }
        }
      });
    }
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                const std::vector<uint8_t>& target) {
  check_4d(logits, "softmax_cross_entropy logits");
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (c != 2) raise(ErrorCode::ShapeMismatch, "softmax_cross_entropy expects 2 classes");
  const size_t plane = size_t(h) * w;
  if (target.size() != size_t(n) * plane)
    raise(ErrorCode::ShapeMismatch, "softmax_cross_entropy target size mismatch");

  const T* lv = logits.values().data();
  // prob of class 1 per pixel, kept for the backward pass
  auto p1 = std::make_shared<std::vector<T>>(size_t(n) * plane);
  double total = 0;
  for (int in = 0; in < n; ++in) {
    const T* a = lv + (size_t(in) * 2 + 0) * plane;
    const T* b = lv + (size_t(in) * 2 + 1) * plane;
    T* pp = p1->data() + size_t(in) * plane;
    const uint8_t* tg = target.data() + size_t(in) * plane;
    for (size_t j = 0; j < plane; ++j) {
      const T mx = std::max(a[j], b[j]);
      const T ea = std::exp(a[j] - mx), eb = std::exp(b[j] - mx);
      const T z = ea + eb;
      pp[j] = eb / z;
      const T chosen = tg[j] ? b[j] : a[j];
      total += -(double(chosen - mx) - std::log(double(z)));
    }
  }
  const size_t m = size_t(n) * plane;
  Tensor<T> loss = Tensor<T>::scalar(T(total / double(m)));

  if (tape && logits.requires_grad()) {
    loss.set_requires_grad(true);
    Tensor<T> l_h = logits, loss_h = loss;
    tape->record([l_h, loss_h, p1, target, n, plane, m]() mutable {
      const std::vector<T>& g = loss_h.grad_view();
      if (g.empty()) return;
      const T scale = g[0] / T(m);
      std::vector<T>& dl = l_h.grad();
      for (int in = 0; in < n; ++in) {
        T* da = dl.data() + (size_t(in) * 2 + 0) * plane;
        T* db = dl.data() + (size_t(in) * 2 + 1) * plane;
        const T* pp = p1->data() + size_t(in) * plane;
        const uint8_t* tg = target.data() + size_t(in) * plane;
        for (size_t j = 0; j < plane; ++j) {
          const T q1 = pp[j], q0 = T(1) - q1;
          da[j] += scale * (q0 - (tg[j] ? T(0) : T(1)));
          db[j] += scale * (q1 - (tg[j] ? T(1) : T(0)));
        }
      }
    });
  }
  return loss;
}

template <typename T>
std::vector<T> softmax_prob1(const Tensor<T>& logits) {
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (logits.rank() != 4 || c != 2)
    raise(ErrorCode::ShapeMismatch, "softmax_prob1 expects N x 2 x H x W logits");
  const size_t plane = size_t(h) * w;
  std::vector<T> out(size_t(n) * plane);
  const T* lv = logits.values().data();
  for (int in = 0; in < n; ++in) {
    const T* a = lv + (size_t(in) * 2 + 0) * plane;
    const T* b = lv + (size_t(in) * 2 + 1) * plane;
    T* pp = out.data() + size_t(in) * plane;
    for (size_t j = 0; j < plane; ++j) {
      const T mx = std::max(a[j], b[j]);
      const T ea = std::exp(a[j] - mx), eb = std::exp(b[j] - mx);
      pp[j] = eb / (ea + eb);
    }
  }
  return out;
}

#define OCTASEG_INSTANTIATE(T)                                                        \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,         \
                               const Tensor<T>&);                                     \
  template Tensor<T> transposed_conv2d<T>(Tape<T>*, const Tensor<T>&,                \
                                          const Tensor<T>&);                         \
  template Tensor<T> max_pool2d<T>(Tape<T>*, const Tensor<T>&);                      \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                            \
  template Tensor<T> batch_norm2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,   \
                                     const Tensor<T>&, BatchNormState<T>&, bool, T,  \
                                     T);                                             \
  template Tensor<T> concat_crop<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> softmax_cross_entropy<T>(Tape<T>*, const Tensor<T>&,            \
                                              const std::vector<uint8_t>&);          \
  template std::vector<T> softmax_prob1<T>(const Tensor<T>&);

OCTASEG_INSTANTIATE(float)
OCTASEG_INSTANTIATE(double)

#undef OCTASEG_INSTANTIATE

}  // namespace octaseg
