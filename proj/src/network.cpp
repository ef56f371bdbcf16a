#include "octaseg/network.hpp"

#include <cmath>

namespace octaseg {

const char* arch_kind_name(ArchKind kind) {
  switch (kind) {
    case ArchKind::IMN: return "imn";
    case ArchKind::UNET: return "unet";
    case ArchKind::CNN7: return "cnn7";
  }
  return "?";
}

ArchKind parse_arch_kind(const std::string& name) {
  if (name == "imn") return ArchKind::IMN;
  if (name == "unet") return ArchKind::UNET;
  if (name == "cnn7") return ArchKind::CNN7;
  raise(ErrorCode::ConfigInvalid, "unknown architecture: " + name +
                                      " (expected imn, unet or cnn7)");
}

namespace {

template <typename T>
struct Builder {
  Network<T>& net;
  Rng rng;

  int add_param(const std::string& name, std::vector<int> dims, double std_dev) {
    Tensor<T> t = Tensor<T>::zeros(std::move(dims));
    if (std_dev > 0)
      for (T& v : t.values()) v = T(std_dev * rng.next_normal());
    net.params.emplace_back(name, std::move(t));
    return static_cast<int>(net.params.size()) - 1;
  }

  int add_const_param(const std::string& name, int n, T fill) {
    Tensor<T> t = Tensor<T>::zeros({n});
    std::fill(t.values().begin(), t.values().end(), fill);
    net.params.emplace_back(name, std::move(t));
    return static_cast<int>(net.params.size()) - 1;
  }

  // conv-BN-ReLU unit: He-normal conv weight, zero bias, gamma 1, beta 0
  typename Network<T>::Unit add_unit(const std::string& prefix, int in_c, int out_c) {
    typename Network<T>::Unit u;
    u.w = add_param(prefix + ".weight", {out_c, in_c, 3, 3},
                    std::sqrt(2.0 / (in_c * 9.0)));
    u.b = add_const_param(prefix + ".bias", out_c, T(0));
    u.gamma = add_const_param(prefix + ".gamma", out_c, T(1));
    u.beta = add_const_param(prefix + ".beta", out_c, T(0));
    u.bn = static_cast<int>(net.bn_states.size());
    net.bn_states.emplace_back(out_c);
    net.bn_names.push_back(prefix + ".bn");
    return u;
  }

  int add_tconv(const std::string& name, int in_c, int out_c) {
    return add_param(name, {in_c, out_c, 2, 2}, std::sqrt(2.0 / (in_c * 4.0)));
  }

  typename Network<T>::Unit add_head(int in_c, int out_c) {
    typename Network<T>::Unit u;
    u.w = add_param("head.weight", {out_c, in_c, 3, 3}, std::sqrt(2.0 / (in_c * 9.0)));
    u.b = add_const_param("head.bias", out_c, T(0));
    return u;
  }
};

void validate(const ArchitectureConfig& cfg) {
  if (cfg.depth < 0) raise(ErrorCode::ConfigInvalid, "depth must be >= 0");
  if (cfg.width < 1) raise(ErrorCode::ConfigInvalid, "width must be >= 1");
  if (cfg.in_channels < 1) raise(ErrorCode::ConfigInvalid, "in_channels must be >= 1");
  if (cfg.num_classes != 2)
    raise(ErrorCode::ConfigInvalid, "num_classes must be 2");
}

}  // namespace

template <typename T>
Network<T> build_imn(const ArchitectureConfig& cfg) {
  validate(cfg);
  Network<T> net;
  net.config = cfg;
  Builder<T> b{net, Rng(cfg.seed)};
  const int w = cfg.width;
  for (int s = 0; s < cfg.depth; ++s) {
    typename Network<T>::Stage st;
    st.u1 = b.add_unit("enc" + std::to_string(s) + ".conv1",
                       s == 0 ? cfg.in_channels : w, w);
    st.u2 = b.add_unit("enc" + std::to_string(s) + ".conv2", w, w);
    st.resample = b.add_tconv("enc" + std::to_string(s) + ".up.weight", w, w);
    net.enc.push_back(st);
  }
  net.mid.u1 = b.add_unit("mid.conv1", cfg.depth == 0 ? cfg.in_channels : w, w);
  net.mid.u2 = b.add_unit("mid.conv2", w, w);
  net.dec.resize(cfg.depth);
  for (int s = cfg.depth - 1; s >= 0; --s) {
    typename Network<T>::Stage st;
    st.u1 = b.add_unit("dec" + std::to_string(s) + ".conv1", 2 * w, w);
    st.u2 = b.add_unit("dec" + std::to_string(s) + ".conv2", w, w);
    net.dec[s] = st;
  }
  net.head = b.add_head(w, cfg.num_classes);
  return net;
}

template <typename T>
Network<T> build_unet(const ArchitectureConfig& cfg) {
  validate(cfg);
  Network<T> net;
  net.config = cfg;
  Builder<T> b{net, Rng(cfg.seed)};
  const int w = cfg.width;
  for (int s = 0; s < cfg.depth; ++s) {
    typename Network<T>::Stage st;
    st.u1 = b.add_unit("enc" + std::to_string(s) + ".conv1",
                       s == 0 ? cfg.in_channels : w, w);
    st.u2 = b.add_unit("enc" + std::to_string(s) + ".conv2", w, w);
    net.enc.push_back(st);
  }
  net.mid.u1 = b.add_unit("mid.conv1", cfg.depth == 0 ? cfg.in_channels : w, w);
  net.mid.u2 = b.add_unit("mid.conv2", w, w);
  net.dec.resize(cfg.depth);
  for (int s = cfg.depth - 1; s >= 0; --s) {
    typename Network<T>::Stage st;
    st.resample = b.add_tconv("dec" + std::to_string(s) + ".up.weight", w, w);
    st.u1 = b.add_unit("dec" + std::to_string(s) + ".conv1", 2 * w, w);
    st.u2 = b.add_unit("dec" + std::to_string(s) + ".conv2", w, w);
    net.dec[s] = st;
  }
  net.head = b.add_head(w, cfg.num_classes);
  return net;
}

template <typename T>
Network<T> build_cnn7(const ArchitectureConfig& cfg) {
  validate(cfg);
  Network<T> net;
  net.config = cfg;
  Builder<T> b{net, Rng(cfg.seed)};
  const int w = cfg.width;
  for (int i = 1; i <= 6; ++i)
    net.flat.push_back(
        b.add_unit("conv" + std::to_string(i), i == 1 ? cfg.in_channels : w, w));
  net.head = b.add_head(w, cfg.num_classes);
  return net;
}

template <typename T>
Network<T> build_network(const ArchitectureConfig& cfg) {
  switch (cfg.kind) {
    case ArchKind::IMN: return build_imn<T>(cfg);
    case ArchKind::UNET: return build_unet<T>(cfg);
    case ArchKind::CNN7: return build_cnn7<T>(cfg);
  }
  raise(ErrorCode::ConfigInvalid, "bad architecture kind");
}

template <typename T>
Tensor<T> Network<T>::run_unit(Tape<T>* tape, const Tensor<T>& x, const Unit& u,
                               bool training, std::vector<std::array<int, 2>>* trace) {
  Tensor<T> y = conv2d(tape, x, params[u.w].value, params[u.b].value);
  y = batch_norm2d(tape, y, params[u.gamma].value, params[u.beta].value,
                   bn_states[u.bn], training, T(config.bn_eps), T(config.bn_momentum));
  y = relu(tape, y);
  if (trace) trace->push_back({y.dim(2), y.dim(3)});
  return y;
}

template <typename T>
Tensor<T> Network<T>::forward(Tape<T>* tape, const Tensor<T>& batch, bool training,
                              std::vector<std::array<int, 2>>* trace) {
  if (batch.rank() != 4 || batch.dim(1) != config.in_channels)
    raise(ErrorCode::ShapeMismatch, "forward expects N x in_channels x H x W");
  if (config.kind != ArchKind::CNN7) {
    const int div = 1 << config.depth;
    if (batch.dim(2) % div != 0 || batch.dim(3) % div != 0)
      raise(ErrorCode::ShapeMismatch,
            "input H and W must be divisible by 2^depth = " + std::to_string(div));
  }

  Tensor<T> x = batch;
  if (config.kind == ArchKind::CNN7) {
    for (const Unit& u : flat) x = run_unit(tape, x, u, training, trace);
  } else if (config.kind == ArchKind::IMN) {
    std::vector<Tensor<T>> skips;
    for (const Stage& st : enc) {
      x = run_unit(tape, x, st.u1, training, trace);
      x = run_unit(tape, x, st.u2, training, trace);
      skips.push_back(x);
      x = transposed_conv2d(tape, x, params[st.resample].value);
      if (trace) trace->push_back({x.dim(2), x.dim(3)});
    }
    x = run_unit(tape, x, mid.u1, training, trace);
    x = run_unit(tape, x, mid.u2, training, trace);
    for (int s = config.depth - 1; s >= 0; --s) {
      x = max_pool2d(tape, x);
      if (trace) trace->push_back({x.dim(2), x.dim(3)});
      x = concat_crop(tape, skips[s], x);
      x = run_unit(tape, x, dec[s].u1, training, trace);
      x = run_unit(tape, x, dec[s].u2, training, trace);
    }
  } else {  // UNET
    std::vector<Tensor<T>> skips;
    for (const Stage& st : enc) {
      x = run_unit(tape, x, st.u1, training, trace);
      x = run_unit(tape, x, st.u2, training, trace);
      skips.push_back(x);
      x = max_pool2d(tape, x);
      if (trace) trace->push_back({x.dim(2), x.dim(3)});
    }
    x = run_unit(tape, x, mid.u1, training, trace);
    x = run_unit(tape, x, mid.u2, training, trace);
    for (int s = config.depth - 1; s >= 0; --s) {
      x = transposed_conv2d(tape, x, params[dec[s].resample].value);
      if (trace) trace->push_back({x.dim(2), x.dim(3)});
      x = concat_crop(tape, skips[s], x);
      x = run_unit(tape, x, dec[s].u1, training, trace);
      x = run_unit(tape, x, dec[s].u2, training, trace);
    }
  }
  x = conv2d(tape, x, params[head.w].value, params[head.b].value);
  if (trace) trace->push_back({x.dim(2), x.dim(3)});
  return x;
}

template <typename T>
size_t Network<T>::param_scalar_count() const {
  size_t n = 0;
  for (const Parameter<T>& p : params) n += p.value.numel();
  return n;
}

template <typename T>
T train_step(Network<T>& net, const Tensor<T>& crop, const BinaryMask& target,
             const AdamConfig<T>& opt) {
  if (crop.rank() != 4 || crop.dim(0) != 1 || crop.dim(2) != target.height ||
      crop.dim(3) != target.width)
    raise(ErrorCode::ShapeMismatch, "train_step crop/target mismatch");
  Tape<T> tape;
  Tensor<T> logits = net.forward(&tape, crop, /*training=*/true);
  Tensor<T> loss = softmax_cross_entropy(&tape, logits, target.bits);
  const T loss_value = loss.item();
  if (!std::isfinite(double(loss_value)))
    raise(ErrorCode::NumericAbort, "non-finite training loss");
  tape.backward(loss);
  adam_step(net.params, opt);
  return loss_value;
}

template <typename T>
Tensor<T> image_to_tensor(const GrayImage& image) {
  Tensor<T> t = Tensor<T>::zeros({1, 1, image.height, image.width});
  std::vector<T>& v = t.values();
  for (size_t i = 0; i < image.values.size(); ++i) v[i] = T(image.values[i]);
  return t;
}

template <typename T>
BinaryMask predict_mask(Network<T>& net, const GrayImage& image) {
  Tensor<T> batch = image_to_tensor<T>(image);
  Tensor<T> logits = net.forward(nullptr, batch, /*training=*/false);
  const size_t plane = image.pixel_count();
  const T* l0 = logits.values().data();
  const T* l1 = l0 + plane;
  BinaryMask mask(image.height, image.width);
  for (size_t i = 0; i < plane; ++i) mask.bits[i] = l1[i] > l0[i] ? 1 : 0;
  return mask;
}

#define OCTASEG_INSTANTIATE(T)                                                      \
  template class Network<T>;                                                        \
  template Network<T> build_imn<T>(const ArchitectureConfig&);                      \
  template Network<T> build_unet<T>(const ArchitectureConfig&);                     \
  template Network<T> build_cnn7<T>(const ArchitectureConfig&);                     \
  template Network<T> build_network<T>(const ArchitectureConfig&);                  \
  template T train_step<T>(Network<T>&, const Tensor<T>&, const BinaryMask&,        \
                           const AdamConfig<T>&);                                   \
  template Tensor<T> image_to_tensor<T>(const GrayImage&);                          \
  template BinaryMask predict_mask<T>(Network<T>&, const GrayImage&);

OCTASEG_INSTANTIATE(float)
OCTASEG_INSTANTIATE(double)

#undef OCTASEG_INSTANTIATE

}  // namespace octaseg
