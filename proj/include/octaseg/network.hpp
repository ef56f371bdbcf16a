#pragma once

#include <array>
#include <string>
#include <vector>

#include "octaseg/adam.hpp"
#include "octaseg/image.hpp"
#include "octaseg/rng.hpp"
#include "octaseg/tensor.hpp"

namespace octaseg {

enum class ArchKind { IMN, UNET, CNN7 };

const char* arch_kind_name(ArchKind kind);
ArchKind parse_arch_kind(const std::string& name);

struct ArchitectureConfig {
  ArchKind kind = ArchKind::IMN;
  int depth = 2;        // resampling stages; ignored by CNN7
  int width = 256;      // conv output channels
  int in_channels = 1;
  int num_classes = 2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  uint64_t seed = 0;
};

// Three fixed topologies over the same conv-BN-ReLU vocabulary:
//   IMN   per encoder stage [conv-BN-ReLU x2] then transposed-conv (x2
//         resolution), bottleneck blocks at 2^depth, per decoder stage
//         max-pool + skip concat + [conv-BN-ReLU x2], then a 3x3 class head.
//   UNET  the mirror image: pool on the way down, transposed-conv up.
//   CNN7  six conv-BN-ReLU at constant resolution plus the head.
// Skips connect the encoder block output at a given resolution (taken before
// the stage's resampling) to the decoder block at the same resolution.
template <typename T>
class Network {
 public:
  // indices into params / bn_states; -1 where a slot does not apply
  struct Unit {
    int w = -1, b = -1, gamma = -1, beta = -1, bn = -1;
  };
  struct Stage {
    Unit u1, u2;
    int resample = -1;  // transposed-conv weight, where the topology has one
  };

  ArchitectureConfig config;
  std::vector<Parameter<T>> params;
  std::vector<BatchNormState<T>> bn_states;
  std::vector<std::string> bn_names;

  std::vector<Stage> enc;
  Stage mid;
  std::vector<Stage> dec;  // dec[s] joins the skip from enc[s]
  std::vector<Unit> flat;  // CNN7 trunk
  Unit head;               // bare conv to num_classes, no BN/ReLU

  // trace, when given, collects the (H, W) of every intermediate activation
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& batch, bool training,
                    std::vector<std::array<int, 2>>* trace = nullptr);

  size_t param_scalar_count() const;

 private:
  Tensor<T> run_unit(Tape<T>* tape, const Tensor<T>& x, const Unit& u, bool training,
                     std::vector<std::array<int, 2>>* trace);
};

template <typename T>
Network<T> build_imn(const ArchitectureConfig& cfg);
template <typename T>
Network<T> build_unet(const ArchitectureConfig& cfg);
template <typename T>
Network<T> build_cnn7(const ArchitectureConfig& cfg);
template <typename T>
Network<T> build_network(const ArchitectureConfig& cfg);  // dispatch on cfg.kind

// One forward/backward/Adam update on a single crop; returns the pre-step
// loss. A non-finite loss aborts before touching the parameters.
template <typename T>
T train_step(Network<T>& net, const Tensor<T>& crop, const BinaryMask& target,
             const AdamConfig<T>& opt);

// Eval-mode forward + per-pixel argmax; ties go to background.
template <typename T>
BinaryMask predict_mask(Network<T>& net, const GrayImage& image);

template <typename T>
Tensor<T> image_to_tensor(const GrayImage& image);

// Checkpoints hold the config block, every parameter, its Adam state, and the
// BN running statistics, all as 32-bit little-endian records.
void save_checkpoint(const Network<float>& net, const std::string& path);
Network<float> load_checkpoint(const std::string& path,
                               const ArchitectureConfig* expected = nullptr);

}  // namespace octaseg
