#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "octaseg/error.hpp"

namespace octaseg {

// Reverse-mode differentiable tensors, rank <= 4, NCHW layout for 4-D.
//
// A Tensor is a cheap handle onto shared storage; gradients accumulate into
// the storage, so every handle to the same node sees them. Primitives take a
// Tape*; passing nullptr runs forward-only (inference). With a tape, each
// primitive records a closure that scatters the output gradient back to its
// inputs. Tape::backward walks the records once, in reverse execution order,
// which is a topological order by construction.

template <typename T>
struct TensorNode {
  std::array<int, 4> dims{1, 1, 1, 1};
  int rank = 0;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;

  size_t numel() const { return values.size(); }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode<T>>()) {}

  static Tensor zeros(std::vector<int> dims) {
    Tensor t;
    t.node_->rank = static_cast<int>(dims.size());
    if (t.node_->rank > 4) raise(ErrorCode::ShapeMismatch, "rank > 4");
    size_t n = 1;
    for (int i = 0; i < t.node_->rank; ++i) {
      if (dims[i] <= 0) raise(ErrorCode::ShapeMismatch, "non-positive dimension");
      t.node_->dims[i] = dims[i];
      n *= static_cast<size_t>(dims[i]);
    }
    t.node_->values.assign(n, T(0));
    return t;
  }

  static Tensor from_values(std::vector<int> dims, std::vector<T> values) {
    Tensor t = zeros(std::move(dims));
    if (values.size() != t.numel())
      raise(ErrorCode::ShapeMismatch, "value count does not match dims");
    t.node_->values = std::move(values);
    return t;
  }

  static Tensor scalar(T v) { return from_values({1}, {v}); }

  int rank() const { return node_->rank; }
  int dim(int i) const { return node_->dims[i]; }
  const std::array<int, 4>& dims() const { return node_->dims; }
  size_t numel() const { return node_->numel(); }

  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  T item() const { return node_->values.at(0); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<T>& grad() { return node_->ensure_grad(); }
  const std::vector<T>& grad_view() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  // Deep copy: fresh storage, no shared state with the source.
  Tensor clone() const {
    Tensor t;
    *t.node_ = *node_;
    return t;
  }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  size_t size() const { return steps_.size(); }

  // Seeds d(loss)/d(loss)=1 and replays the recorded steps newest-first.
  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1)
      raise(ErrorCode::ShapeMismatch, "backward requires a scalar loss");
    loss.grad()[0] = T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
  }

 private:
  std::vector<std::function<void()>> steps_;
};

// Per-channel running statistics for batch norm, updated in train mode.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// --- primitives -----------------------------------------------------------
// All convolutions use the cross-correlation convention (no kernel flip).

// 3x3, zero padding 1, output H x W equals input H x W.
// input NCHW, weight [outC][inC][3][3], bias [outC].
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias);

// 2x2 kernel, stride 2, output is exactly 2H x 2W. weight [inC][outC][2][2],
// no bias term.
template <typename T>
Tensor<T> transposed_conv2d(Tape<T>* tape, const Tensor<T>& input,
                            const Tensor<T>& weight);

// 2x2 window, stride 2; requires even H and W. Gradient goes to the argmax,
// ties to the first element in row-major window order.
template <typename T>
Tensor<T> max_pool2d(Tape<T>* tape, const Tensor<T>& input);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& input);

// Train mode normalizes by batch statistics over N*H*W per channel and
// updates the running stats by EMA (unbiased variance in the update,
// biased in the normalization). Eval mode normalizes by the running stats.
template <typename T>
Tensor<T> batch_norm2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, BatchNormState<T>& state, bool training,
                       T eps = T(1e-5), T momentum = T(0.1));

// Center-crops skip to trunk's spatial size (equal-size inputs degenerate to
// a plain concat) and concatenates on the channel axis.
template <typename T>
Tensor<T> concat_crop(Tape<T>* tape, const Tensor<T>& skip, const Tensor<T>& trunk);

// Per-pixel softmax over the 2-class axis, mean negative log-likelihood of
// the target class over all pixels in the batch. target holds N*H*W entries
// of 0/1.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                const std::vector<uint8_t>& target);

// Forward-only class-1 probability map (N x H x W) from 2-class logits.
template <typename T>
std::vector<T> softmax_prob1(const Tensor<T>& logits);

}  // namespace octaseg
