#pragma once

#include <string>
#include <vector>

#include "octaseg/tensor.hpp"

namespace octaseg {

// A named trainable tensor plus its Adam first/second-moment state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> adam_m;
  std::vector<T> adam_v;
  int64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        adam_m(value.numel(), T(0)),
        adam_v(value.numel(), T(0)) {
    value.set_requires_grad(true);
  }
};

template <typename T>
struct AdamConfig {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// One bias-corrected Adam update per parameter. Every parameter must carry a
// populated gradient; gradients are cleared afterwards.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const AdamConfig<T>& cfg);

}  // namespace octaseg
