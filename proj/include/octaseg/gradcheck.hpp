#pragma once

#include <functional>
#include <vector>

#include "octaseg/tensor.hpp"

namespace octaseg {

// Reduces a tensor to a scalar by a fixed projection <t, r>, so any op can be
// gradient-checked through a scalar loss. Differentiable w.r.t. t.
template <typename T>
Tensor<T> project_to_scalar(Tape<T>* tape, const Tensor<T>& t, const std::vector<T>& r);

// Central-difference validation of the reverse pass.
//
// `build` must construct the computation from the current values of `leaves`
// and return a scalar loss; with a null tape it runs forward-only. Any state
// the computation mutates (batch-norm running stats) must be reset inside
// `build`, otherwise the numeric probes see a moving target.
//
// Returns max over all leaf elements of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// with numeric = (f(x+h) - f(x-h)) / 2h.
template <typename T>
T gradient_check(std::vector<Tensor<T>>& leaves,
                 const std::function<Tensor<T>(Tape<T>*)>& build, T h = T(1e-3));

}  // namespace octaseg
