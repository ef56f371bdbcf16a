#include "octaseg/adam.hpp"

#include <cmath>

namespace octaseg {

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const AdamConfig<T>& cfg) {
  for (Parameter<T>& p : params) {
    if (!p.value.has_grad())
      raise(ErrorCode::MissingGradient, "no gradient for parameter " + p.name);
    p.step_count += 1;
    const T bc1 = T(1) - std::pow(cfg.beta1, T(p.step_count));
    const T bc2 = T(1) - std::pow(cfg.beta2, T(p.step_count));
    const std::vector<T>& g = p.value.grad_view();
    std::vector<T>& w = p.value.values();
    for (size_t i = 0; i < w.size(); ++i) {
      p.adam_m[i] = cfg.beta1 * p.adam_m[i] + (T(1) - cfg.beta1) * g[i];
      p.adam_v[i] = cfg.beta2 * p.adam_v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
      const T mhat = p.adam_m[i] / bc1;
      const T vhat = p.adam_v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p.value.clear_grad();
  }
}

template void adam_step<float>(std::vector<Parameter<float>>&, const AdamConfig<float>&);
template void adam_step<double>(std::vector<Parameter<double>>&,
                                const AdamConfig<double>&);

}  // namespace octaseg
