#include "octaseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace octaseg {

template <typename T>
Tensor<T> project_to_scalar(Tape<T>* tape, const Tensor<T>& t,
                            const std::vector<T>& r) {
  if (r.size() != t.numel())
    raise(ErrorCode::ShapeMismatch, "projection vector size mismatch");
  const std::vector<T>& v = t.values();
  T acc = 0;
  for (size_t i = 0; i < v.size(); ++i) acc += v[i] * r[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tape && t.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> t_h = t, out_h = out;
    tape->record([t_h, out_h, r]() mutable {
      const std::vector<T>& g = out_h.grad_view();
      if (g.empty()) return;
      std::vector<T>& dt = t_h.grad();
      for (size_t i = 0; i < r.size(); ++i) dt[i] += r[i] * g[0];
    });
  }
  return out;
}

template <typename T>
T gradient_check(std::vector<Tensor<T>>& leaves,
                 const std::function<Tensor<T>(Tape<T>*)>& build, T h) {
  for (Tensor<T>& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.clear_grad();
  }
  Tape<T> tape;
  Tensor<T> loss = build(&tape);
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(leaves.size());
  for (Tensor<T>& leaf : leaves) {
    analytic.push_back(leaf.has_grad() ? leaf.grad_view()
                                       : std::vector<T>(leaf.numel(), T(0)));
    leaf.clear_grad();
  }

  T max_err = 0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    std::vector<T>& v = leaves[li].values();
    for (size_t i = 0; i < v.size(); ++i) {
      const T saved = v[i];
      v[i] = saved + h;
      const T plus = build(nullptr).item();
      v[i] = saved - h;
      const T minus = build(nullptr).item();
      v[i] = saved;
      const T numeric = (plus - minus) / (T(2) * h);
      const T a = analytic[li][i];
      const T err = std::abs(a - numeric) /
                    std::max(T(1e-8), std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

template Tensor<double> project_to_scalar<double>(Tape<double>*, const Tensor<double>&,
                                                  const std::vector<double>&);
template Tensor<float> project_to_scalar<float>(Tape<float>*, const Tensor<float>&,
                                                const std::vector<float>&);
template double gradient_check<double>(
    std::vector<Tensor<double>>&, const std::function<Tensor<double>(Tape<double>*)>&,
    double);

}  // namespace octaseg
