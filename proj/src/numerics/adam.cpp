#include "p2lhap/adam.hpp"

#include <cmath>

namespace p2lhap {

AdamState AdamState::for_params(std::span<const Tensor> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Tensor& p : params) {
    s.first_moment.emplace_back(p.shape());
    s.second_moment.emplace_back(p.shape());
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " + std::to_string(state.first_moment.size()) +
                         " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string label = i < names.size() ? names[i] : "#" + std::to_string(i);
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape()) {
      throw DimensionError("adam_step: parameter " + label + " has shape " + shape_string(params[i]->shape()) +
                           " but gradient " + shape_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) throw NumericalError("adam_step: non-finite gradient for parameter " + label);
  }

  state.step += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const float b1 = static_cast<float>(c.beta1);
  const float b2 = static_cast<float>(c.beta2);
  const float correction1 = static_cast<float>(1.0 - std::pow(c.beta1, t));
  const float correction2 = static_cast<float>(1.0 - std::pow(c.beta2, t));
  const float lr = static_cast<float>(c.lr);
  const float eps = static_cast<float>(c.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i]->raw();
    const float* g = grads[i].raw();
    float* m = state.first_moment[i].raw();
    float* v = state.second_moment[i].raw();
    for (std::size_t j = 0, n = grads[i].size(); j < n; ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / correction1;
      const float v_hat = v[j] / correction2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace p2lhap
