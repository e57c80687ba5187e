#include <cmath>

#include "chartab/engine.hpp"
#include "chartab/error.hpp"

namespace chartab::engine {

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double squared = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) squared += g * g;
  }
  const double norm = std::sqrt(squared);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (p.grad().empty()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

AdamState adam_init(std::span<const Tensor> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, state has " +
                     std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() != state.first_moment[i].size()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " changed shape to " +
                       params[i].shape().str());
    }
  }
  const auto& cfg = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace chartab::engine
