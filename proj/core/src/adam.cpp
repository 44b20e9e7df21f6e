#include "lowlight/adam.hpp"

#include <cmath>

#include "lowlight/error.hpp"

namespace lowlight::engine {

AdamState::AdamState(const std::vector<NamedTensor>& params, AdamConfig config)
    : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0f);
    v_.emplace_back(p.tensor.numel(), 0.0f);
  }
}

void adam_step(std::vector<NamedTensor>& params, AdamState& state) {
  if (params.size() != state.m_.size()) {
    throw ShapeError("adam_step: optimizer tracks " +
                     std::to_string(state.m_.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.tensor.numel() != state.m_[i].size()) {
      throw ShapeError("adam_step: moment buffer for '" + p.name +
                       "' does not match parameter shape " +
                       shape_string(p.tensor.shape()));
    }
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw Error(ErrorKind::kNumeric,
                    "adam_step: non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  state.step_ += 1;
  const auto& c = state.config_;
  const double t = static_cast<double>(state.step_);
  const float correction1 = static_cast<float>(1.0 - std::pow(double(c.beta1), t));
  const float correction2 = static_cast<float>(1.0 - std::pow(double(c.beta2), t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    auto value = tensor.mutable_data();
    auto grad = tensor.grad();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const float g = grad.empty() ? 0.0f : grad[j];
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g * g;
      const float m_hat = m[j] / correction1;
      const float v_hat = v[j] / correction2;
      value[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace lowlight::engine
