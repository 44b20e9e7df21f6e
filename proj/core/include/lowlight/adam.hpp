#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowlight/tensor.hpp"

namespace lowlight::engine {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamConfig {
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

class AdamState {
 public:
  AdamState(const std::vector<NamedTensor>& params, AdamConfig config);

  std::uint64_t step() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(float lr) noexcept { config_.learning_rate = lr; }

  const std::vector<float>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<float>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  friend void adam_step(std::vector<NamedTensor>& params, AdamState& state);

  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// Bias-corrected Adam update using each parameter's accumulated gradient.
// A parameter without a gradient is treated as having a zero gradient. Any
// non-finite gradient aborts the whole update before anything is modified
// and the error names the parameter.
void adam_step(std::vector<NamedTensor>& params, AdamState& state);

}  // namespace lowlight::engine
