#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan {

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam step on `param`. A non-finite gradient throws
// NumericalError before anything is modified.
void adam_update(Tensor& param, std::span<const float> grad, AdamState& state,
                 const AdamConfig& config);

// Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // Applies one update with the given learning rate to every parameter
  // holding a gradient. All gradients are checked before any is applied.
  void step(float lr);
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<AdamState>& states() const { return states_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamConfig config_;
};

}  // namespace ssgan
