#include "ssgan/optim.hpp"

#include <cmath>

#include "ssgan/error.hpp"

namespace ssgan {

void adam_update(Tensor& param, std::span<const float> grad, AdamState& state,
                 const AdamConfig& config) {
  const auto n = param.numel();
  if (grad.size() != n) {
    throw DimensionError("adam_update: gradient has " + std::to_string(grad.size()) +
                         " entries for a parameter of " + std::to_string(n));
  }
  if (state.t < 0) throw ContractError("adam_update: negative step counter");
  if (!all_finite(grad)) {
    throw NumericalError("adam_update: non-finite gradient for parameter " +
                         shape_string(param.shape()));
  }
  if (state.m.empty()) state.m.assign(n, 0.0f);
  if (state.v.empty()) state.v.assign(n, 0.0f);
  if (state.m.size() != n || state.v.size() != n) {
    throw DimensionError("adam_update: moment buffers do not match parameter");
  }

  state.t += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto p = param.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    const double m = b1 * state.m[i] + (1.0 - b1) * g;
    const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    p[i] -= static_cast<float>(config.lr * (m / c1) / (std::sqrt(v / c2) + config.eps));
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), states_(params_.size()), config_(config) {}

void Adam::step(float lr) {
  for (const auto& p : params_) {
    if (p.has_grad() && !all_finite(p.grad())) {
      throw NumericalError("Adam: non-finite gradient for parameter " +
                           shape_string(p.shape()));
    }
  }
  AdamConfig cfg = config_;
  cfg.lr = lr;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    adam_update(params_[i], params_[i].grad(), states_[i], cfg);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ssgan
