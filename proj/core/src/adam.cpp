#include "secoco/adam.hpp"

#include <algorithm>
#include <cmath>

#include "secoco/common.hpp"

namespace secoco::numerics {

AdamState::AdamState(const ParameterSet& params, AdamConfig cfg) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params.vars()) {
    m.emplace_back(p->value.shape(), 0.0f);
    v.emplace_back(p->value.shape(), 0.0f);
  }
}

void adam_step(ParameterSet& params, AdamState& state, float lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("Adam state does not match the parameter set");
  }
  const AdamConfig& c = state.config;
  const float rate = lr > 0.0f ? lr : c.lr;
  ++state.step;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), state.step);
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), state.step);
  const float step_size = static_cast<float>(rate / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node& p = *params.vars()[i];
    Tensor& g = p.ensure_grad();
    if (!state.m[i].same_shape(p.value)) {
      throw ContractError("Adam moment shape mismatch for " + params.names()[i]);
    }
    float* w = p.value.data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    const float* gd = g.data();
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * gd[j];
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * gd[j] * gd[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + c.eps);
    }
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.vars()) {
    for (float g : p->ensure_grad().values()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / (norm + 1e-6));
    for (const auto& p : params.vars()) {
      for (float& g : p->grad.values()) g *= s;
    }
  }
  return norm;
}

float inverse_sqrt_lr(float peak_lr, std::int64_t step, std::int64_t warmup) {
  if (warmup < 1) throw ConfigError("warmup must be >= 1");
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(warmup);
  return static_cast<float>(peak_lr * std::min(s / w, std::sqrt(w / s)));
}

}  // namespace secoco::numerics
