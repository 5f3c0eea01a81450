#ifndef SECOCO_ADAM_HPP_
#define SECOCO_ADAM_HPP_

#include <cstdint>
#include <vector>

#include "secoco/autodiff.hpp"

namespace secoco::numerics {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float eps = 1e-8f;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments

  AdamState() = default;
  AdamState(const ParameterSet& params, AdamConfig config);
};

// Bias-corrected Adam update from the accumulated gradients. lr overrides
// config.lr when positive (schedules pass the current rate here).
void adam_step(ParameterSet& params, AdamState& state, float lr = -1.0f);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping. max_norm <= 0 only measures.
double clip_grad_norm(ParameterSet& params, double max_norm);

// Inverse square root decay after linear warmup, peaking at peak_lr.
float inverse_sqrt_lr(float peak_lr, std::int64_t step, std::int64_t warmup);

}  // namespace secoco::numerics

#endif  // SECOCO_ADAM_HPP_
