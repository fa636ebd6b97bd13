#pragma once

#include <span>
#include <vector>

#include "consor/autodiff.hpp"

namespace consor::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// One bias-corrected adaptive-moment update using each Parameter's grad.
/// Moments are created on the first call. Throws Error(ShapeMismatch).
void adam_step(std::span<Parameter* const> params, AdamState& state);

void zero_grads(std::span<Parameter* const> params);

}  // namespace consor::ad
