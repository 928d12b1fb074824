#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sagda/autodiff.hpp"

namespace sagda {

/// Adam moment estimates for an ordered parameter list. The state binds to
/// the parameter shapes on the first step; later steps must pass the same
/// parameters in the same order.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One bias-corrected Adam update from the current gradients. Gradients are
// left untouched; the caller zeroes them.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

}  // namespace sagda
