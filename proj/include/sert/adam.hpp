#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sert/tensor.hpp"

namespace sert {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers mirror the parameter list passed to adam_step, in order.
struct AdamState {
  std::uint64_t step = 0;
  AdamOptions options;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient
/// (a parameter without a gradient buffer is treated as having zero
/// gradient). Throws NumericError and leaves params/state untouched if any
/// gradient is non-finite.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace sert
