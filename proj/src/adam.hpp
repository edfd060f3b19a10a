#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace curlcl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment accumulators are kept per parameter buffer, in the caller's buffer
// order. Buffers appended to the parameter list later (new mixture components)
// get zero accumulators through `append_zero_moments`.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  void append_zero_moments(const Matrix& like);
};

// Bias-corrected Adam update. A buffer whose gradient is identically zero is
// skipped entirely (parameters and accumulators untouched), so parameters not
// reached by the loss stay where they are. The step counter always advances.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state);

}  // namespace curlcl
