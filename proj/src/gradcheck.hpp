#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace curlcl {

struct GradcheckOptions {
  std::size_t configurations = 100;
  std::uint64_t seed = 1;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t input_dim = 6;
  std::size_t latent_dim = 2;
  std::size_t components = 3;
  std::size_t batch = 2;
  // Test hook: when non-empty, the analytic gradient of every buffer whose
  // name ends with this suffix is perturbed before comparison.
  std::string corrupt_buffer;
};

struct BufferCheck {
  std::string loss;  // "marginal" or "supervised" (component-constrained)
  std::string buffer;
  double max_relative_error = 0.0;
};

struct GradcheckReport {
  std::vector<BufferCheck> buffers;  // worst case per (loss, buffer name)
  double max_error_marginal = 0.0;
  double max_error_supervised = 0.0;
  std::string worst_buffer;
  bool passed = false;
};

// Compares manual backprop against central differences on randomized tiny
// networks, for both loss paths. Relative error uses max(1, |g|) as the
// denominator.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace curlcl
