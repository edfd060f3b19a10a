#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adam.hpp"
#include "model.hpp"

namespace curlcl {

struct ExpansionConfig {
  bool enabled = true;
  double threshold = -200.0;         // c_new, nats
  std::size_t buffer_capacity = 100;  // N_new
  std::size_t consolidation = 100;
  std::size_t finetune_iters = 100;
  std::size_t finetune_batch = 64;
};

// D_new: raw inputs whose ELBO fell below the threshold.
struct PoorSampleBuffer {
  std::size_t capacity = 100;
  double threshold = -200.0;
  std::vector<std::vector<double>> samples;
  std::vector<double> elbos;

  std::size_t size() const { return samples.size(); }
  bool full() const { return samples.size() >= capacity; }
  void clear();
  // size() × dim, one stored sample per row.
  Matrix to_matrix() const;
};

struct ExpansionEvent {
  std::uint64_t step = 0;
  std::size_t parent = 0;
  std::size_t new_k = 0;  // component count after the expansion

  friend bool operator==(const ExpansionEvent&, const ExpansionEvent&) = default;
};

struct ExpansionState {
  ExpansionConfig config;
  std::size_t steps_since_last_expansion = 0;
  std::vector<ExpansionEvent> log;
};

PoorSampleBuffer make_buffer(const ExpansionConfig& config);

// Appends every row whose ELBO is below the threshold until the buffer is
// full. Returns the number of rows stored.
std::size_t screen_batch(const Matrix& x, std::span<const double> elbos, PoorSampleBuffer& buffer);

bool should_expand(const PoorSampleBuffer& buffer, const ExpansionState& state,
                   const ModelParams& params);

// argmax_k Σ_rows posterior(row, k), lowest index on ties.
std::size_t select_parent(const Matrix& posterior);
// Same, computing q(y|x) over the buffer contents. State error when empty.
std::size_t select_parent(const PoorSampleBuffer& buffer, const ModelParams& params);

// Copies the parent into a new component (zero Adam moments for its buffers),
// finetunes with the component-constrained loss on minibatches drawn with
// replacement from the buffer, clears the buffer and resets the
// consolidation counter. Capacity error at K_max.
ExpansionEvent expand(ModelParams& params, AdamState& adam, PoorSampleBuffer& buffer,
                      ExpansionState& state, Rng& rng, std::uint64_t step);

// Mean component-constrained bound of the buffer samples under component k,
// with noise drawn from `noise_key`.
double buffer_objective(const PoorSampleBuffer& buffer, const ModelParams& params,
                        std::size_t k, std::uint64_t noise_key);

}  // namespace curlcl
