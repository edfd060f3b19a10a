#include "expansion.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "objective.hpp"

namespace curlcl {

void PoorSampleBuffer::clear() {
  samples.clear();
  elbos.clear();
}

Matrix PoorSampleBuffer::to_matrix() const {
  if (samples.empty()) return {};
  Matrix m(samples.size(), samples.front().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].begin(), samples[i].end(), m.row(i).begin());
  }
  return m;
}

PoorSampleBuffer make_buffer(const ExpansionConfig& config) {
  PoorSampleBuffer buffer;
  buffer.capacity = config.buffer_capacity;
  buffer.threshold = config.threshold;
  return buffer;
}

std::size_t screen_batch(const Matrix& x, std::span<const double> elbos,
                         PoorSampleBuffer& buffer) {
  if (elbos.size() != x.rows()) {
    throw Error(ErrorCode::shape, "screen_batch: " + std::to_string(elbos.size()) +
                                      " ELBO values for " + std::to_string(x.rows()) + " rows");
  }
  std::size_t stored = 0;
  for (std::size_t b = 0; b < x.rows() && !buffer.full(); ++b) {
    if (elbos[b] < buffer.threshold) {
      const auto row = x.row(b);
      buffer.samples.emplace_back(row.begin(), row.end());
      buffer.elbos.push_back(elbos[b]);
      ++stored;
    }
  }
  return stored;
}

bool should_expand(const PoorSampleBuffer& buffer, const ExpansionState& state,
                   const ModelParams& params) {
  return state.config.enabled && buffer.full() &&
         state.steps_since_last_expansion >= state.config.consolidation &&
         params.num_components() < params.capacity();
}

std::size_t select_parent(const Matrix& posterior) {
  if (posterior.rows() == 0) throw Error(ErrorCode::state, "select_parent: empty buffer");
  std::vector<double> mass(posterior.cols(), 0.0);
  for (std::size_t b = 0; b < posterior.rows(); ++b) {
    for (std::size_t k = 0; k < posterior.cols(); ++k) mass[k] += posterior(b, k);
  }
  return argmax(mass);
}

std::size_t select_parent(const PoorSampleBuffer& buffer, const ModelParams& params) {
  if (buffer.samples.empty()) throw Error(ErrorCode::state, "select_parent: empty buffer");
  const Matrix h = encode_shared(buffer.to_matrix(), params);
  return select_parent(infer_task_posterior(h, params));
}

double buffer_objective(const PoorSampleBuffer& buffer, const ModelParams& params,
                        std::size_t k, std::uint64_t noise_key) {
  const Matrix x = buffer.to_matrix();
  const std::vector<std::size_t> labels(x.rows(), k);
  ObjectiveRequest req;
  req.x = &x;
  req.labels = labels;
  req.noise_key = noise_key;
  return -evaluate_objective(req, params, nullptr).loss;
}

ExpansionEvent expand(ModelParams& params, AdamState& adam, PoorSampleBuffer& buffer,
                      ExpansionState& state, Rng& rng, std::uint64_t step) {
  if (buffer.samples.empty()) throw Error(ErrorCode::state, "expand: empty buffer");
  const std::size_t parent = select_parent(buffer, params);
  params.add_component_copy(parent);
  const std::size_t new_index = params.num_components() - 1;
  if (!adam.first_moment.empty()) {
    const auto buffers = params.buffers();
    for (std::size_t i = params.component_buffer_offset(new_index); i < buffers.size(); ++i) {
      adam.append_zero_moments(*buffers[i]);
    }
  }

  const std::size_t n = std::min(state.config.finetune_batch, buffer.size());
  const std::vector<std::size_t> labels(n, new_index);
  ModelParams grads;
  Matrix batch(n, params.input_dim());
  for (std::size_t it = 0; it < state.config.finetune_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = buffer.samples[rng.below(buffer.size())];
      std::copy(s.begin(), s.end(), batch.row(i).begin());
    }
    ObjectiveRequest req;
    req.x = &batch;
    req.labels = labels;
    req.noise_key = rng.next_u64();
    const BatchObjective obj = evaluate_objective(req, params, &grads);
    if (!std::isfinite(obj.loss)) {
      throw Error(ErrorCode::numeric, "expand: non-finite finetune loss at iteration " +
                                          std::to_string(it));
    }
    auto p = params.buffers();
    auto g = grads.buffers();
    const std::vector<const Matrix*> gc(g.begin(), g.end());
    adam_step(p, gc, adam);
  }

  buffer.clear();
  state.steps_since_last_expansion = 0;
  ExpansionEvent event{step, parent, params.num_components()};
  state.log.push_back(event);
  return event;
}

}  // namespace curlcl
