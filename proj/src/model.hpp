#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace curlcl {

// Added after every softplus that produces a standard deviation.
inline constexpr double kVarianceFloor = 1e-6;
// Bernoulli means are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-6;

struct Architecture {
  std::size_t input_dim = 784;
  std::vector<std::size_t> encoder{1200, 600, 300, 150};
  std::vector<std::size_t> decoder{500, 500};
  std::size_t latent_dim = 32;
  std::size_t k_init = 1;
  std::size_t k_max = 25;

  std::size_t shared_dim() const { return encoder.empty() ? input_dim : encoder.back(); }
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct DenseLayer {
  Matrix weight;  // in × out
  Matrix bias;    // 1 × out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Everything owned by one mixture component k: its task-inference logit row,
// its posterior head, and its row of the prior table.
struct ComponentParams {
  Matrix task_weight;  // 1 × H
  Matrix task_bias;    // 1 × 1
  Matrix head_weight;  // H × 2·n_z, first half mean, second half pre-softplus std
  Matrix head_bias;    // 1 × 2·n_z
  Matrix prior_mean;   // 1 × n_z
  Matrix prior_rho;    // 1 × n_z, σ = softplus(ρ) + floor

  static constexpr std::size_t kBufferCount = 6;
  friend bool operator==(const ComponentParams&, const ComponentParams&) = default;
};

// All learnable weights. Buffer order (used by Adam, checkpoints and
// gradient checks): encoder layers (weight, bias), decoder layers
// (weight, bias), then each active component in index order. New components
// therefore always append buffers at the end.
struct ModelParams {
  Architecture architecture;
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  std::vector<ComponentParams> components;

  // Glorot-uniform weights, zero biases, zero prior ρ rows.
  static ModelParams initialize(const Architecture& arch, Rng& rng);
  // Same shapes as `like`, all zeros (used for gradients).
  static ModelParams zeros_like(const ModelParams& like);

  std::size_t num_components() const { return components.size(); }
  std::size_t capacity() const { return architecture.k_max; }
  std::size_t latent_dim() const { return architecture.latent_dim; }
  std::size_t input_dim() const { return architecture.input_dim; }

  std::vector<Matrix*> buffers();
  std::vector<const Matrix*> buffers() const;
  std::vector<std::string> buffer_names() const;
  std::size_t shared_buffer_count() const { return 2 * (encoder.size() + decoder.size()); }
  std::size_t component_buffer_offset(std::size_t k) const {
    return shared_buffer_count() + k * ComponentParams::kBufferCount;
  }

  // Appends a bit-exact copy of component `parent`. Capacity error at K_max.
  void add_component_copy(std::size_t parent);
  // Shape and count checks; state error on violation.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct LatentPosterior {
  Matrix mean;    // N × n_z
  Matrix stddev;  // N × n_z, ≥ floor
};

// Shared representation h for a batch (B × D → B × H). ReLU after every layer.
Matrix encode_shared(const Matrix& x, const ModelParams& params);
// Logits over the K active components (B × K).
Matrix task_logits(const Matrix& h, const ModelParams& params);
// q(y|x) as B × K probabilities.
Matrix infer_task_posterior(const Matrix& h, const ModelParams& params);
LatentPosterior component_posterior_params(const Matrix& h, std::size_t k,
                                           const ModelParams& params);
// Prior (μ_z(k), σ_z(k)) as 1 × n_z rows.
LatentPosterior prior_params(std::size_t k, const ModelParams& params);

// z = μ + σ ⊙ ε with ε drawn row-major from rng.
Matrix reparameterize(const Matrix& mean, const Matrix& stddev, Rng& rng);

// Bernoulli means (N × D), clamped to [kProbClamp, 1 - kProbClamp].
Matrix decode(const Matrix& z, const ModelParams& params);

double bernoulli_log_likelihood(std::span<const double> x, std::span<const double> p);
double gaussian_kl(std::span<const double> q_mean, std::span<const double> q_std,
                   std::span<const double> p_mean, std::span<const double> p_std);
// KL(q || uniform over q.size()), with 0·ln 0 = 0.
double categorical_kl(std::span<const double> q);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

struct GeneratedBatch {
  Matrix x;                         // n × D soft samples (decoder means)
  std::vector<std::size_t> labels;  // component drawn for each row
};

// y ~ Cat(π), z ~ p(z|y), x = decoder mean. π must be a normalized
// probability vector over the model's K components.
GeneratedBatch generate(const ModelParams& params, std::span<const double> prior_weights,
                        std::size_t n, Rng& rng);

}  // namespace curlcl
