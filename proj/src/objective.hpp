#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "model.hpp"

namespace curlcl {

// Per-datum decomposition of the marginalized bound:
//   total = Σ_k q_k · (recon_k − gauss_kl_k) − cat_kl
struct ElboBreakdown {
  std::vector<double> task_posterior;
  std::vector<double> recon_per_component;
  std::vector<double> gauss_kl_per_component;
  double cat_kl = 0.0;
  double total = 0.0;
};

// Reparameterization noise ε for (sample id, component) under a pass key.
// Every objective evaluation draws one key from its Rng and derives all ε from
// it, so a forward pass and its gradient see the same noise, and the noise of
// component k does not depend on which other components are evaluated.
void reparameterization_noise(std::uint64_t key, std::uint64_t sample_id,
                              std::uint64_t component, std::span<double> out);

ElboBreakdown elbo(std::span<const double> x, const ModelParams& params, Rng& rng);

// log p(x|z̃^(y)) − KL[q(z|x,y) ‖ p(z|y)] + ln q(y|x)
double supervised_elbo(std::span<const double> x, std::size_t y_obs, const ModelParams& params,
                       Rng& rng);

struct BatchObjective {
  double loss = 0.0;                // −mean over the batch
  std::vector<double> per_sample;   // bound value per datum (marginal or component-constrained)
  std::vector<double> elbo_total;   // marginalized bound per datum (unsupervised only)
  Matrix posterior;                 // B × K task posterior
  Matrix recon;                     // B × K log p(x|z̃^(k)); 0 where not evaluated
  Matrix gauss_kl;                  // B × K component KLs; 0 where not evaluated
  double mean_cat_kl = 0.0;
};

struct ObjectiveRequest {
  const Matrix* x = nullptr;
  // Empty: marginalized bound. Otherwise one component label per row and the
  // component-constrained bound is used.
  std::span<const std::size_t> labels;
  // Optional per-row noise ids (defaults to the row index).
  std::span<const std::uint64_t> noise_ids;
  std::uint64_t noise_key = 0;
};

// Evaluates the batch objective; when `grads` is non-null it is overwritten
// with ∂loss/∂θ for every buffer (same layout as params).
BatchObjective evaluate_objective(const ObjectiveRequest& request, const ModelParams& params,
                                  ModelParams* grads);

// Convenience wrappers drawing the noise key from rng.
BatchObjective forward(const Matrix& x, std::span<const std::size_t> labels,
                       const ModelParams& params, Rng& rng);
BatchObjective backward(const Matrix& x, std::span<const std::size_t> labels,
                        const ModelParams& params, Rng& rng, ModelParams& grads);

}  // namespace curlcl
