#include "model.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace curlcl {

namespace {

void glorot_uniform(Matrix& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
}

DenseLayer make_layer(std::size_t in, std::size_t out, Rng* rng) {
  DenseLayer layer{Matrix(in, out), Matrix(1, out)};
  if (rng != nullptr) glorot_uniform(layer.weight, in, out, *rng);
  return layer;
}

ComponentParams make_component(const Architecture& arch, Rng* rng) {
  const std::size_t h = arch.shared_dim();
  const std::size_t nz = arch.latent_dim;
  ComponentParams c{Matrix(1, h), Matrix(1, 1), Matrix(h, 2 * nz),
                    Matrix(1, 2 * nz), Matrix(1, nz), Matrix(1, nz)};
  if (rng != nullptr) {
    // The task row is one output row of an H → K_max linear layer, the prior
    // mean is one row of a one-hot (K_max → n_z) linear layer.
    glorot_uniform(c.task_weight, h, arch.k_max, *rng);
    glorot_uniform(c.head_weight, h, 2 * nz, *rng);
    glorot_uniform(c.prior_mean, arch.k_max, nz, *rng);
  }
  return c;
}

Matrix dense_forward(const Matrix& x, const DenseLayer& layer) {
  Matrix out(x.rows(), layer.weight.cols());
  gemm(x, false, layer.weight, false, out);
  add_row_bias(out, layer.bias);
  return out;
}

void require_component(std::size_t k, const ModelParams& params) {
  if (k >= params.num_components()) {
    throw Error(ErrorCode::index, "component " + std::to_string(k) + " out of range (K=" +
                                      std::to_string(params.num_components()) + ")");
  }
}

}  // namespace

void Architecture::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::config, msg); };
  if (input_dim == 0) fail("architecture: input_dim must be positive");
  if (latent_dim == 0) fail("architecture: latent_dim must be positive");
  if (k_init == 0) fail("architecture: k_init must be at least 1");
  if (k_max < k_init) fail("architecture: k_max must be >= k_init");
  for (std::size_t s : encoder) {
    if (s == 0) fail("architecture: encoder layer sizes must be positive");
  }
  for (std::size_t s : decoder) {
    if (s == 0) fail("architecture: decoder layer sizes must be positive");
  }
}

ModelParams ModelParams::initialize(const Architecture& arch, Rng& rng) {
  arch.validate();
  ModelParams p;
  p.architecture = arch;
  std::size_t in = arch.input_dim;
  for (std::size_t out : arch.encoder) {
    p.encoder.push_back(make_layer(in, out, &rng));
    in = out;
  }
  in = arch.latent_dim;
  for (std::size_t out : arch.decoder) {
    p.decoder.push_back(make_layer(in, out, &rng));
    in = out;
  }
  p.decoder.push_back(make_layer(in, arch.input_dim, &rng));
  for (std::size_t k = 0; k < arch.k_init; ++k) p.components.push_back(make_component(arch, &rng));
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& like) {
  ModelParams p = like;
  for (Matrix* b : p.buffers()) b->fill(0.0);
  return p;
}

std::vector<Matrix*> ModelParams::buffers() {
  std::vector<Matrix*> out;
  out.reserve(shared_buffer_count() + components.size() * ComponentParams::kBufferCount);
  for (auto& l : encoder) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : decoder) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& c : components) {
    out.insert(out.end(), {&c.task_weight, &c.task_bias, &c.head_weight, &c.head_bias,
                           &c.prior_mean, &c.prior_rho});
  }
  return out;
}

std::vector<const Matrix*> ModelParams::buffers() const {
  auto mutable_view = const_cast<ModelParams*>(this)->buffers();
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> ModelParams::buffer_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    names.push_back("encoder." + std::to_string(i) + ".weight");
    names.push_back("encoder." + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    names.push_back("decoder." + std::to_string(i) + ".weight");
    names.push_back("decoder." + std::to_string(i) + ".bias");
  }
  for (std::size_t k = 0; k < components.size(); ++k) {
    const std::string prefix = "component." + std::to_string(k) + ".";
    for (const char* n :
         {"task_weight", "task_bias", "head_weight", "head_bias", "prior_mean", "prior_rho"}) {
      names.push_back(prefix + n);
    }
  }
  return names;
}

void ModelParams::add_component_copy(std::size_t parent) {
  require_component(parent, *this);
  if (components.size() >= architecture.k_max) {
    throw Error(ErrorCode::capacity, "cannot add component: K already at K_max=" +
                                         std::to_string(architecture.k_max));
  }
  ComponentParams copy = components[parent];
  components.push_back(std::move(copy));
}

void ModelParams::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::state, msg); };
  if (components.empty()) fail("model has no components");
  if (components.size() > architecture.k_max) fail("model exceeds K_max");
  if (encoder.size() != architecture.encoder.size()) fail("encoder depth mismatch");
  if (decoder.size() != architecture.decoder.size() + 1) fail("decoder depth mismatch");
  const std::size_t h = architecture.shared_dim();
  const std::size_t nz = architecture.latent_dim;
  for (const auto& c : components) {
    if (c.task_weight.cols() != h || c.head_weight.rows() != h ||
        c.head_weight.cols() != 2 * nz || c.prior_mean.size() != nz ||
        c.prior_rho.size() != nz) {
      fail("component buffer shapes do not match the architecture");
    }
  }
}

Matrix encode_shared(const Matrix& x, const ModelParams& params) {
  if (x.cols() != params.input_dim()) {
    throw Error(ErrorCode::shape, "encode_shared: input has " + std::to_string(x.cols()) +
                                      " columns, encoder expects " +
                                      std::to_string(params.input_dim()));
  }
  Matrix h = x;
  for (const auto& layer : params.encoder) {
    h = dense_forward(h, layer);
    relu_inplace(h);
  }
  return h;
}

Matrix task_logits(const Matrix& h, const ModelParams& params) {
  const std::size_t k = params.num_components();
  if (k == 0) throw Error(ErrorCode::state, "task_logits: model has no components");
  if (h.cols() != params.architecture.shared_dim()) {
    throw Error(ErrorCode::shape, "task_logits: representation width mismatch");
  }
  Matrix weights(k, h.cols());
  for (std::size_t j = 0; j < k; ++j) {
    const auto& row = params.components[j].task_weight.values();
    std::copy(row.begin(), row.end(), weights.row(j).begin());
  }
  Matrix logits(h.rows(), k);
  gemm(h, false, weights, true, logits);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    for (std::size_t j = 0; j < k; ++j) logits(r, j) += params.components[j].task_bias(0, 0);
  }
  return logits;
}

Matrix infer_task_posterior(const Matrix& h, const ModelParams& params) {
  return softmax_rows(task_logits(h, params));
}

LatentPosterior component_posterior_params(const Matrix& h, std::size_t k,
                                           const ModelParams& params) {
  require_component(k, params);
  const auto& c = params.components[k];
  const std::size_t nz = params.latent_dim();
  Matrix out(h.rows(), 2 * nz);
  gemm(h, false, c.head_weight, false, out);
  add_row_bias(out, c.head_bias);
  LatentPosterior post{Matrix(h.rows(), nz), Matrix(h.rows(), nz)};
  for (std::size_t r = 0; r < h.rows(); ++r) {
    for (std::size_t d = 0; d < nz; ++d) {
      post.mean(r, d) = out(r, d);
      post.stddev(r, d) = softplus(out(r, nz + d)) + kVarianceFloor;
    }
  }
  return post;
}

LatentPosterior prior_params(std::size_t k, const ModelParams& params) {
  require_component(k, params);
  const auto& c = params.components[k];
  const std::size_t nz = params.latent_dim();
  LatentPosterior prior{c.prior_mean, Matrix(1, nz)};
  for (std::size_t d = 0; d < nz; ++d) {
    prior.stddev(0, d) = softplus(c.prior_rho(0, d)) + kVarianceFloor;
  }
  return prior;
}

Matrix reparameterize(const Matrix& mean, const Matrix& stddev, Rng& rng) {
  if (!mean.same_shape(stddev)) {
    throw Error(ErrorCode::shape, "reparameterize: mean " + mean.shape_string() +
                                      " vs stddev " + stddev.shape_string());
  }
  for (double s : stddev.values()) {
    if (!(s > 0.0)) throw Error(ErrorCode::numeric, "reparameterize: non-positive stddev");
  }
  Matrix z(mean.rows(), mean.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z.data()[i] = mean.data()[i] + stddev.data()[i] * rng.normal();
  }
  return z;
}

Matrix decode(const Matrix& z, const ModelParams& params) {
  if (z.cols() != params.latent_dim()) {
    throw Error(ErrorCode::shape, "decode: latent has " + std::to_string(z.cols()) +
                                      " columns, expected " +
                                      std::to_string(params.latent_dim()));
  }
  Matrix a = z;
  for (std::size_t i = 0; i < params.decoder.size(); ++i) {
    a = dense_forward(a, params.decoder[i]);
    if (i + 1 < params.decoder.size()) relu_inplace(a);
  }
  for (double& v : a.values()) v = std::clamp(sigmoid(v), kProbClamp, 1.0 - kProbClamp);
  return a;
}

double bernoulli_log_likelihood(std::span<const double> x, std::span<const double> p) {
  if (x.size() != p.size()) {
    throw Error(ErrorCode::shape, "bernoulli_log_likelihood: size mismatch");
  }
  double total = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double pd = std::clamp(p[d], kProbClamp, 1.0 - kProbClamp);
    total += x[d] * std::log(pd) + (1.0 - x[d]) * std::log(1.0 - pd);
  }
  return total;
}

double gaussian_kl(std::span<const double> q_mean, std::span<const double> q_std,
                   std::span<const double> p_mean, std::span<const double> p_std) {
  const std::size_t n = q_mean.size();
  if (q_std.size() != n || p_mean.size() != n || p_std.size() != n) {
    throw Error(ErrorCode::shape, "gaussian_kl: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    if (!(q_std[d] > 0.0) || !(p_std[d] > 0.0)) {
      throw Error(ErrorCode::numeric, "gaussian_kl: non-positive stddev");
    }
    const double diff = q_mean[d] - p_mean[d];
    kl += std::log(p_std[d] / q_std[d]) +
          (q_std[d] * q_std[d] + diff * diff) / (2.0 * p_std[d] * p_std[d]) - 0.5;
  }
  return kl;
}

double categorical_kl(std::span<const double> q) {
  const double k = static_cast<double>(q.size());
  double kl = 0.0;
  for (double qk : q) {
    if (qk > 0.0) kl += qk * std::log(qk * k);
  }
  return kl;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::argument, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

GeneratedBatch generate(const ModelParams& params, std::span<const double> prior_weights,
                        std::size_t n, Rng& rng) {
  const std::size_t k = params.num_components();
  if (prior_weights.size() != k) {
    throw Error(ErrorCode::argument, "generate: prior has " +
                                         std::to_string(prior_weights.size()) +
                                         " weights for K=" + std::to_string(k));
  }
  double total = 0.0;
  for (double w : prior_weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::argument, "generate: negative prior weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::argument, "generate: prior weights sum to " + std::to_string(total));
  }

  const std::size_t nz = params.latent_dim();
  std::vector<LatentPosterior> priors;
  priors.reserve(k);
  for (std::size_t j = 0; j < k; ++j) priors.push_back(prior_params(j, params));

  GeneratedBatch batch;
  batch.labels.resize(n);
  Matrix z(n, nz);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t y = k - 1;
    for (std::size_t j = 0; j < k; ++j) {
      cumulative += prior_weights[j];
      if (u < cumulative) {
        y = j;
        break;
      }
    }
    // Guard against rounding pushing u past the final cumulative sum onto a
    // zero-weight tail component.
    while (prior_weights[y] == 0.0 && y > 0) --y;
    batch.labels[i] = y;
    for (std::size_t d = 0; d < nz; ++d) {
      z(i, d) = priors[y].mean(0, d) + priors[y].stddev(0, d) * rng.normal();
    }
  }
  batch.x = decode(z, params);
  return batch;
}

}  // namespace curlcl
