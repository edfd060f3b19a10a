#include "objective.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace curlcl {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ArrayMap = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstArrayMap =
    Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ArrayMap arr(Matrix& m) {
  return ArrayMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
ConstArrayMap arr(const Matrix& m) {
  return ConstArrayMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                       static_cast<Eigen::Index>(m.cols()));
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = src.row(rows[i]);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

// Forward trace of an MLP; `pre[i]` is layer i's affine output and `act[i]`
// its input (act[0] is the network input).
struct MlpTrace {
  std::vector<Matrix> act;
  std::vector<Matrix> pre;
};

MlpTrace mlp_forward(const Matrix& input, const std::vector<DenseLayer>& layers,
                     bool relu_last) {
  MlpTrace t;
  t.act.reserve(layers.size() + 1);
  t.pre.reserve(layers.size());
  t.act.push_back(input);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Matrix pre(t.act.back().rows(), layers[i].weight.cols());
    gemm(t.act.back(), false, layers[i].weight, false, pre);
    add_row_bias(pre, layers[i].bias);
    const bool relu = relu_last || i + 1 < layers.size();
    t.pre.push_back(std::move(pre));
    if (relu || i + 1 < layers.size()) {
      Matrix a = t.pre.back();
      if (relu) relu_inplace(a);
      t.act.push_back(std::move(a));
    }
  }
  return t;
}

// Backpropagates d(loss)/d(pre of last layer) through the stack; writes weight
// and bias gradients and returns d(loss)/d(input).
Matrix mlp_backward(const MlpTrace& t, const std::vector<DenseLayer>& layers,
                    std::vector<DenseLayer>& grads, Matrix d_pre, bool need_input_grad) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    gemm(t.act[i], true, d_pre, false, grads[i].weight, 1.0);
    accumulate_column_sums(d_pre, grads[i].bias);
    if (i == 0 && !need_input_grad) return {};
    Matrix d_act(d_pre.rows(), layers[i].weight.rows());
    gemm(d_pre, false, layers[i].weight, true, d_act);
    if (i == 0) return d_act;
    relu_backward_inplace(d_act, t.pre[i - 1]);
    d_pre = std::move(d_act);
  }
  return {};
}

void check_request(const ObjectiveRequest& req, const ModelParams& params) {
  if (req.x == nullptr) throw Error(ErrorCode::argument, "objective: no input batch");
  const Matrix& x = *req.x;
  if (x.rows() == 0) throw Error(ErrorCode::argument, "objective: empty batch");
  if (x.cols() != params.input_dim()) {
    throw Error(ErrorCode::shape, "objective: input has " + std::to_string(x.cols()) +
                                      " columns, model expects " +
                                      std::to_string(params.input_dim()));
  }
  if (params.num_components() == 0) throw Error(ErrorCode::state, "objective: K = 0");
  if (!req.labels.empty()) {
    if (req.labels.size() != x.rows()) {
      throw Error(ErrorCode::shape, "objective: label count does not match batch");
    }
    for (std::size_t y : req.labels) {
      if (y >= params.num_components()) {
        throw Error(ErrorCode::index, "objective: label " + std::to_string(y) +
                                          " out of range for K=" +
                                          std::to_string(params.num_components()));
      }
    }
  }
  if (!req.noise_ids.empty() && req.noise_ids.size() != x.rows()) {
    throw Error(ErrorCode::shape, "objective: noise id count does not match batch");
  }
}

}  // namespace

void reparameterization_noise(std::uint64_t key, std::uint64_t sample_id,
                              std::uint64_t component, std::span<double> out) {
  Rng rng(mix_seed(mix_seed(key, sample_id), component));
  for (double& e : out) e = rng.normal();
}

BatchObjective evaluate_objective(const ObjectiveRequest& req, const ModelParams& params,
                                  ModelParams* grads) {
  check_request(req, params);
  const Matrix& x = *req.x;
  const std::size_t batch = x.rows();
  const std::size_t dim = x.cols();
  const std::size_t k_active = params.num_components();
  const std::size_t nz = params.latent_dim();
  const bool supervised = !req.labels.empty();
  const double log_k = std::log(static_cast<double>(k_active));

  // Shared encoder and task posterior.
  const MlpTrace enc = mlp_forward(x, params.encoder, true);
  const Matrix& h = enc.act.back();
  const Matrix logits = task_logits(h, params);
  Matrix log_q(batch, k_active);
  Matrix q(batch, k_active);
  for (std::size_t b = 0; b < batch; ++b) {
    const double lse = log_sum_exp(logits.row(b));
    for (std::size_t k = 0; k < k_active; ++k) {
      log_q(b, k) = logits(b, k) - lse;
      q(b, k) = std::exp(log_q(b, k));
    }
  }

  // (sample, component) pairs grouped by component.
  std::vector<std::vector<std::size_t>> members(k_active);
  for (std::size_t b = 0; b < batch; ++b) {
    if (supervised) {
      members[req.labels[b]].push_back(b);
    } else {
      for (std::size_t k = 0; k < k_active; ++k) members[k].push_back(b);
    }
  }
  std::vector<std::size_t> offset(k_active + 1, 0);
  for (std::size_t k = 0; k < k_active; ++k) offset[k + 1] = offset[k] + members[k].size();
  const std::size_t pairs = offset[k_active];
  std::vector<std::size_t> pair_sample(pairs);
  std::vector<std::size_t> pair_component(pairs);
  for (std::size_t k = 0; k < k_active; ++k) {
    for (std::size_t i = 0; i < members[k].size(); ++i) {
      pair_sample[offset[k] + i] = members[k][i];
      pair_component[offset[k] + i] = k;
    }
  }

  // Posterior heads, reparameterized samples, and Gaussian KLs per pair.
  Matrix mean(pairs, nz), pre_std(pairs, nz), stddev(pairs, nz), eps(pairs, nz), z(pairs, nz);
  std::vector<Matrix> head_inputs(k_active);
  std::vector<LatentPosterior> priors;
  priors.reserve(k_active);
  std::vector<double> kl(pairs, 0.0);
  for (std::size_t k = 0; k < k_active; ++k) {
    priors.push_back(prior_params(k, params));
    if (members[k].empty()) continue;
    const bool all_rows = members[k].size() == batch && !supervised;
    head_inputs[k] = all_rows ? h : gather_rows(h, members[k]);
    const auto& comp = params.components[k];
    Matrix out(members[k].size(), 2 * nz);
    gemm(head_inputs[k], false, comp.head_weight, false, out);
    add_row_bias(out, comp.head_bias);
    for (std::size_t i = 0; i < members[k].size(); ++i) {
      const std::size_t r = offset[k] + i;
      const std::size_t b = members[k][i];
      const std::uint64_t id = req.noise_ids.empty() ? b : req.noise_ids[b];
      reparameterization_noise(req.noise_key, id, k, eps.row(r));
      double kl_r = 0.0;
      for (std::size_t d = 0; d < nz; ++d) {
        const double mu = out(i, d);
        const double pre = out(i, nz + d);
        const double sd = softplus(pre) + kVarianceFloor;
        mean(r, d) = mu;
        pre_std(r, d) = pre;
        stddev(r, d) = sd;
        z(r, d) = mu + sd * eps(r, d);
        const double p_mu = priors[k].mean(0, d);
        const double p_sd = priors[k].stddev(0, d);
        const double diff = mu - p_mu;
        kl_r += std::log(p_sd / sd) + (sd * sd + diff * diff) / (2.0 * p_sd * p_sd) - 0.5;
      }
      kl[r] = kl_r;
    }
  }

  // Decode every pair in one pass. Clamping p to [ε, 1−ε] is applied as
  // clamping the output logit to [−L, L] with L = logit(1−ε).
  const MlpTrace dec = mlp_forward(z, params.decoder, false);
  const Matrix& out_logits = dec.pre.back();
  const Matrix gathered = supervised ? gather_rows(x, pair_sample) : Matrix();
  const double logit_limit = std::log((1.0 - kProbClamp) / kProbClamp);
  Matrix prob(pairs, dim);
  Eigen::VectorXd recon_vec(static_cast<Eigen::Index>(pairs));
  for (std::size_t k = 0; k < k_active; ++k) {
    const auto rows = static_cast<Eigen::Index>(members[k].size());
    if (rows == 0) continue;
    const auto first = static_cast<Eigen::Index>(offset[k]);
    const auto a =
        arr(out_logits).middleRows(first, rows).cwiseMax(-logit_limit).cwiseMin(logit_limit).eval();
    const auto t = supervised ? arr(gathered).middleRows(first, rows) : arr(x).topRows(rows);
    const auto e = (-a).exp().eval();
    arr(prob).middleRows(first, rows) = 1.0 / (1.0 + e);
    // log(1 − p) = −a − log(1 + e^{−a}), so
    // x·log p + (1 − x)·log(1 − p) = (x − 1)·a − log(1 + e^{−a}).
    recon_vec.segment(first, rows) = ((t - 1.0) * a - (1.0 + e).log()).rowwise().sum().matrix();
  }

  BatchObjective result;
  result.posterior = q;
  result.per_sample.assign(batch, 0.0);
  Matrix recon(batch, k_active), gauss_kl(batch, k_active);
  for (std::size_t r = 0; r < pairs; ++r) {
    recon(pair_sample[r], pair_component[r]) = recon_vec[static_cast<Eigen::Index>(r)];
    gauss_kl(pair_sample[r], pair_component[r]) = kl[r];
  }
  std::vector<double> cat_kl(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < k_active; ++k) cat_kl[b] += q(b, k) * (log_q(b, k) + log_k);
    cat_kl[b] = std::max(cat_kl[b], 0.0);
    result.mean_cat_kl += cat_kl[b] / static_cast<double>(batch);
    if (supervised) {
      const std::size_t y = req.labels[b];
      result.per_sample[b] = recon(b, y) - gauss_kl(b, y) + log_q(b, y);
    } else {
      double total = -cat_kl[b];
      for (std::size_t k = 0; k < k_active; ++k) total += q(b, k) * (recon(b, k) - gauss_kl(b, k));
      result.per_sample[b] = total;
    }
  }
  if (!supervised) result.elbo_total = result.per_sample;
  double sum = 0.0;
  for (double v : result.per_sample) sum += v;
  result.loss = -sum / static_cast<double>(batch);
  if (!std::isfinite(result.loss)) {
    throw Error(ErrorCode::numeric, "objective: non-finite loss");
  }
  result.recon = std::move(recon);
  result.gauss_kl = std::move(gauss_kl);

  if (grads == nullptr) return result;

  // Reverse pass for loss = −(1/B) Σ_b L_b.
  *grads = ModelParams::zeros_like(params);
  const double scale = 1.0 / static_cast<double>(batch);
  std::vector<double> pair_weight(pairs);
  for (std::size_t r = 0; r < pairs; ++r) {
    pair_weight[r] = supervised ? scale : scale * q(pair_sample[r], pair_component[r]);
  }

  // Decoder: d loss / d output logit = −w·(x − p) where the clamp is inactive.
  Matrix d_out(pairs, dim);
  for (std::size_t r = 0; r < pairs; ++r) {
    const std::size_t target_row = supervised ? r : pair_sample[r];
    const double* t = supervised ? gathered.row(target_row).data() : x.row(target_row).data();
    const double* p = prob.row(r).data();
    const double* a = out_logits.row(r).data();
    double* d = d_out.row(r).data();
    const double w = pair_weight[r];
    for (std::size_t j = 0; j < dim; ++j) {
      d[j] = std::abs(a[j]) < logit_limit ? w * (p[j] - t[j]) : 0.0;
    }
  }
  const Matrix d_z = mlp_backward(dec, params.decoder, grads->decoder, std::move(d_out), true);

  // Latent heads and prior rows.
  Matrix d_h(batch, h.cols());
  for (std::size_t k = 0; k < k_active; ++k) {
    if (members[k].empty()) continue;
    auto& g = grads->components[k];
    const auto& rho = params.components[k].prior_rho;
    Matrix d_head(members[k].size(), 2 * nz);
    std::vector<double> d_prior_sd(nz, 0.0);
    for (std::size_t i = 0; i < members[k].size(); ++i) {
      const std::size_t r = offset[k] + i;
      const double w = pair_weight[r];
      for (std::size_t d = 0; d < nz; ++d) {
        const double sd = stddev(r, d);
        const double p_mu = priors[k].mean(0, d);
        const double p_sd = priors[k].stddev(0, d);
        const double p_var = p_sd * p_sd;
        const double diff = mean(r, d) - p_mu;
        const double d_mu = d_z(r, d) + w * diff / p_var;
        const double d_sd = d_z(r, d) * eps(r, d) + w * (-1.0 / sd + sd / p_var);
        d_head(i, d) = d_mu;
        d_head(i, nz + d) = d_sd * sigmoid(pre_std(r, d));
        g.prior_mean(0, d) -= w * diff / p_var;
        d_prior_sd[d] += w * (1.0 / p_sd - (sd * sd + diff * diff) / (p_var * p_sd));
      }
    }
    for (std::size_t d = 0; d < nz; ++d) g.prior_rho(0, d) = d_prior_sd[d] * sigmoid(rho(0, d));
    gemm(head_inputs[k], true, d_head, false, g.head_weight);
    accumulate_column_sums(d_head, g.head_bias);
    Matrix d_rows(members[k].size(), h.cols());
    gemm(d_head, false, params.components[k].head_weight, true, d_rows);
    for (std::size_t i = 0; i < members[k].size(); ++i) {
      auto dst = d_h.row(members[k][i]);
      const auto src = d_rows.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }

  // Task-inference head.
  Matrix d_logits(batch, k_active);
  for (std::size_t b = 0; b < batch; ++b) {
    if (supervised) {
      const std::size_t y = req.labels[b];
      for (std::size_t k = 0; k < k_active; ++k) {
        d_logits(b, k) = -scale * ((k == y ? 1.0 : 0.0) - q(b, k));
      }
    } else {
      // ∂L/∂q_k = recon_k − kl_k − ln(q_k·K) − 1; the constant cancels in
      // the softmax Jacobian.
      double weighted = 0.0;
      std::vector<double> d_q(k_active);
      for (std::size_t k = 0; k < k_active; ++k) {
        d_q[k] = -scale * (result.recon(b, k) - result.gauss_kl(b, k) - log_q(b, k) - log_k);
        weighted += q(b, k) * d_q[k];
      }
      for (std::size_t k = 0; k < k_active; ++k) d_logits(b, k) = q(b, k) * (d_q[k] - weighted);
    }
  }
  for (std::size_t k = 0; k < k_active; ++k) {
    auto& g = grads->components[k];
    const auto& w = params.components[k].task_weight;
    for (std::size_t b = 0; b < batch; ++b) {
      const double dl = d_logits(b, k);
      if (dl == 0.0) continue;
      g.task_bias(0, 0) += dl;
      const auto hb = h.row(b);
      auto gw = g.task_weight.row(0);
      auto dh = d_h.row(b);
      const auto wr = w.row(0);
      for (std::size_t c = 0; c < hb.size(); ++c) {
        gw[c] += dl * hb[c];
        dh[c] += dl * wr[c];
      }
    }
  }

  // Shared encoder.
  if (!params.encoder.empty()) {
    relu_backward_inplace(d_h, enc.pre.back());
    mlp_backward(enc, params.encoder, grads->encoder, std::move(d_h), false);
  }
  return result;
}

ElboBreakdown elbo(std::span<const double> x, const ModelParams& params, Rng& rng) {
  const Matrix batch = Matrix::row_vector(x);
  ObjectiveRequest req;
  req.x = &batch;
  req.noise_key = rng.next_u64();
  const BatchObjective obj = evaluate_objective(req, params, nullptr);
  ElboBreakdown out;
  const auto q = obj.posterior.row(0);
  out.task_posterior.assign(q.begin(), q.end());
  const auto r = obj.recon.row(0);
  out.recon_per_component.assign(r.begin(), r.end());
  const auto kl = obj.gauss_kl.row(0);
  out.gauss_kl_per_component.assign(kl.begin(), kl.end());
  out.cat_kl = categorical_kl(out.task_posterior);
  out.total = obj.per_sample[0];
  return out;
}

double supervised_elbo(std::span<const double> x, std::size_t y_obs, const ModelParams& params,
                       Rng& rng) {
  const Matrix batch = Matrix::row_vector(x);
  const std::size_t labels[1] = {y_obs};
  ObjectiveRequest req;
  req.x = &batch;
  req.labels = labels;
  req.noise_key = rng.next_u64();
  return evaluate_objective(req, params, nullptr).per_sample[0];
}

BatchObjective forward(const Matrix& x, std::span<const std::size_t> labels,
                       const ModelParams& params, Rng& rng) {
  ObjectiveRequest req;
  req.x = &x;
  req.labels = labels;
  req.noise_key = rng.next_u64();
  return evaluate_objective(req, params, nullptr);
}

BatchObjective backward(const Matrix& x, std::span<const std::size_t> labels,
                        const ModelParams& params, Rng& rng, ModelParams& grads) {
  ObjectiveRequest req;
  req.x = &x;
  req.labels = labels;
  req.noise_key = rng.next_u64();
  return evaluate_objective(req, params, &grads);
}

}  // namespace curlcl
