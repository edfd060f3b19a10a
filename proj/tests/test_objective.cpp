#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "adam.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "objective.hpp"

using namespace curlcl;

namespace {

Architecture arch(std::size_t k, std::size_t d = 6, std::size_t nz = 2) {
  Architecture a;
  a.input_dim = d;
  a.encoder = {5, 4};
  a.decoder = {4};
  a.latent_dim = nz;
  a.k_init = k;
  a.k_max = k + 2;
  return a;
}

// Perturbs every buffer so biases and prior rows are not at their init values.
ModelParams randomized(const Architecture& a, Rng& rng) {
  ModelParams p = ModelParams::initialize(a, rng);
  for (Matrix* b : p.buffers()) {
    for (double& v : b->values()) v += 0.3 * rng.normal();
  }
  return p;
}

std::vector<double> random_x(Rng& rng, std::size_t d) {
  std::vector<double> x(d);
  for (double& v : x) v = rng.uniform();
  return x;
}

std::vector<double> dense(const std::vector<double>& in, const DenseLayer& l, bool relu) {
  std::vector<double> out(l.weight.cols());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = l.bias(0, j);
    for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * l.weight(i, j);
    out[j] = relu ? std::max(s, 0.0) : s;
  }
  return out;
}

// Plain single-component VAE bound, coded directly from the layer weights.
double plain_vae_elbo(const std::vector<double>& x, const ModelParams& p, std::uint64_t key) {
  std::vector<double> h = x;
  for (const auto& l : p.encoder) h = dense(h, l, true);
  const auto& c = p.components[0];
  const std::size_t nz = p.latent_dim();
  std::vector<double> mu(nz), sd(nz), eps(nz), z(nz);
  for (std::size_t d = 0; d < nz; ++d) {
    double m = c.head_bias(0, d), s = c.head_bias(0, nz + d);
    for (std::size_t i = 0; i < h.size(); ++i) {
      m += h[i] * c.head_weight(i, d);
      s += h[i] * c.head_weight(i, nz + d);
    }
    mu[d] = m;
    sd[d] = std::log1p(std::exp(s)) + kVarianceFloor;
  }
  reparameterization_noise(key, 0, 0, eps);
  for (std::size_t d = 0; d < nz; ++d) z[d] = mu[d] + sd[d] * eps[d];
  std::vector<double> a = z;
  for (std::size_t i = 0; i < p.decoder.size(); ++i) a = dense(a, p.decoder[i], i + 1 < p.decoder.size());
  double recon = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double prob = std::clamp(1.0 / (1.0 + std::exp(-a[j])), kProbClamp, 1.0 - kProbClamp);
    recon += x[j] * std::log(prob) + (1.0 - x[j]) * std::log(1.0 - prob);
  }
  double kl = 0.0;
  for (std::size_t d = 0; d < nz; ++d) {
    const double pm = c.prior_mean(0, d);
    const double ps = std::log1p(std::exp(c.prior_rho(0, d))) + kVarianceFloor;
    kl += std::log(ps / sd[d]) + (sd[d] * sd[d] + (mu[d] - pm) * (mu[d] - pm)) / (2 * ps * ps) - 0.5;
  }
  return recon - kl;
}

double max_abs_diff(const ModelParams& a, const ModelParams& b, std::size_t skip_from,
                    std::size_t skip_to) {
  const auto ba = a.buffers();
  const auto bb = b.buffers();
  double worst = 0.0;
  for (std::size_t i = 0; i < ba.size(); ++i) {
    if (i >= skip_from && i < skip_to) continue;
    for (std::size_t j = 0; j < ba[i]->size(); ++j) {
      worst = std::max(worst, std::abs(ba[i]->data()[j] - bb[i]->data()[j]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("K=1 bound equals an independent plain VAE") {
  Rng rng(21);
  const ModelParams p = randomized(arch(1), rng);
  for (int t = 0; t < 1000; ++t) {
    const auto x = random_x(rng, 6);
    const std::uint64_t seed = rng.next_u64();
    Rng r(seed);
    const ElboBreakdown e = elbo(x, p, r);
    CHECK(e.cat_kl == 0.0);
    CHECK(std::abs(e.total - plain_vae_elbo(x, p, Rng(seed).next_u64())) < 1e-10);
    Rng r2(seed);
    CHECK(std::abs(supervised_elbo(x, 0, p, r2) - e.total) < 1e-12);
  }
}

TEST_CASE("breakdown recomposes and divergences are non-negative") {
  Rng rng(22);
  const ModelParams p = randomized(arch(4, 10, 3), rng);
  for (int t = 0; t < 10000; ++t) {
    const auto x = random_x(rng, 10);
    const ElboBreakdown e = elbo(x, p, rng);
    double total = -e.cat_kl;
    for (std::size_t k = 0; k < 4; ++k) {
      total += e.task_posterior[k] * (e.recon_per_component[k] - e.gauss_kl_per_component[k]);
      CHECK(e.gauss_kl_per_component[k] >= 0.0);
    }
    CHECK(e.cat_kl >= 0.0);
    CHECK(std::abs(total - e.total) < 1e-9);
  }
}

TEST_CASE("equal task logits give zero categorical term") {
  Rng rng(23);
  ModelParams p = randomized(arch(3), rng);
  for (auto& c : p.components) {
    c.task_weight.fill(0.0);
    c.task_bias.fill(0.7);
  }
  const auto e = elbo(random_x(rng, 6), p, rng);
  CHECK(e.cat_kl == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("supervised bound with a one-hot posterior") {
  Rng rng(24);
  ModelParams p = randomized(arch(3), rng);
  for (auto& c : p.components) c.task_weight.fill(0.0);
  p.components[2].task_bias(0, 0) = 60.0;
  const auto x = random_x(rng, 6);
  Rng a(5), b(5);
  const double sup = supervised_elbo(x, 2, p, a);
  const double marg = elbo(x, p, b).total;
  CHECK(std::abs(sup - (marg + std::log(3.0))) < 1e-6);
  CHECK_THROWS_AS(supervised_elbo(x, 3, p, a), Error);
}

TEST_CASE("a supervised gradient step raises q(y_obs|x)") {
  auto step = [](ModelParams& p, const ModelParams& g, std::size_t first_buffer) {
    auto pb = p.buffers();
    const auto gb = g.buffers();
    for (std::size_t i = first_buffer; i < pb.size(); ++i) {
      for (std::size_t j = 0; j < pb[i]->size(); ++j) pb[i]->data()[j] -= 1e-3 * gb[i]->data()[j];
    }
  };
  const std::size_t y[1] = {1};
  {
    Rng rng(25);
    ModelParams p = ModelParams::initialize(arch(3), rng);
    const Matrix x = Matrix::row_vector(random_x(rng, 6));
    const double before = infer_task_posterior(encode_shared(x, p), p)(0, 1);
    ModelParams g = ModelParams::zeros_like(p);
    backward(x, y, p, rng, g);
    step(p, g, 0);
    CHECK(infer_task_posterior(encode_shared(x, p), p)(0, 1) > before);
  }
  // With the shared encoder held fixed only the log q(y|x) term moves the
  // task logits, so the step is an ascent step on q(y_obs|x).
  Rng rng(26);
  for (int t = 0; t < 50; ++t) {
    ModelParams p = randomized(arch(3), rng);
    const Matrix x = Matrix::row_vector(random_x(rng, 6));
    const double before = infer_task_posterior(encode_shared(x, p), p)(0, 1);
    ModelParams g = ModelParams::zeros_like(p);
    backward(x, y, p, rng, g);
    step(p, g, 2 * p.encoder.size());
    CHECK(infer_task_posterior(encode_shared(x, p), p)(0, 1) > before);
  }
}

TEST_CASE("supervised loss leaves other components' heads and priors untouched") {
  Rng rng(26);
  const ModelParams p = randomized(arch(3), rng);
  Matrix x(4, 6);
  for (double& v : x.values()) v = rng.uniform();
  const std::size_t labels[4] = {0, 2, 0, 2};
  ModelParams g = ModelParams::zeros_like(p);
  backward(x, labels, p, rng, g);
  const auto& c1 = g.components[1];
  for (const Matrix* m : {&c1.head_weight, &c1.head_bias, &c1.prior_mean, &c1.prior_rho}) {
    for (double v : m->values()) CHECK(v == 0.0);
  }
  bool any = false;
  for (double v : c1.task_weight.values()) any = any || v != 0.0;
  CHECK(any);
}

TEST_CASE("duplicating a sample leaves the mean gradient unchanged") {
  Rng rng(27);
  const ModelParams p = randomized(arch(3), rng);
  const auto xv = random_x(rng, 6);
  const Matrix one = Matrix::row_vector(xv);
  Matrix two(2, 6);
  for (std::size_t j = 0; j < 6; ++j) two(0, j) = two(1, j) = xv[j];
  const std::uint64_t ids[2] = {0, 0};
  for (bool supervised : {false, true}) {
    const std::size_t y1[1] = {2};
    const std::size_t y2[2] = {2, 2};
    ObjectiveRequest a, b;
    a.x = &one;
    b.x = &two;
    b.noise_ids = ids;
    a.noise_key = b.noise_key = 99;
    if (supervised) {
      a.labels = y1;
      b.labels = y2;
    }
    ModelParams ga = ModelParams::zeros_like(p), gb = ModelParams::zeros_like(p);
    const auto oa = evaluate_objective(a, p, &ga);
    const auto ob = evaluate_objective(b, p, &gb);
    CHECK(oa.loss == doctest::Approx(ob.loss).epsilon(1e-14));
    CHECK(max_abs_diff(ga, gb, 0, 0) < 1e-12);
  }
}

TEST_CASE("shifting every task bias changes nothing else") {
  Rng rng(28);
  const ModelParams p = randomized(arch(4), rng);
  ModelParams shifted = p;
  for (auto& c : shifted.components) c.task_bias(0, 0) += 3.7;
  Matrix x(5, 6);
  for (double& v : x.values()) v = rng.uniform();
  ObjectiveRequest req;
  req.x = &x;
  req.noise_key = 1234;
  ModelParams ga = ModelParams::zeros_like(p), gb = ModelParams::zeros_like(p);
  const auto a = evaluate_objective(req, p, &ga);
  const auto b = evaluate_objective(req, shifted, &gb);
  for (std::size_t i = 0; i < a.posterior.size(); ++i) {
    CHECK(std::abs(a.posterior.data()[i] - b.posterior.data()[i]) < 1e-9);
  }
  for (std::size_t r = 0; r < 5; ++r) CHECK(std::abs(a.elbo_total[r] - b.elbo_total[r]) < 1e-9);
  CHECK(max_abs_diff(ga, gb, 0, 0) < 1e-9);
}

TEST_CASE("objective request validation") {
  Rng rng(29);
  const ModelParams p = randomized(arch(2), rng);
  Matrix x(2, 6, 0.5);
  ObjectiveRequest req;
  CHECK_THROWS_AS(evaluate_objective(req, p, nullptr), Error);
  req.x = &x;
  const std::size_t bad[2] = {0, 5};
  req.labels = bad;
  CHECK_THROWS_AS(evaluate_objective(req, p, nullptr), Error);
  const std::size_t short_labels[1] = {0};
  req.labels = short_labels;
  CHECK_THROWS_AS(evaluate_objective(req, p, nullptr), Error);
  Matrix wrong(2, 5, 0.5);
  req.labels = {};
  req.x = &wrong;
  CHECK_THROWS_AS(evaluate_objective(req, p, nullptr), Error);
}

TEST_CASE("a training step is bit-reproducible") {
  auto run = [] {
    Rng rng(30);
    ModelParams p = randomized(arch(3), rng);
    AdamState s;
    Matrix x(8, 6);
    for (double& v : x.values()) v = rng.uniform();
    for (int i = 0; i < 5; ++i) {
      ModelParams g = ModelParams::zeros_like(p);
      backward(x, {}, p, rng, g);
      auto pb = p.buffers();
      const auto gb = static_cast<const ModelParams&>(g).buffers();
      adam_step(pb, gb, s);
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("gradcheck passes and catches corrupted gradients") {
  GradcheckOptions opt;
  opt.configurations = 100;
  const auto report = run_gradcheck(opt);
  CHECK(report.passed);
  CHECK(report.max_error_marginal < 1e-4);
  CHECK(report.max_error_supervised < 1e-4);
  bool marginal = false, supervised = false;
  for (const auto& b : report.buffers) {
    marginal = marginal || b.loss == "marginal";
    supervised = supervised || b.loss == "supervised";
  }
  CHECK(marginal);
  CHECK(supervised);

  opt.configurations = 3;
  opt.corrupt_buffer = "head_bias";
  const auto bad = run_gradcheck(opt);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_buffer.find("head_bias") != std::string::npos);
}
