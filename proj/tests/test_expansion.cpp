#include <doctest.h>

#include <cmath>
#include <vector>

#include "error.hpp"
#include "expansion.hpp"
#include "objective.hpp"

using namespace curlcl;

namespace {

Architecture arch(std::size_t k) {
  Architecture a;
  a.input_dim = 8;
  a.encoder = {8, 6};
  a.decoder = {6};
  a.latent_dim = 2;
  a.k_init = k;
  a.k_max = 4;
  return a;
}

PoorSampleBuffer filled(std::size_t n, Rng& rng, std::size_t dim = 8) {
  ExpansionConfig cfg;
  cfg.buffer_capacity = n;
  PoorSampleBuffer buf = make_buffer(cfg);
  Matrix x(n, dim);
  for (double& v : x.values()) v = rng.uniform() < 0.5 ? 0.9 : 0.1;
  const std::vector<double> low(n, -1000.0);
  screen_batch(x, low, buf);
  return buf;
}

}  // namespace

TEST_CASE("screening against the threshold") {
  ExpansionConfig cfg;
  cfg.threshold = -200.0;
  cfg.buffer_capacity = 3;
  PoorSampleBuffer buf = make_buffer(cfg);
  Matrix x(2, 4, 0.5);
  CHECK(screen_batch(x, std::vector<double>{-150.0, -250.0}, buf) == 1);
  CHECK(buf.size() == 1);
  CHECK(buf.elbos[0] == -250.0);

  Matrix more(5, 4, 0.1);
  CHECK(screen_batch(more, std::vector<double>(5, -300.0), buf) == 2);
  CHECK(buf.size() == 3);
  CHECK(buf.full());
  CHECK(screen_batch(more, std::vector<double>(5, -300.0), buf) == 0);
  CHECK(buf.size() == 3);
  for (double e : buf.elbos) CHECK(e < cfg.threshold);
  CHECK_THROWS_AS(screen_batch(more, std::vector<double>(2, -300.0), buf), Error);
}

TEST_CASE("raising the threshold never stores fewer samples") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    Matrix x(64, 3, 0.2);
    std::vector<double> e(64);
    for (double& v : e) v = -300.0 + 200.0 * rng.uniform();
    ExpansionConfig lo, hi;
    lo.threshold = -250.0 + 50.0 * rng.uniform();
    hi.threshold = lo.threshold + 60.0 * rng.uniform();
    lo.buffer_capacity = hi.buffer_capacity = 1 + rng.below(100);
    PoorSampleBuffer a = make_buffer(lo), b = make_buffer(hi);
    for (int step = 0; step < 3; ++step) {
      screen_batch(x, e, a);
      screen_batch(x, e, b);
      CHECK(b.size() >= a.size());
    }
  }
}

TEST_CASE("should_expand") {
  Rng rng(32);
  ModelParams p = ModelParams::initialize(arch(2), rng);
  ExpansionState state;
  state.config.buffer_capacity = 4;
  state.config.consolidation = 100;
  PoorSampleBuffer buf = filled(4, rng);
  state.steps_since_last_expansion = 100;
  CHECK(should_expand(buf, state, p));
  state.steps_since_last_expansion = 50;
  CHECK_FALSE(should_expand(buf, state, p));
  state.steps_since_last_expansion = 100;
  p.add_component_copy(0);
  p.add_component_copy(0);
  CHECK_FALSE(should_expand(buf, state, p));
  ModelParams q = ModelParams::initialize(arch(1), rng);
  buf.samples.pop_back();
  buf.elbos.pop_back();
  CHECK_FALSE(should_expand(buf, state, q));
  state.config.enabled = false;
  CHECK_FALSE(should_expand(filled(4, rng), state, q));
}

TEST_CASE("parent selection") {
  Rng rng(33);
  const ModelParams one = ModelParams::initialize(arch(1), rng);
  CHECK(select_parent(filled(5, rng), one) == 0);

  Matrix q(2, 2);
  q(0, 0) = 1.6;
  q(0, 1) = 0.4;
  q(1, 0) = 1.6;
  q(1, 1) = 1.4;
  CHECK(select_parent(q) == 0);
  CHECK(select_parent(Matrix::from_rows({{0.5, 0.5}, {0.25, 0.75}, {0.75, 0.25}})) == 0);
  CHECK(select_parent(Matrix::from_rows({{0.2, 0.8}})) == 1);
  CHECK_THROWS_AS(select_parent(Matrix(0, 3)), Error);
  PoorSampleBuffer empty;
  CHECK_THROWS_AS(select_parent(empty, one), Error);

  // Brute-force oracle: sum the posterior one sample at a time.
  for (int t = 0; t < 50; ++t) {
    ModelParams p = ModelParams::initialize(arch(3), rng);
    for (auto& c : p.components) c.task_bias(0, 0) = rng.normal();
    if (t % 5 == 0) p.add_component_copy(rng.below(3));
    const PoorSampleBuffer buf = filled(1 + rng.below(30), rng);
    std::vector<double> mass(p.num_components(), 0.0);
    for (const auto& s : buf.samples) {
      const Matrix row = Matrix::row_vector(s);
      const Matrix qr = infer_task_posterior(encode_shared(row, p), p);
      for (std::size_t k = 0; k < mass.size(); ++k) mass[k] += qr(0, k);
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < mass.size(); ++k) if (mass[k] > mass[best]) best = k;
    CHECK(select_parent(buf, p) == best);
  }
}

TEST_CASE("expand copies the parent, then finetunes on the buffer") {
  Rng rng(34);
  ModelParams p = ModelParams::initialize(arch(2), rng);
  p.components[1].task_bias(0, 0) = 5.0;
  AdamState adam;
  {
    ModelParams g = ModelParams::zeros_like(p);
    Matrix x(4, 8, 0.3);
    backward(x, {}, p, rng, g);
    auto pb = p.buffers();
    const auto gb = static_cast<const ModelParams&>(g).buffers();
    adam_step(pb, gb, adam);
  }

  ExpansionState state;
  state.config.finetune_iters = 0;
  state.steps_since_last_expansion = 250;
  PoorSampleBuffer buf = filled(20, rng);
  ModelParams copy = p;
  AdamState adam_copy = adam;
  const ExpansionEvent ev = expand(copy, adam_copy, buf, state, rng, 77);
  CHECK(ev.parent == 1);
  CHECK(ev.new_k == 3);
  CHECK(ev.step == 77);
  CHECK(copy.num_components() == 3);
  CHECK(copy.components[2] == copy.components[1]);
  CHECK(adam_copy.first_moment.size() == copy.buffers().size());
  for (std::size_t i = copy.component_buffer_offset(2); i < copy.buffers().size(); ++i) {
    for (double v : adam_copy.first_moment[i].values()) CHECK(v == 0.0);
    for (double v : adam_copy.second_moment[i].values()) CHECK(v == 0.0);
  }
  CHECK(buf.size() == 0);
  CHECK(state.steps_since_last_expansion == 0);
  CHECK(state.log.size() == 1);

  state.config.finetune_iters = 100;
  state.config.finetune_batch = 64;
  PoorSampleBuffer buf2 = filled(20, rng);
  const PoorSampleBuffer kept = buf2;
  ModelParams probe = p;
  probe.add_component_copy(select_parent(kept, p));
  const double before = buffer_objective(kept, probe, 2, 5);
  expand(p, adam, buf2, state, rng, 78);
  CHECK(buffer_objective(kept, p, 2, 5) >= before);
  CHECK(state.log.size() == 2);
}

TEST_CASE("expand at capacity is rejected") {
  Rng rng(35);
  ModelParams p = ModelParams::initialize(arch(4), rng);
  AdamState adam;
  ExpansionState state;
  PoorSampleBuffer buf = filled(5, rng);
  CHECK_THROWS_AS(expand(p, adam, buf, state, rng, 1), Error);
  CHECK(p.num_components() == 4);
}
