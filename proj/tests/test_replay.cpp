#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "adam.hpp"
#include "error.hpp"
#include "objective.hpp"
#include "replay.hpp"

using namespace curlcl;

namespace {

Architecture arch(std::size_t k) {
  Architecture a;
  a.input_dim = 6;
  a.encoder = {6};
  a.decoder = {5};
  a.latent_dim = 2;
  a.k_init = k;
  a.k_max = 6;
  return a;
}

}  // namespace

TEST_CASE("usage counts") {
  UsageCounts u;
  const Matrix uniform(4, 3, 1.0 / 3.0);
  u.update(uniform);
  CHECK(u.total_batches == 1);
  for (double v : u.accumulated) CHECK(v == doctest::Approx(1.0 / 3.0));
  u.update(uniform);
  for (double v : u.accumulated) CHECK(v == doctest::Approx(2.0 / 3.0));

  Rng rng(41);
  UsageCounts w;
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 1 + t / 25;
    Matrix q(8, k);
    for (std::size_t b = 0; b < 8; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += (q(b, j) = rng.uniform());
      for (std::size_t j = 0; j < k; ++j) q(b, j) /= s;
    }
    w.update(q);
    const double sum = std::accumulate(w.accumulated.begin(), w.accumulated.end(), 0.0);
    CHECK(std::abs(sum - static_cast<double>(w.total_batches)) < 1e-6);
    for (double v : w.accumulated) CHECK(v >= 0.0);
    const auto p = w.prior(k);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(w.update(Matrix(2, 4, 0.3)), Error);

  const UsageCounts empty;
  for (double v : empty.prior(4)) CHECK(v == 0.25);
}

TEST_CASE("snapshot policy") {
  ReplayConfig fixed{ReplayMode::mgr, SnapshotMode::fixed, 10000};
  std::size_t count = 0;
  for (std::uint64_t s = 1; s <= 100000; ++s) count += fixed_snapshot_due(fixed, s);
  CHECK(count == 10);
  ReplayConfig dynamic{ReplayMode::mgr, SnapshotMode::dynamic, 10000};
  CHECK_FALSE(fixed_snapshot_due(dynamic, 10000));
  ReplayConfig off{ReplayMode::off, SnapshotMode::fixed, 10};
  CHECK_FALSE(fixed_snapshot_due(off, 10));

  for (std::uint64_t s = 0; s < 6; ++s) CHECK_FALSE(is_generated_step(fixed, false, s));
  const bool pattern[6] = {false, true, false, true, false, true};
  for (std::uint64_t s = 0; s < 6; ++s) CHECK(is_generated_step(fixed, true, s) == pattern[s]);
  CHECK_FALSE(is_generated_step(off, true, 1));

  CHECK(parse_replay_mode("smgr") == ReplayMode::smgr);
  CHECK(parse_snapshot_mode("fixed") == SnapshotMode::fixed);
  CHECK_THROWS_AS(parse_replay_mode("sometimes"), Error);
}

TEST_CASE("snapshots are frozen against live training") {
  Rng rng(42);
  ModelParams live = ModelParams::initialize(arch(3), rng);
  UsageCounts usage;
  usage.update(Matrix::from_rows({{0.6, 0.3, 0.1}}));
  const Snapshot snap = take_snapshot(live, usage, 12);
  CHECK(snap.step == 12);
  Rng g1(7);
  const ReplayBatch first = replay_step(snap, 32, g1, true);

  AdamState adam;
  Matrix x(4, 6);
  for (int i = 0; i < 200; ++i) {
    for (double& v : x.values()) v = rng.uniform();
    ModelParams g = ModelParams::zeros_like(live);
    backward(x, {}, live, rng, g);
    auto pb = live.buffers();
    const auto gb = static_cast<const ModelParams&>(g).buffers();
    adam_step(pb, gb, adam);
  }
  live.add_component_copy(0);
  usage.update(Matrix::from_rows({{0.0, 0.0, 0.0, 1.0}}));

  Rng g2(7);
  const ReplayBatch second = replay_step(snap, 32, g2, true);
  CHECK(first.x == second.x);
  CHECK(first.labels == second.labels);
}

TEST_CASE("replay draws labels from the snapshot's usage prior") {
  Rng rng(43);
  const ModelParams p = ModelParams::initialize(arch(3), rng);
  UsageCounts usage;
  usage.update(Matrix::from_rows({{0.5, 0.5, 0.0}, {0.7, 0.1, 0.2}}));
  usage.update(Matrix::from_rows({{1.0, 0.0, 0.0}}));
  const Snapshot snap = take_snapshot(p, usage, 0);
  const auto prior = usage.prior(3);
  const ReplayBatch b = replay_step(snap, 10000, rng, true);
  std::vector<double> freq(3, 0.0);
  for (std::size_t y : b.labels) freq[y] += 1e-4;
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(freq[k] - prior[k]) < 0.02);
  CHECK(b.x.rows() == 10000);
  CHECK(replay_step(snap, 5, rng, false).labels.empty());
}
