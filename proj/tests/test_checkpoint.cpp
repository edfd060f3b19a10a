#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <vector>

#include "checkpoint.hpp"
#include "error.hpp"

using namespace curlcl;

namespace {

Checkpoint trained_checkpoint() {
  Architecture a;
  a.input_dim = 9;
  a.encoder = {7, 5};
  a.decoder = {6};
  a.latent_dim = 3;
  a.k_init = 2;
  a.k_max = 4;
  Rng rng(21);
  Checkpoint c;
  c.params = ModelParams::initialize(a, rng);
  c.params.add_component_copy(1);
  AdamState adam;
  adam.config.learning_rate = 3e-4;
  ModelParams grads = ModelParams::zeros_like(c.params);
  for (int it = 0; it < 5; ++it) {
    for (Matrix* g : grads.buffers()) {
      for (double& v : g->values()) v = rng.normal();
    }
    auto p = c.params.buffers();
    auto g = grads.buffers();
    const std::vector<const Matrix*> gc(g.begin(), g.end());
    adam_step(p, gc, adam);
  }
  c.adam = adam;
  c.usage.accumulated = {1.5, 0.25, 3.0};
  c.usage.total_batches = 11;
  c.step = 1234;
  c.snapshot = true;
  return c;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit-exact") {
  const Checkpoint c = trained_checkpoint();
  const auto bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.params == c.params);
  REQUIRE(back.adam);
  CHECK(back.adam->step == c.adam->step);
  CHECK(back.adam->config.learning_rate == c.adam->config.learning_rate);
  CHECK(back.adam->first_moment == c.adam->first_moment);
  CHECK(back.adam->second_moment == c.adam->second_moment);
  CHECK(back.usage == c.usage);
  CHECK(back.step == 1234);
  CHECK(back.snapshot);
  CHECK(serialize_checkpoint(back) == bytes);

  Checkpoint bare = c;
  bare.adam.reset();
  bare.snapshot = false;
  const Checkpoint bare_back = deserialize_checkpoint(serialize_checkpoint(bare));
  CHECK_FALSE(bare_back.adam);
  CHECK_FALSE(bare_back.snapshot);
  CHECK(bare_back.params == c.params);

  const auto path = std::filesystem::temp_directory_path() / "curlcl_test_ckpt.bin";
  save_checkpoint(path, c);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), Error);
}

TEST_CASE("checkpoint parse errors") {
  const auto bytes = serialize_checkpoint(trained_checkpoint());
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(deserialize_checkpoint(part), Error);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_magic), doctest::Contains("magic"), Error);
  auto bad_version = bytes;
  bad_version[8] = 99;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_version), doctest::Contains("version"), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(trailing), doctest::Contains("trailing"), Error);
  auto huge = bytes;
  std::memset(huge.data() + 28, 0xff, 8);  // input_dim
  CHECK_THROWS_AS(deserialize_checkpoint(huge), Error);
}
