#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace curlcl {

// xoshiro256** seeded through splitmix64. Checkpoints record kAlgorithmId so a
// change of generator is detectable when reloading.
//
// Sub-streams are derived, never shared: `Rng::derive(seed, tag, ...)` hashes
// the seed with the tags through splitmix64, so e.g. the data stream and the
// reparameterization noise never consume from the same state.
class Rng {
 public:
  static constexpr std::uint32_t kAlgorithmId = 1;

  explicit Rng(std::uint64_t seed = 0);

  static Rng derive(std::uint64_t seed, std::uint64_t tag);
  static Rng derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);
  static Rng derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1].
  double uniform_open_low();
  // Standard normal via Box-Muller (one output per call).
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Fixed tags for the independent sub-streams of a run.
namespace stream_tag {
inline constexpr std::uint64_t init = 0x494e4954ULL;        // weight init
inline constexpr std::uint64_t reparam = 0x52455041ULL;     // reparameterization noise
inline constexpr std::uint64_t replay = 0x52504c59ULL;      // generative replay
inline constexpr std::uint64_t data = 0x44415441ULL;        // stream batches
inline constexpr std::uint64_t expansion = 0x45585041ULL;   // finetune minibatches
inline constexpr std::uint64_t eval = 0x4556414cULL;        // evaluation sampling
inline constexpr std::uint64_t split = 0x53504c54ULL;       // train/valid split
}  // namespace stream_tag

}  // namespace curlcl
