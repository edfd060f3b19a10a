#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "rng.hpp"

namespace curlcl {

enum class StreamMode { iid, sequential, continuous_drift, split_task };

const char* stream_mode_name(StreamMode mode);
StreamMode parse_stream_mode(const std::string& text);

struct StreamSpec {
  StreamMode mode = StreamMode::sequential;
  std::uint64_t total_steps = 100000;
  std::size_t batch_size = 64;
  // Empty: every class of the dataset in natural order.
  std::vector<std::size_t> class_order;
  // Drift ramp length in steps; 0 selects 0.2 of a block.
  std::uint64_t drift_window = 0;
  std::vector<std::pair<std::size_t, std::size_t>> task_pairs{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}};
};

struct Batch {
  Matrix x;
  std::vector<std::size_t> labels;
  std::uint64_t step = 0;
};

// Stateless scheduler: the batch for step t depends only on (spec, dataset,
// seed, t), so replay or evaluation never shift the real-data sequence.
class StreamSampler {
 public:
  StreamSampler(StreamSpec spec, const Dataset& data, std::uint64_t seed);

  // Empty once step >= total_steps.
  std::optional<Batch> next_batch(std::uint64_t step) const;

  // Steps per class block (per task in split_task mode).
  std::uint64_t block_length() const { return block_; }
  std::uint64_t drift_window() const { return window_; }
  std::size_t block_count() const { return groups_.size(); }
  const StreamSpec& spec() const { return spec_; }

  // Probability that a slot in `step` draws from the current block's class
  // rather than the previous one (1 outside drift windows).
  double new_class_probability(std::uint64_t step) const;

 private:
  std::size_t draw(std::size_t group, Rng& rng) const;

  StreamSpec spec_;
  const Dataset& data_;
  std::uint64_t seed_;
  std::vector<std::vector<std::size_t>> groups_;  // example indices per block
  std::vector<std::size_t> all_;
  std::uint64_t block_ = 0;
  std::uint64_t window_ = 0;
};

}  // namespace curlcl
