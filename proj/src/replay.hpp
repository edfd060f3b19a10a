#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"

namespace curlcl {

// Running sum of batch-mean task posteriors. Only real-data batches are
// counted.
struct UsageCounts {
  std::vector<double> accumulated;
  std::uint64_t total_batches = 0;

  // q is B × K with rows summing to 1. Grows `accumulated` with zeros when K
  // has increased since the last update.
  void update(const Matrix& q);
  // accumulated / total_batches, or uniform over `k` when nothing was counted.
  std::vector<double> prior(std::size_t k) const;

  friend bool operator==(const UsageCounts&, const UsageCounts&) = default;
};

enum class ReplayMode { off, mgr, smgr };
enum class SnapshotMode { fixed, dynamic };

const char* replay_mode_name(ReplayMode mode);
const char* snapshot_mode_name(SnapshotMode mode);
ReplayMode parse_replay_mode(const std::string& text);
SnapshotMode parse_snapshot_mode(const std::string& text);

struct ReplayConfig {
  ReplayMode mode = ReplayMode::mgr;
  SnapshotMode snapshot = SnapshotMode::dynamic;
  std::uint64_t period = 10000;  // fixed mode only
};

// Frozen generator: θ_prev and the usage counts at the time it was taken.
struct Snapshot {
  ModelParams params;
  UsageCounts usage;
  std::uint64_t step = 0;
};

Snapshot take_snapshot(const ModelParams& params, const UsageCounts& usage, std::uint64_t step);

// Fixed policy: true when completed step `step` (1-based) is a multiple of
// the period.
bool fixed_snapshot_due(const ReplayConfig& config, std::uint64_t step);

// With a snapshot present, 0-based even steps are real and odd steps are
// generated; without one every step is real.
bool is_generated_step(const ReplayConfig& config, bool have_snapshot, std::uint64_t step);

struct ReplayBatch {
  Matrix x;
  std::vector<std::size_t> labels;  // y_gen; empty for plain MGR
};

// Generates n samples from the snapshot under its normalized usage prior.
ReplayBatch replay_step(const Snapshot& snapshot, std::size_t n, Rng& rng, bool smgr);

}  // namespace curlcl
