#include "replay.hpp"

#include <cmath>

#include "error.hpp"

namespace curlcl {

void UsageCounts::update(const Matrix& q) {
  if (q.rows() == 0) throw Error(ErrorCode::argument, "update_usage: empty batch");
  for (std::size_t b = 0; b < q.rows(); ++b) {
    double sum = 0.0;
    for (double v : q.row(b)) sum += v;
    if (std::abs(sum - 1.0) > 1e-6) {
      throw Error(ErrorCode::argument,
                  "update_usage: row " + std::to_string(b) + " sums to " + std::to_string(sum));
    }
  }
  if (accumulated.size() > q.cols()) {
    throw Error(ErrorCode::shape, "update_usage: posterior has fewer components than counts");
  }
  accumulated.resize(q.cols(), 0.0);
  const double inv = 1.0 / static_cast<double>(q.rows());
  for (std::size_t k = 0; k < q.cols(); ++k) {
    double mean = 0.0;
    for (std::size_t b = 0; b < q.rows(); ++b) mean += q(b, k);
    accumulated[k] += mean * inv;
  }
  total_batches += 1;
}

std::vector<double> UsageCounts::prior(std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::argument, "usage prior: K = 0");
  if (accumulated.size() > k) {
    throw Error(ErrorCode::shape, "usage prior: counts cover more components than K");
  }
  double total = 0.0;
  for (double v : accumulated) total += v;
  std::vector<double> p(k, 1.0 / static_cast<double>(k));
  if (total_batches == 0 || total <= 0.0) return p;
  for (std::size_t j = 0; j < k; ++j) p[j] = j < accumulated.size() ? accumulated[j] / total : 0.0;
  return p;
}

const char* replay_mode_name(ReplayMode mode) {
  switch (mode) {
    case ReplayMode::off: return "off";
    case ReplayMode::mgr: return "mgr";
    case ReplayMode::smgr: return "smgr";
  }
  return "?";
}

const char* snapshot_mode_name(SnapshotMode mode) {
  return mode == SnapshotMode::fixed ? "fixed" : "dynamic";
}

ReplayMode parse_replay_mode(const std::string& text) {
  if (text == "off") return ReplayMode::off;
  if (text == "mgr") return ReplayMode::mgr;
  if (text == "smgr") return ReplayMode::smgr;
  throw Error(ErrorCode::config, "unknown replay mode '" + text + "' (off, mgr, smgr)");
}

SnapshotMode parse_snapshot_mode(const std::string& text) {
  if (text == "fixed") return SnapshotMode::fixed;
  if (text == "dynamic") return SnapshotMode::dynamic;
  throw Error(ErrorCode::config, "unknown snapshot policy '" + text + "' (fixed, dynamic)");
}

Snapshot take_snapshot(const ModelParams& params, const UsageCounts& usage, std::uint64_t step) {
  return Snapshot{params, usage, step};
}

bool fixed_snapshot_due(const ReplayConfig& config, std::uint64_t step) {
  return config.mode != ReplayMode::off && config.snapshot == SnapshotMode::fixed &&
         config.period > 0 && step > 0 && step % config.period == 0;
}

bool is_generated_step(const ReplayConfig& config, bool have_snapshot, std::uint64_t step) {
  return config.mode != ReplayMode::off && have_snapshot && step % 2 == 1;
}

ReplayBatch replay_step(const Snapshot& snapshot, std::size_t n, Rng& rng, bool smgr) {
  const auto prior = snapshot.usage.prior(snapshot.params.num_components());
  GeneratedBatch gen = generate(snapshot.params, prior, n, rng);
  ReplayBatch batch;
  batch.x = std::move(gen.x);
  if (smgr) batch.labels = std::move(gen.labels);
  return batch;
}

}  // namespace curlcl
