#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adam.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "eval.hpp"
#include "expansion.hpp"
#include "replay.hpp"

namespace curlcl {

inline constexpr const char* kMetricsHeader =
    "step,loss,elbo,cat_kl_mean,n_components,cluster_acc,knn3,knn5,knn10,snapshot_taken,"
    "expansion_event";

struct TrainingData {
  Dataset train;
  Dataset eval;  // test or validation split, per eval.split
};

// Loads (and class-filters) the datasets named by the config. MNIST is read
// from data.dir, falling back to $CURLCL_DATA_DIR.
TrainingData load_training_data(const ExperimentConfig& config);

struct TrainResult {
  ModelParams params;
  AdamState adam;
  UsageCounts usage;
  std::optional<Snapshot> snapshot;
  std::vector<ExpansionEvent> expansions;
  std::size_t snapshots_taken = 0;
  std::uint64_t steps = 0;
  std::string metrics_csv;    // header plus one line per logged row
  std::string per_class_csv;  // step, class_0.. per evaluation
  EvalReport final_report;
  // Supervised runs only.
  std::optional<double> incremental_class_accuracy;
  std::optional<double> incremental_task_accuracy;
};

using LogFn = std::function<void(const std::string&)>;

// Runs the full training loop. When config.out is set, writes metrics.csv,
// per_class.csv, final.ckpt and snapshot.ckpt (whenever a snapshot is taken) there.
TrainResult run_train(const ExperimentConfig& config, const LogFn& log = {});
// Same, on already loaded data (no files are read).
TrainResult run_train(const ExperimentConfig& config, const TrainingData& data,
                      const LogFn& log = {});

EvalConfig eval_config(const ExperimentConfig& config);

// Mean marginalized bound over the first `limit` rows of x.
double mean_elbo(const ModelParams& params, const Matrix& x, std::size_t limit,
                 std::uint64_t noise_key);

// Random-init model for the config's architecture and seed, with the input
// dimension taken from `input_dim`.
ModelParams initial_params(const ExperimentConfig& config, std::size_t input_dim);

// Writes samples.mat and samples.pgm into `dir`: n generated images drawn
// under the usage prior (uniform when the counts are empty).
Matrix export_samples(const ModelParams& params, const UsageCounts& usage, std::size_t n,
                      std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace curlcl
