#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eval.hpp"
#include "expansion.hpp"
#include "model.hpp"
#include "replay.hpp"
#include "stream.hpp"

namespace curlcl {

enum class TrainingMode { unsupervised, supervised };
enum class DataSource { mnist, blobs, file };

struct DataConfig {
  DataSource source = DataSource::mnist;
  std::string dir;         // MNIST directory; empty uses $CURLCL_DATA_DIR
  std::string train_file;  // generic dataset files (source = file)
  std::string test_file;
  std::vector<std::size_t> classes;  // empty keeps every class
  std::size_t valid = 10000;         // held out from the training file
  BlobSpec blobs;
  std::size_t blob_test_per_class = 250;
};

struct EvalSettings {
  std::uint64_t cadence = 500;  // 0: final evaluation only
  std::vector<std::size_t> knn{3, 5, 10};
  std::size_t knn_subsample = 10000;
  LatentMode latents = LatentMode::sampled;
  std::string split = "test";      // test | valid
  std::size_t elbo_samples = 1000;  // held-out rows for the logged ELBO
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out;
  bool export_buffers = false;  // write each expansion buffer to out/
  TrainingMode mode = TrainingMode::unsupervised;
  DataConfig data;
  StreamSpec stream;
  Architecture model;
  double learning_rate = 1e-3;
  ExpansionConfig expansion;
  ReplayConfig replay;
  EvalSettings eval;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

// Grammar: one `key = value` per line; blank lines and lines starting with
// '#' are ignored. Keys are dotted (section.name). Lists are comma
// separated; task pairs are written a-b. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
// Every key, in a fixed order, one per line.
std::string serialize_config(const ExperimentConfig& config);
// Applies one dotted-key override on top of an existing config.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
// Applies `key=value`.
void apply_override(ExperimentConfig& config, const std::string& assignment);
// Range checks; config error naming the key.
void validate_config(const ExperimentConfig& config);
std::vector<std::string> config_keys();

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);
std::string preset_description(const std::string& name);

}  // namespace curlcl
