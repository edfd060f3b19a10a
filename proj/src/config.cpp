#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include "error.hpp"

namespace curlcl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw Error(ErrorCode::config, key + ": '" + value + "' is not " + what);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double to_f64(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split(v, ',')) out.push_back(to_u64(key, item));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> to_pairs(const std::string& key,
                                                          const std::string& v) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, '-');
    if (parts.size() != 2) bad_value(key, item, "a pair a-b");
    out.emplace_back(to_u64(key, parts[0]), to_u64(key, parts[1]));
  }
  return out;
}

std::string from_f64(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(items[i]);
  }
  return out;
}

std::string join_pairs(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(pairs[i].first) + "-" + std::to_string(pairs[i].second);
  }
  return out;
}

const char* training_mode_name(TrainingMode m) {
  return m == TrainingMode::supervised ? "supervised" : "unsupervised";
}

const char* data_source_name(DataSource s) {
  switch (s) {
    case DataSource::mnist: return "mnist";
    case DataSource::blobs: return "blobs";
    case DataSource::file: return "file";
  }
  return "?";
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define CURLCL_U64(KEY, MEMBER)                                                   \
  Field{KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }, \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {   \
          c.MEMBER = static_cast<decltype(c.MEMBER)>(to_u64(k, v));              \
        }}
#define CURLCL_F64(KEY, MEMBER)                                                  \
  Field{KEY, [](const ExperimentConfig& c) { return from_f64(c.MEMBER); },      \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {   \
          c.MEMBER = to_f64(k, v);                                               \
        }}
#define CURLCL_STR(KEY, MEMBER)                                          \
  Field{KEY, [](const ExperimentConfig& c) { return c.MEMBER; },         \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; }}
#define CURLCL_LIST(KEY, MEMBER)                                                \
  Field{KEY, [](const ExperimentConfig& c) { return join(c.MEMBER); },         \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {  \
          c.MEMBER = to_list(k, v);                                             \
        }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CURLCL_U64("run.seed", seed),
      CURLCL_STR("run.out", out),
      Field{"run.export_buffers", [](const ExperimentConfig& c) { return std::string(c.export_buffers ? "true" : "false"); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.export_buffers = to_bool(k, v);
            }},
      Field{"run.mode", [](const ExperimentConfig& c) { return std::string(training_mode_name(c.mode)); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v == "unsupervised") c.mode = TrainingMode::unsupervised;
              else if (v == "supervised") c.mode = TrainingMode::supervised;
              else bad_value(k, v, "unsupervised or supervised");
            }},
      Field{"data.source", [](const ExperimentConfig& c) { return std::string(data_source_name(c.data.source)); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v == "mnist") c.data.source = DataSource::mnist;
              else if (v == "blobs") c.data.source = DataSource::blobs;
              else if (v == "file") c.data.source = DataSource::file;
              else bad_value(k, v, "mnist, blobs or file");
            }},
      CURLCL_STR("data.dir", data.dir),
      CURLCL_STR("data.train_file", data.train_file),
      CURLCL_STR("data.test_file", data.test_file),
      CURLCL_LIST("data.classes", data.classes),
      CURLCL_U64("data.valid", data.valid),
      CURLCL_U64("data.blob_classes", data.blobs.classes),
      CURLCL_U64("data.blob_dim", data.blobs.dim),
      CURLCL_U64("data.blob_per_class", data.blobs.per_class),
      CURLCL_U64("data.blob_test_per_class", data.blob_test_per_class),
      CURLCL_F64("data.blob_spread", data.blobs.spread),
      CURLCL_F64("data.blob_contrast", data.blobs.contrast),
      Field{"stream.mode", [](const ExperimentConfig& c) { return std::string(stream_mode_name(c.stream.mode)); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.stream.mode = parse_stream_mode(v);
            }},
      CURLCL_U64("stream.steps", stream.total_steps),
      CURLCL_U64("stream.batch", stream.batch_size),
      CURLCL_LIST("stream.class_order", stream.class_order),
      CURLCL_U64("stream.drift_window", stream.drift_window),
      Field{"stream.task_pairs", [](const ExperimentConfig& c) { return join_pairs(c.stream.task_pairs); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.stream.task_pairs = to_pairs(k, v);
            }},
      CURLCL_LIST("model.encoder", model.encoder),
      CURLCL_LIST("model.decoder", model.decoder),
      CURLCL_U64("model.latent_dim", model.latent_dim),
      CURLCL_U64("model.k_init", model.k_init),
      CURLCL_U64("model.k_max", model.k_max),
      CURLCL_F64("optim.lr", learning_rate),
      Field{"expansion.enabled", [](const ExperimentConfig& c) { return std::string(c.expansion.enabled ? "true" : "false"); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.expansion.enabled = to_bool(k, v);
            }},
      CURLCL_F64("expansion.threshold", expansion.threshold),
      CURLCL_U64("expansion.buffer", expansion.buffer_capacity),
      CURLCL_U64("expansion.consolidation", expansion.consolidation),
      CURLCL_U64("expansion.finetune_iters", expansion.finetune_iters),
      CURLCL_U64("expansion.finetune_batch", expansion.finetune_batch),
      Field{"replay.mode", [](const ExperimentConfig& c) { return std::string(replay_mode_name(c.replay.mode)); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.replay.mode = parse_replay_mode(v);
            }},
      Field{"replay.snapshot", [](const ExperimentConfig& c) { return std::string(snapshot_mode_name(c.replay.snapshot)); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.replay.snapshot = parse_snapshot_mode(v);
            }},
      CURLCL_U64("replay.period", replay.period),
      CURLCL_U64("eval.cadence", eval.cadence),
      CURLCL_LIST("eval.knn", eval.knn),
      CURLCL_U64("eval.knn_subsample", eval.knn_subsample),
      Field{"eval.latents", [](const ExperimentConfig& c) { return std::string(latent_mode_name(c.eval.latents)); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.eval.latents = parse_latent_mode(v);
            }},
      Field{"eval.split", [](const ExperimentConfig& c) { return c.eval.split; },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v != "test" && v != "valid") bad_value(k, v, "test or valid");
              c.eval.split = v;
            }},
      CURLCL_U64("eval.elbo_samples", eval.elbo_samples),
  };
  return table;
}

#undef CURLCL_U64
#undef CURLCL_F64
#undef CURLCL_STR
#undef CURLCL_LIST

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return f;
  }
  throw Error(ErrorCode::config, "unknown config key '" + key + "'");
}

}  // namespace

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, key, trim(value));
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::config, "override '" + assignment + "' is not key=value");
  }
  set_config_value(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config, "line " + std::to_string(number) + ": expected key = value");
    }
    try {
      set_config_value(config, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(number) + ": " + e.what());
    }
  }
  return config;
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

void validate_config(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::config, msg);
  };
  c.model.validate();
  require(c.stream.total_steps > 0, "stream.steps must be positive");
  require(c.stream.batch_size > 0, "stream.batch must be positive");
  require(c.learning_rate > 0.0, "optim.lr must be positive");
  require(c.expansion.buffer_capacity > 0, "expansion.buffer must be positive");
  require(c.expansion.finetune_batch > 0, "expansion.finetune_batch must be positive");
  require(c.replay.snapshot != SnapshotMode::fixed || c.replay.mode == ReplayMode::off ||
              c.replay.period > 0,
          "replay.period must be positive for fixed snapshots");
  for (std::size_t k : c.eval.knn) require(k > 0, "eval.knn entries must be positive");
  require(c.data.source != DataSource::file || (!c.data.train_file.empty() && !c.data.test_file.empty()),
          "data.train_file and data.test_file are required when data.source = file");
  require(c.data.source != DataSource::blobs ||
              (c.data.blobs.classes > 0 && c.data.blobs.dim >= c.data.blobs.classes &&
               c.data.blobs.per_class > 0 && c.data.blob_test_per_class > 0),
          "blob dataset sizes must be positive with at least one pixel per class");
  require(c.data.blobs.contrast >= 0.5 && c.data.blobs.contrast <= 1.0 && c.data.blobs.spread >= 0.0,
          "data.blob_contrast must lie in [0.5, 1] and data.blob_spread must be non-negative");
  require(c.mode != TrainingMode::supervised || c.stream.mode == StreamMode::split_task ||
              c.stream.mode == StreamMode::sequential || c.stream.mode == StreamMode::iid,
          "supervised training needs an iid, sequential or split_task stream");
}

// ---------------------------------------------------------------------------
// Presets

namespace {

struct PresetEntry {
  const char* name;
  const char* description;
  std::function<ExperimentConfig()> make;
};

// Full-scale MNIST main setup.
ExperimentConfig mnist_main() {
  ExperimentConfig c;
  c.data.source = DataSource::mnist;
  c.stream.mode = StreamMode::sequential;
  c.stream.total_steps = 100000;
  c.model.encoder = {1200, 600, 300, 150};
  c.model.decoder = {500, 500};
  c.model.latent_dim = 32;
  c.model.k_init = 1;
  c.model.k_max = 25;
  c.expansion.threshold = -200.0;
  c.eval.cadence = 2500;
  return c;
}

ExperimentConfig with_replay(ExperimentConfig c, ReplayMode mode, SnapshotMode snap,
                             std::uint64_t period) {
  c.replay.mode = mode;
  c.replay.snapshot = snap;
  c.replay.period = period;
  return c;
}

// Desk-scale MNIST: three classes, small network.
ExperimentConfig mnist3() {
  ExperimentConfig c;
  c.data.source = DataSource::mnist;
  c.data.classes = {0, 1, 2};
  c.stream.mode = StreamMode::sequential;
  c.stream.total_steps = 4500;
  c.model.encoder = {256, 128};
  c.model.decoder = {128};
  c.model.latent_dim = 16;
  c.model.k_init = 1;
  c.model.k_max = 10;
  c.expansion.threshold = -200.0;
  c.eval.cadence = 0;
  return with_replay(c, ReplayMode::mgr, SnapshotMode::fixed, 1500);
}

ExperimentConfig toy_blobs() {
  ExperimentConfig c;
  c.data.source = DataSource::blobs;
  c.data.blobs = BlobSpec{4, 16, 500, 0.08, 0.9};
  c.data.blob_test_per_class = 250;
  c.data.valid = 0;
  c.stream.mode = StreamMode::sequential;
  c.stream.total_steps = 6000;
  c.model.encoder = {32, 16};
  c.model.decoder = {16};
  c.model.latent_dim = 4;
  c.model.k_init = 1;
  c.model.k_max = 8;
  c.expansion.threshold = -15.0;
  c.expansion.buffer_capacity = 50;
  c.eval.cadence = 0;
  c.eval.knn_subsample = 2000;
  return with_replay(c, ReplayMode::mgr, SnapshotMode::dynamic, 1500);
}

const std::vector<PresetEntry>& presets() {
  static const std::vector<PresetEntry> table = {
      {"mnist-seq-mgr-fixedT", "MNIST sequential, MGR, snapshot every class block (T = 10^4)",
       [] { return with_replay(mnist_main(), ReplayMode::mgr, SnapshotMode::fixed, 10000); }},
      {"mnist-seq-mgr-fixed01T", "MNIST sequential, MGR, snapshot every 0.1T",
       [] { return with_replay(mnist_main(), ReplayMode::mgr, SnapshotMode::fixed, 1000); }},
      {"mnist-seq-mgr-dyn", "MNIST sequential, MGR, snapshot before each expansion",
       [] { return with_replay(mnist_main(), ReplayMode::mgr, SnapshotMode::dynamic, 10000); }},
      {"mnist-seq-smgr-fixedT", "MNIST sequential, SMGR, snapshot every T",
       [] { return with_replay(mnist_main(), ReplayMode::smgr, SnapshotMode::fixed, 10000); }},
      {"mnist-seq-smgr-fixed01T", "MNIST sequential, SMGR, snapshot every 0.1T",
       [] { return with_replay(mnist_main(), ReplayMode::smgr, SnapshotMode::fixed, 1000); }},
      {"mnist-seq-smgr-dyn", "MNIST sequential, SMGR, snapshot before each expansion",
       [] { return with_replay(mnist_main(), ReplayMode::smgr, SnapshotMode::dynamic, 10000); }},
      {"mnist-seq-nomgr", "MNIST sequential, expansion only, no replay",
       [] { return with_replay(mnist_main(), ReplayMode::off, SnapshotMode::dynamic, 10000); }},
      {"mnist-iid", "MNIST i.i.d. clustering benchmark (n_z = 50, K_max = 100)",
       [] {
         ExperimentConfig c = mnist_main();
         c.stream.mode = StreamMode::iid;
         c.model.encoder = {500, 500};
         c.model.decoder = {500};
         c.model.latent_dim = 50;
         c.model.k_max = 100;
         c.learning_rate = 5e-4;
         return with_replay(c, ReplayMode::off, SnapshotMode::dynamic, 10000);
       }},
      {"mnist-drift-fixed", "MNIST continuous drift, MGR, snapshot every T",
       [] {
         ExperimentConfig c = mnist_main();
         c.stream.mode = StreamMode::continuous_drift;
         return with_replay(c, ReplayMode::mgr, SnapshotMode::fixed, 10000);
       }},
      {"mnist-drift-dyn", "MNIST continuous drift, MGR, snapshot before each expansion",
       [] {
         ExperimentConfig c = mnist_main();
         c.stream.mode = StreamMode::continuous_drift;
         return with_replay(c, ReplayMode::mgr, SnapshotMode::dynamic, 10000);
       }},
      {"splitmnist-supervised", "Split-MNIST, supervised, label-driven expansion, MGR per task",
       [] {
         ExperimentConfig c = mnist_main();
         c.mode = TrainingMode::supervised;
         c.stream.mode = StreamMode::split_task;
         c.model.encoder = {400, 400};
         c.model.decoder = {400, 400};
         c.model.latent_dim = 100;
         c.model.k_max = 10;
         c.expansion.enabled = false;
         return with_replay(c, ReplayMode::mgr, SnapshotMode::fixed, 20000);
       }},
      {"knn-dim-sweep", "Random-init 10-NN error versus latent size (set model.latent_dim)",
       [] {
         ExperimentConfig c = mnist_main();
         c.model.latent_dim = 8;
         c.eval.knn = {10};
         c.eval.latents = LatentMode::mean;
         return with_replay(c, ReplayMode::off, SnapshotMode::dynamic, 10000);
       }},
      {"toy-blobs-mgr-dyn", "Four sequential 16-pixel blob classes, expansion + MGR (dynamic)",
       [] { return toy_blobs(); }},
      {"toy-blobs-noreplay", "Four sequential 16-pixel blob classes, expansion, no replay",
       [] { return with_replay(toy_blobs(), ReplayMode::off, SnapshotMode::dynamic, 1500); }},
      {"mnist3-seq-mgr-fixed", "MNIST digits 0-2 sequential, small net, MGR every class block",
       [] { return mnist3(); }},
      {"mnist3-seq-nomgr", "MNIST digits 0-2 sequential, small net, no replay",
       [] { return with_replay(mnist3(), ReplayMode::off, SnapshotMode::fixed, 1500); }},
      {"mnist3-seq-noexp", "MNIST digits 0-2 sequential, small net, MGR, fixed K (no expansion)",
       [] {
         ExperimentConfig c = mnist3();
         c.expansion.enabled = false;
         c.model.k_init = 8;
         return c;
       }},
  };
  return table;
}

const PresetEntry& find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (name == p.name) return p;
  }
  throw Error(ErrorCode::config, "unknown preset '" + name + "'");
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.emplace_back(p.name);
  return names;
}

ExperimentConfig preset(const std::string& name) { return find_preset(name).make(); }

std::string preset_description(const std::string& name) { return find_preset(name).description; }

}  // namespace curlcl
