#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"
#include "objective.hpp"
#include "stream.hpp"

namespace curlcl {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::filesystem::path mnist_dir(const ExperimentConfig& config) {
  if (!config.data.dir.empty()) return config.data.dir;
  if (const char* env = std::getenv("CURLCL_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  throw Error(ErrorCode::config, "no MNIST directory: set data.dir or CURLCL_DATA_DIR");
}

Dataset maybe_filter(const Dataset& d, const std::vector<std::size_t>& classes) {
  return classes.empty() ? d : filter_classes(d, classes);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

void apply_gradients(ModelParams& params, ModelParams& grads, AdamState& adam) {
  auto p = params.buffers();
  auto g = grads.buffers();
  const std::vector<const Matrix*> gc(g.begin(), g.end());
  adam_step(p, gc, adam);
}

void add_zero_moments(const ModelParams& params, AdamState& adam) {
  if (adam.first_moment.empty()) return;
  const auto buffers = params.buffers();
  for (std::size_t i = params.component_buffer_offset(params.num_components() - 1);
       i < buffers.size(); ++i) {
    adam.append_zero_moments(*buffers[i]);
  }
}

}  // namespace

TrainingData load_training_data(const ExperimentConfig& config) {
  const auto& dc = config.data;
  Dataset train;
  Dataset test;
  switch (dc.source) {
    case DataSource::mnist: {
      const auto dir = mnist_dir(config);
      train = load_mnist(dir, true);
      test = load_mnist(dir, false);
      break;
    }
    case DataSource::blobs: {
      BlobSpec test_spec = dc.blobs;
      test_spec.per_class = dc.blob_test_per_class;
      train = make_blobs(dc.blobs, mix_seed(config.seed, stream_tag::data));
      test = make_blobs(test_spec, mix_seed(mix_seed(config.seed, stream_tag::data), 1));
      test.split = "test";
      break;
    }
    case DataSource::file:
      train = load_dataset(dc.train_file);
      test = load_dataset(dc.test_file);
      test.split = "test";
      break;
  }
  if (train.dim() != test.dim()) {
    throw Error(ErrorCode::shape, "train and test inputs have different dimensions");
  }
  auto [fit, valid] = split_train_valid(train, std::min(dc.valid, train.size() - 1), config.seed);
  TrainingData data;
  data.train = maybe_filter(fit, dc.classes);
  data.eval = maybe_filter(config.eval.split == "valid" ? valid : test, dc.classes);
  if (data.train.size() == 0) throw Error(ErrorCode::config, "training set is empty after filtering");
  return data;
}

EvalConfig eval_config(const ExperimentConfig& config) {
  EvalConfig e;
  e.knn_k = config.eval.knn;
  e.knn_subsample = config.eval.knn_subsample;
  e.latent_mode = config.eval.latents;
  e.seed = mix_seed(config.seed, stream_tag::eval);
  return e;
}

double mean_elbo(const ModelParams& params, const Matrix& x, std::size_t limit,
                 std::uint64_t noise_key) {
  const std::size_t n = std::min(limit, x.rows());
  if (n == 0) throw Error(ErrorCode::argument, "mean_elbo: no rows");
  double total = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t first = 0; first < n; first += kChunk) {
    const std::size_t count = std::min(kChunk, n - first);
    Matrix block(count, x.cols());
    std::copy(x.row(first).data(), x.row(first).data() + count * x.cols(), block.data());
    std::vector<std::uint64_t> ids(count);
    for (std::size_t i = 0; i < count; ++i) ids[i] = first + i;
    ObjectiveRequest req;
    req.x = &block;
    req.noise_ids = ids;
    req.noise_key = noise_key;
    for (double v : evaluate_objective(req, params, nullptr).per_sample) total += v;
  }
  return total / static_cast<double>(n);
}

ModelParams initial_params(const ExperimentConfig& config, std::size_t input_dim) {
  Architecture arch = config.model;
  arch.input_dim = input_dim;
  Rng rng = Rng::derive(config.seed, stream_tag::init);
  return ModelParams::initialize(arch, rng);
}

Matrix export_samples(const ModelParams& params, const UsageCounts& usage, std::size_t n,
                      std::uint64_t seed, const std::filesystem::path& dir) {
  if (n == 0) throw Error(ErrorCode::argument, "export_samples: n must be positive");
  Rng rng = Rng::derive(seed, stream_tag::replay);
  const auto prior = usage.prior(params.num_components());
  const GeneratedBatch batch = generate(params, prior, n, rng);
  std::filesystem::create_directories(dir);
  write_matrix(dir / "samples.mat", batch.x);
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(batch.x.cols()))));
  if (side * side == batch.x.cols()) write_pgm_grid(dir / "samples.pgm", batch.x, 10);
  return batch.x;
}

TrainResult run_train(const ExperimentConfig& config, const LogFn& log) {
  validate_config(config);
  return run_train(config, load_training_data(config), log);
}

TrainResult run_train(const ExperimentConfig& config, const TrainingData& data, const LogFn& log) {
  validate_config(config);
  const bool supervised = config.mode == TrainingMode::supervised;
  const std::filesystem::path out_dir = config.out;
  if (!config.out.empty()) std::filesystem::create_directories(out_dir);
  if (supervised) {
    for (std::size_t y : data.train.labels) {
      if (y >= config.model.k_max) {
        throw Error(ErrorCode::config, "supervised training needs model.k_max > largest label " +
                                           std::to_string(y));
      }
    }
  }

  TrainResult r;
  r.params = initial_params(config, data.train.dim());
  r.adam.config.learning_rate = config.learning_rate;
  const StreamSampler sampler(config.stream, data.train, config.seed);
  PoorSampleBuffer buffer = make_buffer(config.expansion);
  ExpansionState expansion{config.expansion, 0, {}};
  const bool replay_on = config.replay.mode != ReplayMode::off;
  const EvalConfig eval_cfg = eval_config(config);

  std::ostringstream csv;
  csv << kMetricsHeader << '\n';
  std::ostringstream per_class;
  per_class << "step";
  for (std::size_t c = 0; c < data.eval.num_classes; ++c) per_class << ",class_" << c;
  per_class << '\n';
  auto snapshot_now = [&](std::uint64_t step) {
    r.snapshot = take_snapshot(r.params, r.usage, step);
    ++r.snapshots_taken;
    if (!config.out.empty()) {
      save_checkpoint(out_dir / "snapshot.ckpt",
                      Checkpoint{r.snapshot->params, std::nullopt, r.snapshot->usage, step, true});
    }
  };
  auto event_row = [&](std::uint64_t step, double loss, const ExpansionEvent& ev, bool snap) {
    csv << step << ',' << fmt(loss) << ",,," << ev.new_k << ",,,,," << (snap ? 1 : 0) << ','
        << ev.parent << "->" << ev.new_k << '\n';
  };

  ModelParams grads;
  const std::uint64_t total = config.stream.total_steps;
  for (std::uint64_t step = 0; step < total; ++step) {
    const bool generated = is_generated_step(config.replay, r.snapshot.has_value(), step);
    const std::uint64_t completed = step + 1;
    bool snapshot_taken = false;

    Matrix x;
    std::vector<std::size_t> labels;
    if (generated) {
      Rng rng = Rng::derive(config.seed, stream_tag::replay, step);
      ReplayBatch rb = replay_step(*r.snapshot, config.stream.batch_size, rng,
                                   supervised || config.replay.mode == ReplayMode::smgr);
      x = std::move(rb.x);
      labels = std::move(rb.labels);
    } else {
      Batch batch = *sampler.next_batch(step);
      x = std::move(batch.x);
      if (supervised) {
        labels = std::move(batch.labels);
        // Label-driven expansion: a label beyond the active components adds
        // a component copied from the one the new samples already favour.
        const std::size_t top = *std::max_element(labels.begin(), labels.end());
        while (top >= r.params.num_components()) {
          if (replay_on && config.replay.snapshot == SnapshotMode::dynamic) {
            snapshot_now(step);
            snapshot_taken = true;
          }
          std::vector<std::size_t> rows;
          for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= r.params.num_components()) rows.push_back(i);
          }
          Matrix xs(rows.size(), x.cols());
          for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), xs.row(i).begin());
          }
          const std::size_t parent =
              select_parent(infer_task_posterior(encode_shared(xs, r.params), r.params));
          r.params.add_component_copy(parent);
          add_zero_moments(r.params, r.adam);
          const ExpansionEvent ev{step, parent, r.params.num_components()};
          r.expansions.push_back(ev);
          event_row(step, 0.0, ev, snapshot_taken);
        }
      }
    }

    ObjectiveRequest req;
    req.x = &x;
    req.labels = labels;
    req.noise_key = Rng::derive(config.seed, stream_tag::reparam, step).next_u64();
    const BatchObjective obj = evaluate_objective(req, r.params, &grads);
    if (!std::isfinite(obj.loss)) {
      throw Error(ErrorCode::numeric, "non-finite loss at step " + std::to_string(step));
    }
    apply_gradients(r.params, grads, r.adam);
    expansion.steps_since_last_expansion += 1;

    if (!generated) {
      r.usage.update(obj.posterior);
      if (!supervised && config.expansion.enabled) screen_batch(x, obj.elbo_total, buffer);
    }

    if (!supervised && config.expansion.enabled) {
      if (should_expand(buffer, expansion, r.params)) {
        if (replay_on && config.replay.snapshot == SnapshotMode::dynamic) {
          snapshot_now(completed);
          snapshot_taken = true;
        }
        if (config.export_buffers && !config.out.empty()) {
          const Matrix b = buffer.to_matrix();
          const std::string stem = "buffer_" + std::to_string(completed);
          write_matrix(out_dir / (stem + ".mat"), b);
          const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(b.cols()))));
          if (side * side == b.cols()) write_pgm_grid(out_dir / (stem + ".pgm"), b, 10);
        }
        Rng rng = Rng::derive(config.seed, stream_tag::expansion, step);
        const ExpansionEvent ev = expand(r.params, r.adam, buffer, expansion, rng, completed);
        r.expansions.push_back(ev);
        event_row(completed, obj.loss, ev, snapshot_taken);
        if (log) {
          log("step " + std::to_string(completed) + ": expanded " + std::to_string(ev.parent) +
              " -> K=" + std::to_string(ev.new_k));
        }
      } else if (buffer.full() && r.params.num_components() >= r.params.capacity()) {
        buffer.clear();
      }
    }

    if (fixed_snapshot_due(config.replay, completed)) {
      snapshot_now(completed);
      snapshot_taken = true;
    }

    const bool last = completed == total;
    const bool cadence = config.eval.cadence > 0 && completed % config.eval.cadence == 0;
    if (cadence || last) {
      const EvalReport report = evaluate(r.params, data.eval, data.train, eval_cfg);
      const double held_out = mean_elbo(r.params, data.eval.images, config.eval.elbo_samples,
                                        mix_seed(eval_cfg.seed, completed));
      auto knn = [&](std::size_t k) {
        const auto it = report.knn_error.find(k);
        return it == report.knn_error.end() ? std::string() : fmt(it->second);
      };
      csv << completed << ',' << fmt(obj.loss) << ',' << fmt(held_out) << ','
          << fmt(obj.mean_cat_kl) << ',' << r.params.num_components() << ','
          << fmt(report.cluster_accuracy) << ',' << knn(3) << ',' << knn(5) << ',' << knn(10)
          << ',' << (snapshot_taken ? 1 : 0) << ",\n";
      per_class << completed;
      for (double a : report.per_class_accuracy) per_class << ',' << fmt(a);
      per_class << '\n';
      if (log) {
        std::string line = "step " + std::to_string(completed) + " loss " + fmt(obj.loss) +
                           " K " + std::to_string(r.params.num_components()) + " cluster_acc " +
                           fmt(report.cluster_accuracy) + " per-class";
        char buf[16];
        for (double a : report.per_class_accuracy) {
          std::snprintf(buf, sizeof(buf), " %.2f", a);
          line += buf;
        }
        log(line);
      }
      if (last) r.final_report = report;
    }
    r.final_report.step = completed;
  }
  r.steps = total;
  r.metrics_csv = csv.str();
  r.per_class_csv = per_class.str();

  if (supervised) {
    const EncodedLatents enc =
        encode_eval_latents(data.eval.images, r.params, eval_cfg.seed, LatentMode::mean);
    Matrix q(enc.posterior.rows(), config.model.k_max);
    for (std::size_t i = 0; i < q.rows(); ++i) {
      for (std::size_t k = 0; k < enc.posterior.cols(); ++k) q(i, k) = enc.posterior(i, k);
    }
    r.incremental_class_accuracy = incremental_class_accuracy(q, data.eval.labels);
    r.incremental_task_accuracy =
        incremental_task_accuracy(q, data.eval.labels, config.stream.task_pairs);
  }

  if (!config.out.empty()) {
    write_text(out_dir / "metrics.csv", r.metrics_csv);
    write_text(out_dir / "per_class.csv", r.per_class_csv);
    save_checkpoint(out_dir / "final.ckpt", Checkpoint{r.params, r.adam, r.usage, r.steps, false});
  }
  return r;
}

}  // namespace curlcl
