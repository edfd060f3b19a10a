#include "curlcl/curlcl.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <optional>
#include <sstream>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "trainer.hpp"

struct curlcl_config {
  curlcl::ExperimentConfig value;
};

struct curlcl_model {
  curlcl::ModelParams params;
  std::optional<curlcl::AdamState> adam;
  curlcl::UsageCounts usage;
  std::uint64_t step = 0;
};

struct curlcl_report {
  curlcl::EvalReport report;
  std::optional<double> incremental_class;
  std::optional<double> incremental_task;
  std::optional<std::size_t> expansions;
  std::optional<std::string> metrics_csv;
};

struct curlcl_gradcheck_result {
  curlcl::GradcheckReport report;
};

namespace {

thread_local std::string last_error;

template <typename F>
curlcl_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return CURLCL_OK;
  } catch (const curlcl::Error& e) {
    last_error = e.what();
    return static_cast<curlcl_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return CURLCL_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw curlcl::Error(curlcl::ErrorCode::argument, std::string(what) + " is NULL");
}

void copy_out(const std::string& text, char* buf, std::size_t capacity, std::size_t* needed) {
  if (needed != nullptr) *needed = text.size() + 1;
  if (buf == nullptr) return;
  if (capacity < text.size() + 1) {
    throw curlcl::Error(curlcl::ErrorCode::capacity,
                        "buffer of " + std::to_string(capacity) + " bytes, need " +
                            std::to_string(text.size() + 1));
  }
  std::memcpy(buf, text.c_str(), text.size() + 1);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

extern "C" {

const char* curlcl_version(void) { return "1.0.0"; }

const char* curlcl_last_error(void) { return last_error.c_str(); }

const char* curlcl_status_name(curlcl_status status) {
  if (status == CURLCL_OK) return "ok";
  if (status == CURLCL_ERR_INTERNAL) return "internal";
  return curlcl::error_code_name(static_cast<curlcl::ErrorCode>(static_cast<int>(status)));
}

size_t curlcl_preset_count(void) { return curlcl::preset_names().size(); }

const char* curlcl_preset_name(size_t index) {
  static const auto names = curlcl::preset_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

const char* curlcl_preset_description(size_t index) {
  static const auto descriptions = [] {
    std::vector<std::string> out;
    for (const auto& n : curlcl::preset_names()) out.push_back(curlcl::preset_description(n));
    return out;
  }();
  return index < descriptions.size() ? descriptions[index].c_str() : nullptr;
}

curlcl_status curlcl_config_default(curlcl_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new curlcl_config{};
  });
}

curlcl_status curlcl_config_from_preset(const char* name, curlcl_config** out) {
  return guard([&] {
    require(name, "name");
    require(out, "out");
    *out = new curlcl_config{curlcl::preset(name)};
  });
}

curlcl_status curlcl_config_from_file(const char* path, curlcl_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    std::ifstream in(path);
    if (!in) throw curlcl::Error(curlcl::ErrorCode::io, std::string("cannot open '") + path + "'");
    std::stringstream text;
    text << in.rdbuf();
    *out = new curlcl_config{curlcl::parse_config(text.str())};
  });
}

curlcl_status curlcl_config_parse(const char* text, curlcl_config** out) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    *out = new curlcl_config{curlcl::parse_config(text)};
  });
}

curlcl_status curlcl_config_set(curlcl_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    curlcl::set_config_value(config->value, key, value);
  });
}

curlcl_status curlcl_config_apply(curlcl_config* config, const char* assignment) {
  return guard([&] {
    require(config, "config");
    require(assignment, "assignment");
    curlcl::apply_override(config->value, assignment);
  });
}

curlcl_status curlcl_config_serialize(const curlcl_config* config, char* buf, size_t capacity,
                                      size_t* needed) {
  return guard([&] {
    require(config, "config");
    copy_out(curlcl::serialize_config(config->value), buf, capacity, needed);
  });
}

void curlcl_config_free(curlcl_config* config) { delete config; }

curlcl_status curlcl_train(const curlcl_config* config, curlcl_log_fn log, void* user,
                           curlcl_model** model, curlcl_report** report) {
  return guard([&] {
    require(config, "config");
    curlcl::LogFn fn;
    if (log != nullptr) fn = [log, user](const std::string& line) { log(line.c_str(), user); };
    curlcl::TrainResult r = curlcl::run_train(config->value, fn);
    if (report != nullptr) {
      *report = new curlcl_report{r.final_report, r.incremental_class_accuracy,
                                  r.incremental_task_accuracy, r.expansions.size(),
                                  std::move(r.metrics_csv)};
    }
    if (model != nullptr) {
      *model = new curlcl_model{std::move(r.params), std::move(r.adam), std::move(r.usage), r.steps};
    }
  });
}

curlcl_status curlcl_model_init(const curlcl_config* config, size_t input_dim, curlcl_model** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    if (input_dim == 0) input_dim = curlcl::load_training_data(config->value).train.dim();
    *out = new curlcl_model{curlcl::initial_params(config->value, input_dim), std::nullopt, {}, 0};
  });
}

curlcl_status curlcl_model_load(const char* path, curlcl_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    curlcl::Checkpoint c = curlcl::load_checkpoint(path);
    *out = new curlcl_model{std::move(c.params), std::move(c.adam), std::move(c.usage), c.step};
  });
}

curlcl_status curlcl_model_save(const curlcl_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    curlcl::save_checkpoint(path, curlcl::Checkpoint{model->params, model->adam, model->usage,
                                                     model->step, false});
  });
}

curlcl_status curlcl_model_info(const curlcl_model* model, size_t* components, size_t* capacity,
                                size_t* latent_dim, size_t* input_dim) {
  return guard([&] {
    require(model, "model");
    if (components) *components = model->params.num_components();
    if (capacity) *capacity = model->params.capacity();
    if (latent_dim) *latent_dim = model->params.latent_dim();
    if (input_dim) *input_dim = model->params.input_dim();
  });
}

void curlcl_model_free(curlcl_model* model) { delete model; }

curlcl_status curlcl_evaluate(const curlcl_model* model, const curlcl_config* config,
                              curlcl_report** out) {
  return guard([&] {
    require(model, "model");
    require(config, "config");
    require(out, "out");
    const curlcl::TrainingData data = curlcl::load_training_data(config->value);
    if (data.eval.dim() != model->params.input_dim()) {
      throw curlcl::Error(curlcl::ErrorCode::shape, "model input dimension does not match the data");
    }
    curlcl::EvalReport r =
        curlcl::evaluate(model->params, data.eval, data.train, curlcl::eval_config(config->value));
    r.step = model->step;
    *out = new curlcl_report{std::move(r), std::nullopt, std::nullopt, std::nullopt, std::nullopt};
  });
}

curlcl_status curlcl_report_step(const curlcl_report* report, uint64_t* step) {
  return guard([&] {
    require(report, "report");
    require(step, "step");
    *step = report->report.step;
  });
}

curlcl_status curlcl_report_cluster_accuracy(const curlcl_report* report, double* accuracy) {
  return guard([&] {
    require(report, "report");
    require(accuracy, "accuracy");
    *accuracy = report->report.cluster_accuracy;
  });
}

curlcl_status curlcl_report_knn_error(const curlcl_report* report, size_t k, double* error) {
  return guard([&] {
    require(report, "report");
    require(error, "error");
    const auto it = report->report.knn_error.find(k);
    if (it == report->report.knn_error.end()) {
      throw curlcl::Error(curlcl::ErrorCode::argument, "k=" + std::to_string(k) + " was not evaluated");
    }
    *error = it->second;
  });
}

curlcl_status curlcl_report_components(const curlcl_report* report, size_t* components) {
  return guard([&] {
    require(report, "report");
    require(components, "components");
    *components = report->report.n_active_components;
  });
}

curlcl_status curlcl_report_confusion(const curlcl_report* report, size_t* rows, size_t* cols,
                                      double* values) {
  return guard([&] {
    require(report, "report");
    const curlcl::Matrix& m = report->report.confusion;
    if (rows) *rows = m.rows();
    if (cols) *cols = m.cols();
    if (values) std::memcpy(values, m.data(), m.size() * sizeof(double));
  });
}

curlcl_status curlcl_report_incremental(const curlcl_report* report, double* class_accuracy,
                                        double* task_accuracy) {
  return guard([&] {
    require(report, "report");
    if (!report->incremental_class || !report->incremental_task) {
      throw curlcl::Error(curlcl::ErrorCode::state, "report has no incremental accuracies");
    }
    if (class_accuracy) *class_accuracy = *report->incremental_class;
    if (task_accuracy) *task_accuracy = *report->incremental_task;
  });
}

curlcl_status curlcl_report_expansions(const curlcl_report* report, size_t* count) {
  return guard([&] {
    require(report, "report");
    require(count, "count");
    if (!report->expansions) throw curlcl::Error(curlcl::ErrorCode::state, "not a training report");
    *count = *report->expansions;
  });
}

curlcl_status curlcl_report_metrics_csv(const curlcl_report* report, char* buf, size_t capacity,
                                        size_t* needed) {
  return guard([&] {
    require(report, "report");
    if (!report->metrics_csv) throw curlcl::Error(curlcl::ErrorCode::state, "not a training report");
    copy_out(*report->metrics_csv, buf, capacity, needed);
  });
}

curlcl_status curlcl_report_csv_row(const curlcl_report* report, char* buf, size_t capacity,
                                    size_t* needed) {
  return guard([&] {
    require(report, "report");
    const auto& r = report->report;
    auto knn = [&](std::size_t k) {
      const auto it = r.knn_error.find(k);
      return it == r.knn_error.end() ? std::string() : fmt(it->second);
    };
    const std::string row = std::to_string(r.step) + ",,,," + std::to_string(r.n_active_components) +
                            "," + fmt(r.cluster_accuracy) + "," + knn(3) + "," + knn(5) + "," +
                            knn(10) + ",0,";
    copy_out(row, buf, capacity, needed);
  });
}

void curlcl_report_free(curlcl_report* report) { delete report; }

curlcl_status curlcl_export_latents(const curlcl_model* model, const curlcl_config* config,
                                    const char* csv_path, size_t* rows_written) {
  return guard([&] {
    require(model, "model");
    require(config, "config");
    require(csv_path, "csv_path");
    const curlcl::TrainingData data = curlcl::load_training_data(config->value);
    if (data.eval.size() == 0) throw curlcl::Error(curlcl::ErrorCode::argument, "empty evaluation set");
    const curlcl::EvalConfig e = curlcl::eval_config(config->value);
    const auto latents = curlcl::encode_eval_latents(data.eval.images, model->params, e.seed, e.latent_mode);
    curlcl::write_latents_csv(csv_path, latents, data.eval.labels);
    if (rows_written) *rows_written = latents.z.rows();
  });
}

curlcl_status curlcl_export_samples(const curlcl_model* model, size_t n, uint64_t seed,
                                    const char* directory) {
  return guard([&] {
    require(model, "model");
    require(directory, "directory");
    curlcl::export_samples(model->params, model->usage, n, seed, directory);
  });
}

curlcl_status curlcl_gradcheck(size_t configurations, uint64_t seed, const char* corrupt_buffer,
                               curlcl_gradcheck_result** out) {
  return guard([&] {
    require(out, "out");
    curlcl::GradcheckOptions options;
    options.configurations = configurations;
    options.seed = seed;
    if (corrupt_buffer != nullptr) options.corrupt_buffer = corrupt_buffer;
    *out = new curlcl_gradcheck_result{curlcl::run_gradcheck(options)};
  });
}

int curlcl_gradcheck_passed(const curlcl_gradcheck_result* result) {
  return result != nullptr && result->report.passed ? 1 : 0;
}

size_t curlcl_gradcheck_count(const curlcl_gradcheck_result* result) {
  return result == nullptr ? 0 : result->report.buffers.size();
}

curlcl_status curlcl_gradcheck_entry(const curlcl_gradcheck_result* result, size_t index,
                                     const char** loss, const char** buffer, double* max_error) {
  return guard([&] {
    require(result, "result");
    if (index >= result->report.buffers.size()) {
      throw curlcl::Error(curlcl::ErrorCode::index, "gradcheck entry " + std::to_string(index));
    }
    const auto& b = result->report.buffers[index];
    if (loss) *loss = b.loss.c_str();
    if (buffer) *buffer = b.buffer.c_str();
    if (max_error) *max_error = b.max_relative_error;
  });
}

const char* curlcl_gradcheck_worst(const curlcl_gradcheck_result* result) {
  return result == nullptr ? "" : result->report.worst_buffer.c_str();
}

void curlcl_gradcheck_free(curlcl_gradcheck_result* result) { delete result; }

}  // extern "C"
