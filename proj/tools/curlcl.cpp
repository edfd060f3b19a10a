// Command-line runner over the curlcl C API.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "curlcl/curlcl.h"

namespace {

struct Failure {
  int code;
};

void check(curlcl_status status, const char* what) {
  if (status == CURLCL_OK) return;
  std::cerr << "curlcl: " << what << ": " << curlcl_status_name(status) << " error: "
            << curlcl_last_error() << "\n";
  throw Failure{2};
}

struct ConfigFlags {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    auto* cfg = app->add_option("--config", config_path, "Configuration file (key = value lines)");
    auto* pre = app->add_option("--preset", preset, "Named experiment preset (see list-presets)");
    cfg->excludes(pre);
    app->add_option("--seed", seed, "Run seed (run.seed)");
    app->add_option("--out", out, "Output directory (run.out)");
    app->add_option("--set", overrides, "Override a config key, e.g. --set replay.mode=smgr")
        ->type_name("KEY=VALUE");
  }

  curlcl_config* build() const {
    curlcl_config* c = nullptr;
    if (!config_path.empty()) {
      check(curlcl_config_from_file(config_path.c_str(), &c), "reading config");
    } else if (!preset.empty()) {
      check(curlcl_config_from_preset(preset.c_str(), &c), "loading preset");
    } else {
      check(curlcl_config_default(&c), "default config");
    }
    try {
      if (seed) check(curlcl_config_set(c, "run.seed", std::to_string(*seed).c_str()), "--seed");
      if (!out.empty()) check(curlcl_config_set(c, "run.out", out.c_str()), "--out");
      for (const auto& o : overrides) check(curlcl_config_apply(c, o.c_str()), "--set");
    } catch (...) {
      curlcl_config_free(c);
      throw;
    }
    return c;
  }
};

std::string take_text(curlcl_status (*fn)(const curlcl_report*, char*, size_t, size_t*),
                      const curlcl_report* r) {
  size_t needed = 0;
  check(fn(r, nullptr, 0, &needed), "reading report");
  std::string text(needed, '\0');
  check(fn(r, text.data(), text.size(), &needed), "reading report");
  text.resize(needed - 1);
  return text;
}

std::string config_out(const curlcl_config* c) {
  size_t needed = 0;
  check(curlcl_config_serialize(c, nullptr, 0, &needed), "serializing config");
  std::string text(needed, '\0');
  check(curlcl_config_serialize(c, text.data(), text.size(), &needed), "serializing config");
  text.resize(needed - 1);
  const auto at = text.find("run.out = ");
  const auto end = text.find('\n', at);
  return text.substr(at + 10, end - at - 10);
}

void print_report(const curlcl_report* r) {
  double acc = 0.0;
  size_t k = 0;
  check(curlcl_report_cluster_accuracy(r, &acc), "report");
  check(curlcl_report_components(r, &k), "report");
  std::printf("components      %zu\n", k);
  std::printf("cluster_acc     %.4f\n", acc);
  for (size_t kk : {3u, 5u, 10u}) {
    double err = 0.0;
    if (curlcl_report_knn_error(r, kk, &err) == CURLCL_OK) std::printf("knn%-2zu error     %.4f\n", kk, err);
  }
  size_t rows = 0;
  size_t cols = 0;
  check(curlcl_report_confusion(r, &rows, &cols, nullptr), "report");
  std::vector<double> confusion(rows * cols);
  check(curlcl_report_confusion(r, &rows, &cols, confusion.data()), "report");
  std::printf("confusion (class x component)\n");
  for (size_t i = 0; i < rows; ++i) {
    std::printf("  %2zu:", i);
    for (size_t j = 0; j < cols; ++j) std::printf(" %6.0f", confusion[i * cols + j]);
    std::printf("\n");
  }
  double cls = 0.0;
  double task = 0.0;
  if (curlcl_report_incremental(r, &cls, &task) == CURLCL_OK) {
    std::printf("incr_class_acc  %.4f\nincr_task_acc   %.4f\n", cls, task);
  }
}

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curlcl: continual unsupervised representation learning"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "Train a model; writes metrics.csv and final.ckpt");
  train_flags.attach(train);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "Suppress progress lines");

  ConfigFlags eval_flags;
  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (random init when omitted)");
  eval_flags.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");

  std::size_t gc_configs = 100;
  std::uint64_t gc_seed = 1;
  std::string gc_corrupt;
  auto* gradcheck = app.add_subcommand("gradcheck", "Check manual gradients against finite differences");
  gradcheck->add_option("--configs", gc_configs, "Random tiny networks to check");
  gradcheck->add_option("--seed", gc_seed, "Seed");
  gradcheck->add_option("--corrupt", gc_corrupt, "Test hook: perturb gradients of this buffer")
      ->group("");

  ConfigFlags lat_flags;
  std::string lat_ckpt;
  std::string lat_csv;
  auto* latents = app.add_subcommand("export-latents", "Write evaluation latents as CSV");
  lat_flags.attach(latents);
  latents->add_option("--checkpoint", lat_ckpt, "Checkpoint file")->required();
  latents->add_option("--csv", lat_csv, "Output CSV (default OUT/latents.csv)");

  std::string smp_ckpt;
  std::string smp_out = ".";
  std::size_t smp_n = 100;
  std::uint64_t smp_seed = 0;
  auto* samples = app.add_subcommand("export-samples", "Write generated samples (matrix + PGM)");
  samples->add_option("--checkpoint", smp_ckpt, "Checkpoint file")->required();
  samples->add_option("--out", smp_out, "Output directory");
  samples->add_option("-n,--count", smp_n, "Number of samples");
  samples->add_option("--seed", smp_seed, "Seed");

  auto* list = app.add_subcommand("list-presets", "List experiment presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      curlcl_config* c = train_flags.build();
      curlcl_model* model = nullptr;
      curlcl_report* report = nullptr;
      const curlcl_status st = curlcl_train(c, quiet ? nullptr : log_line, nullptr, &model, &report);
      curlcl_config_free(c);
      check(st, "training");
      print_report(report);
      size_t expansions = 0;
      check(curlcl_report_expansions(report, &expansions), "report");
      std::printf("expansions      %zu\n", expansions);
      curlcl_report_free(report);
      curlcl_model_free(model);
    } else if (*eval) {
      curlcl_config* c = eval_flags.build();
      curlcl_model* model = nullptr;
      curlcl_status st;
      if (!eval_ckpt.empty()) {
        st = curlcl_model_load(eval_ckpt.c_str(), &model);
      } else {
        st = curlcl_model_init(c, 0, &model);
      }
      if (st != CURLCL_OK) curlcl_config_free(c);
      check(st, "loading model");
      curlcl_report* report = nullptr;
      st = curlcl_evaluate(model, c, &report);
      const std::string out = st == CURLCL_OK ? config_out(c) : std::string();
      curlcl_model_free(model);
      curlcl_config_free(c);
      check(st, "evaluation");
      print_report(report);
      if (!out.empty()) {
        const std::string row = take_text(curlcl_report_csv_row, report);
        std::error_code ec;
        std::filesystem::create_directories(out, ec);
        const std::string path = out + "/eval.csv";
        std::FILE* f = std::fopen(path.c_str(), "w");
        if (f == nullptr) {
          std::cerr << "curlcl: cannot write " << path << "\n";
          curlcl_report_free(report);
          return 2;
        }
        std::fprintf(f, "step,loss,elbo,cat_kl_mean,n_components,cluster_acc,knn3,knn5,knn10,"
                        "snapshot_taken,expansion_event\n%s\n", row.c_str());
        std::fclose(f);
      }
      curlcl_report_free(report);
    } else if (*gradcheck) {
      curlcl_gradcheck_result* r = nullptr;
      check(curlcl_gradcheck(gc_configs, gc_seed, gc_corrupt.empty() ? nullptr : gc_corrupt.c_str(), &r),
            "gradcheck");
      for (size_t i = 0; i < curlcl_gradcheck_count(r); ++i) {
        const char* loss = nullptr;
        const char* buffer = nullptr;
        double err = 0.0;
        curlcl_gradcheck_entry(r, i, &loss, &buffer, &err);
        std::printf("%-4s %-28s %.3e\n", loss, buffer, err);
      }
      const bool ok = curlcl_gradcheck_passed(r) != 0;
      std::printf("%s (worst %s)\n", ok ? "PASS" : "FAIL", curlcl_gradcheck_worst(r));
      curlcl_gradcheck_free(r);
      return ok ? 0 : 1;
    } else if (*latents) {
      curlcl_config* c = lat_flags.build();
      curlcl_model* model = nullptr;
      curlcl_status st = curlcl_model_load(lat_ckpt.c_str(), &model);
      if (st != CURLCL_OK) curlcl_config_free(c);
      check(st, "loading model");
      std::string path = lat_csv;
      if (path.empty()) {
        const std::string out = config_out(c);
        path = (out.empty() ? std::string(".") : out) + "/latents.csv";
      }
      size_t rows = 0;
      st = curlcl_export_latents(model, c, path.c_str(), &rows);
      curlcl_model_free(model);
      curlcl_config_free(c);
      check(st, "exporting latents");
      std::printf("wrote %zu rows to %s\n", rows, path.c_str());
    } else if (*samples) {
      curlcl_model* model = nullptr;
      check(curlcl_model_load(smp_ckpt.c_str(), &model), "loading model");
      const curlcl_status st = curlcl_export_samples(model, smp_n, smp_seed, smp_out.c_str());
      curlcl_model_free(model);
      check(st, "exporting samples");
      std::printf("wrote %zu samples to %s\n", smp_n, smp_out.c_str());
    } else if (*list) {
      for (size_t i = 0; i < curlcl_preset_count(); ++i) {
        std::printf("%-24s %s\n", curlcl_preset_name(i), curlcl_preset_description(i));
      }
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
