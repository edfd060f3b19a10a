#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "finite_diff.hpp"
#include "objective.hpp"

namespace curlcl {

namespace {

std::vector<std::size_t> random_layers(Rng& rng) {
  std::vector<std::size_t> sizes(1 + rng.below(2));
  for (auto& s : sizes) s = 2 + rng.below(5);
  return sizes;
}

// Randomizes every buffer so that biases and prior rows are not at their
// (symmetric) initial values.
void randomize(ModelParams& params, Rng& rng) {
  for (Matrix* b : params.buffers()) {
    for (double& v : b->values()) v = rng.uniform() * 1.6 - 0.8;
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  std::map<std::pair<std::string, std::string>, double> worst;
  Rng rng = Rng::derive(options.seed, stream_tag::init);

  for (std::size_t c = 0; c < options.configurations; ++c) {
    Architecture arch;
    arch.input_dim = options.input_dim;
    arch.latent_dim = options.latent_dim;
    arch.encoder = random_layers(rng);
    arch.decoder = random_layers(rng);
    arch.k_init = options.components;
    arch.k_max = options.components;
    ModelParams params = ModelParams::initialize(arch, rng);
    randomize(params, rng);

    Matrix x(options.batch, options.input_dim);
    for (double& v : x.values()) v = rng.uniform();
    std::vector<std::size_t> labels(options.batch);
    for (auto& y : labels) y = rng.below(options.components);
    const std::uint64_t key = rng.next_u64();

    for (const bool supervised : {false, true}) {
      ObjectiveRequest req;
      req.x = &x;
      req.noise_key = key;
      if (supervised) req.labels = labels;

      ModelParams analytic;
      evaluate_objective(req, params, &analytic);
      const auto names = params.buffer_names();
      auto grad_buffers = analytic.buffers();
      ModelParams probe = params;
      auto probe_buffers = probe.buffers();

      for (std::size_t i = 0; i < names.size(); ++i) {
        Matrix& target = *probe_buffers[i];
        const Matrix original = target;
        auto loss_at = [&](std::span<const double> v) {
          std::copy(v.begin(), v.end(), target.values().begin());
          return evaluate_objective(req, probe, nullptr).loss;
        };
        const auto numeric = finite_difference_grad(loss_at, original.values(), options.step);
        target = original;

        const bool corrupt =
            !options.corrupt_buffer.empty() && ends_with(names[i], options.corrupt_buffer);
        double max_err = 0.0;
        const auto g = grad_buffers[i]->values();
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double a = g[j] + (corrupt ? 1e-2 : 0.0);
          const double err = std::abs(a - numeric[j]) / std::max(1.0, std::abs(a));
          max_err = std::max(max_err, err);
        }
        // Collapse per-component names so the report lists each buffer kind once.
        std::string kind = names[i];
        if (kind.rfind("component.", 0) == 0) kind = "component.*" + kind.substr(kind.find('.', 10));
        auto& slot = worst[{supervised ? "supervised" : "marginal", kind}];
        slot = std::max(slot, max_err);
        double& path_max = supervised ? report.max_error_supervised : report.max_error_marginal;
        if (max_err > path_max) path_max = max_err;
      }
    }
  }

  double overall = -1.0;
  for (const auto& [key, err] : worst) {
    report.buffers.push_back({key.first, key.second, err});
    if (err > overall) {
      overall = err;
      report.worst_buffer = key.first + ":" + key.second;
    }
  }
  report.passed = report.max_error_marginal < options.tolerance &&
                  report.max_error_supervised < options.tolerance;
  return report;
}

}  // namespace curlcl
