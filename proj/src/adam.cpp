#include "adam.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace curlcl {

void AdamState::append_zero_moments(const Matrix& like) {
  first_moment.emplace_back(like.rows(), like.cols());
  second_moment.emplace_back(like.rows(), like.cols());
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::shape, "adam_step: " + std::to_string(params.size()) +
                                      " parameter buffers but " +
                                      std::to_string(grads.size()) + " gradient buffers");
  }
  if (state.first_moment.empty() && state.step == 0) {
    for (const Matrix* p : params) state.append_zero_moments(*p);
  }
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw Error(ErrorCode::shape, "adam_step: accumulator count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i]) ||
        !params[i]->same_shape(state.second_moment[i])) {
      throw Error(ErrorCode::shape, "adam_step: buffer " + std::to_string(i) + " shape " +
                                        params[i]->shape_string() + " vs gradient " +
                                        grads[i]->shape_string());
    }
  }

  state.step += 1;
  const AdamConfig& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i]->values();
    if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
    using Vec = Eigen::Map<Eigen::ArrayXd>;
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::Map<const Eigen::ArrayXd> grad(g.data(), n);
    Vec p(params[i]->data(), n);
    Vec m(state.first_moment[i].data(), n);
    Vec v(state.second_moment[i].data(), n);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
    p -= cfg.learning_rate * (m / correction1) / ((v / correction2).sqrt() + cfg.epsilon);
  }
}

}  // namespace curlcl
