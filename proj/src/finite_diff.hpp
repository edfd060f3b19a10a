#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace curlcl {

// Central-difference gradient of f at x: (f(x+h·e_i) - f(x-h·e_i)) / 2h per
// coordinate. f is called with a perturbed copy of x.
template <typename F>
std::vector<double> finite_difference_grad(F&& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::argument, "finite difference step must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    point[i] = x[i] + h;
    const double up = f(std::span<const double>(point));
    point[i] = x[i] - h;
    const double down = f(std::span<const double>(point));
    point[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::numeric,
                  "non-finite function value at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace curlcl
