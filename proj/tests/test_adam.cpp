#include <doctest.h>

#include <cmath>
#include <vector>

#include "adam.hpp"
#include "error.hpp"
#include "rng.hpp"

using namespace curlcl;

namespace {

// Scalar Adam with bias correction, written out independently.
struct ScalarAdam {
  double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double w, double g) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, t));
    const double vhat = v / (1.0 - std::pow(b2, t));
    return w - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

void step(Matrix& p, const Matrix& g, AdamState& s) {
  Matrix* ps[1] = {&p};
  const Matrix* gs[1] = {&g};
  adam_step(ps, gs, s);
}

}  // namespace

TEST_CASE("adam: first step of a scalar") {
  Matrix w(1, 1, 0.0);
  AdamState s;
  step(w, Matrix(1, 1, 1.0), s);
  CHECK(w(0, 0) == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(s.step == 1);
}

TEST_CASE("adam: matches the scalar recurrence") {
  ScalarAdam ref;
  double w_ref = 0.3;
  Matrix w(1, 1, 0.3);
  AdamState s;
  for (int i = 0; i < 2; ++i) {
    w_ref = ref.step(w_ref, 1.0);
    step(w, Matrix(1, 1, 1.0), s);
    CHECK(w(0, 0) == doctest::Approx(w_ref).epsilon(1e-15));
  }
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double g = rng.normal();
    w_ref = ref.step(w_ref, g);
    step(w, Matrix(1, 1, g), s);
  }
  CHECK(w(0, 0) == doctest::Approx(w_ref).epsilon(1e-13));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Rng rng(8);
  Matrix w(3, 4);
  for (double& v : w.values()) v = rng.normal();
  AdamState s;
  step(w, Matrix(3, 4, 0.5), s);
  const Matrix before = w;
  const Matrix m = s.first_moment[0];
  for (int i = 0; i < 5; ++i) step(w, Matrix(3, 4, 0.0), s);
  CHECK(w == before);
  CHECK(s.first_moment[0] == m);
  CHECK(s.step == 6);
}

TEST_CASE("adam: appended buffers start from zero moments") {
  Matrix a(1, 2, 1.0), b(1, 2, 1.0);
  AdamState s;
  step(a, Matrix(1, 2, 1.0), s);
  s.append_zero_moments(b);
  Matrix* ps[2] = {&a, &b};
  const Matrix ga(1, 2, 1.0), gb(1, 2, 2.0);
  const Matrix* gs[2] = {&ga, &gb};
  adam_step(ps, gs, s);
  CHECK(s.first_moment[1](0, 0) == doctest::Approx(0.2));
  CHECK(s.second_moment[1](0, 0) == doctest::Approx(0.004));
}

TEST_CASE("adam: shape errors") {
  Matrix w(2, 2);
  AdamState s;
  CHECK_THROWS_AS(step(w, Matrix(2, 3, 1.0), s), Error);
  Matrix* ps[1] = {&w};
  CHECK_THROWS_AS(adam_step(ps, std::span<const Matrix* const>{}, s), Error);
}
