// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "hgdpo/adam.hpp"
#include "hgdpo/errors.hpp"

using hgdpo::Tensor;

TEST_CASE("first adam step moves each entry by lr against the gradient sign") {
  Tensor p({3}, std::vector<double>{1.0, -2.0, 0.5});
  Tensor g({3}, std::vector<double>{0.3, -4.0, 1e-3});
  hgdpo::AdamState st(p.shape(), {0.1, 0.9, 0.999, 1e-8});
  hgdpo::adam_step(p, g, st);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.4).epsilon(1e-4));
  CHECK(st.step == 1);
}

TEST_CASE("adam matches a hand-rolled reference over several steps") {
  Tensor p({2}, std::vector<double>{0.2, -0.7});
  hgdpo::AdamConfig cfg{0.01, 0.8, 0.99, 1e-6};
  hgdpo::AdamState st(p.shape(), cfg);
  double x[2] = {0.2, -0.7}, m[2] = {}, v[2] = {};
  for (int s = 1; s <= 5; ++s) {
    Tensor g({2}, std::vector<double>{std::sin(s * 1.0), std::cos(s * 2.0)});
    hgdpo::adam_step(p, g, st);
    for (int i = 0; i < 2; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, s));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, s));
      x[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  CHECK(p[0] == doctest::Approx(x[0]).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(x[1]).epsilon(1e-12));
}

TEST_CASE("non-finite gradients are rejected") {
  Tensor p({1}, 0.0);
  Tensor g({1}, std::nan(""));
  hgdpo::AdamState st(p.shape(), {});
  CHECK_THROWS_AS(hgdpo::adam_step(p, g, st, "w"), hgdpo::NumericError);
}

TEST_CASE("Adam minimizes a quadratic") {
  hgdpo::ad::Parameter w("w", Tensor({4}, 3.0));
  hgdpo::Adam opt({&w}, {0.05});
  for (int s = 0; s < 500; ++s) {
    opt.zero_grad();
    for (std::size_t i = 0; i < 4; ++i) w.grad[i] = 2.0 * (w.value[i] - static_cast<double>(i));
    opt.step();
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(w.value[i] - static_cast<double>(i)) < 1e-2);
  CHECK(opt.steps() == 500);
}
