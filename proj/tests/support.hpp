// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the unit and acceptance tests.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hgdpo/autodiff.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/rng.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo::testing {

inline Tensor random_tensor(const Shape& shape, RngStream& rng, double scale = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

inline Tensor uniform_tensor(const Shape& shape, RngStream& rng, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

/// Denoiser small enough for finite differences: 2x2x2 images, width 2.
inline DenoiserConfig tiny_denoiser(std::size_t timesteps = 10) {
  DenoiserConfig c;
  c.channels = 2;
  c.height = 2;
  c.width = 2;
  c.hidden = 2;
  c.blocks = 2;
  c.time_dim = 2;
  c.cond_dim = 2;
  c.timesteps = timesteps;
  return c;
}

/// Largest relative error between analytic gradients (already accumulated
/// into each param.grad) and central differences of f, with a floor on the
/// denominator so near-zero entries are judged absolutely.
inline double fd_max_rel_error(const std::vector<ad::Parameter*>& params, const std::function<double()>& f,
                               double h = 1e-6, double floor = 1e-6) {
  double worst = 0.0;
  for (ad::Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = f();
      p->value[i] = orig - h;
      const double down = f();
      p->value[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = p->grad[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

inline std::size_t parameter_count(const std::vector<ad::Parameter*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->value.size();
  return n;
}

}  // namespace hgdpo::testing
