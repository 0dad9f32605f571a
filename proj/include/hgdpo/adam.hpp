// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "hgdpo/autodiff.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(const Shape& shape, AdamConfig cfg) : m(shape, 0.0), v(shape, 0.0), config(cfg) {}
};

/// One bias-corrected Adam update of `param` in place. Throws NumericError
/// naming `name` if the gradient has a non-finite entry.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, std::string_view name = "param");

/// Adam over a fixed list of parameters, stepping each from its `grad`.
class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, AdamConfig cfg);

  void zero_grad();
  void step();
  std::uint64_t steps() const { return steps_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<AdamState> states_;
  std::uint64_t steps_ = 0;
};

}  // namespace hgdpo
