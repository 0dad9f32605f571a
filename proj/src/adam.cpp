// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/adam.hpp"

#include <cmath>
#include <string>

#include "hgdpo/errors.hpp"

namespace hgdpo {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, std::string_view name) {
  if (param.shape() != grad.shape() || state.m.shape() != param.shape()) {
    throw ShapeError("adam_step(" + std::string(name) + "): param " + to_string(param.shape()) + ", grad " +
                     to_string(grad.shape()) + ", state " + to_string(state.m.shape()));
  }
  if (!(state.config.lr > 0.0)) throw ValidationError("adam_step: lr must be positive");
  if (!grad.all_finite()) throw NumericError("adam_step: non-finite gradient for parameter '" + std::string(name) + "'");

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

Adam::Adam(std::vector<ad::Parameter*> params, AdamConfig cfg) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (auto* p : params_) states_.emplace_back(p->value.shape(), cfg);
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i]->value, params_[i]->grad, states_[i], params_[i]->name);
  ++steps_;
}

}  // namespace hgdpo
