// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hgdpo/errors.hpp"
#include "hgdpo/losses.hpp"

namespace hgdpo {

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_min, double beta_max) {
  if (timesteps < 2) throw ValidationError("NoiseSchedule: need at least 2 timesteps");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw ValidationError("NoiseSchedule: require 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> b(static_cast<std::size_t>(timesteps));
  for (int t = 0; t < timesteps; ++t) {
    b[static_cast<std::size_t>(t)] = beta_min + (beta_max - beta_min) * static_cast<double>(t) / (timesteps - 1);
  }
  return from_betas(std::move(b));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ValidationError("NoiseSchedule: empty beta table");
  NoiseSchedule s;
  double prod = 1.0;
  for (std::size_t t = 0; t < betas.size(); ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw ValidationError("NoiseSchedule: beta outside (0, 1)");
    if (t > 0 && betas[t] < betas[t - 1]) throw ValidationError("NoiseSchedule: beta must be non-decreasing");
    s.alpha.push_back(1.0 - betas[t]);
    prod *= 1.0 - betas[t];
    s.alpha_bar.push_back(prod);
  }
  s.beta = std::move(betas);
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& sched, const char* op) {
  if (t < 0 || t >= sched.timesteps()) {
    throw ValidationError(std::string(op) + ": timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(sched.timesteps()) + ")");
  }
}

void check_finite(const Tensor& x, int t, const char* op) {
  if (!x.all_finite()) throw NumericError(std::string(op) + ": non-finite latent at timestep " + std::to_string(t));
}

// alpha_bar of the index a step lands on; -1 means clean data.
double alpha_bar_at(const NoiseSchedule& sched, int t) { return t < 0 ? 1.0 : sched.alpha_bar[static_cast<std::size_t>(t)]; }

// One reverse step from index t to index prev (< t) for all rows.
void reverse_step(Tensor& x, const Tensor& eps_hat, int t, int prev, std::span<RngStream> rngs, const SamplerConfig& cfg,
                  const NoiseSchedule& sched) {
  const double ab_t = alpha_bar_at(sched, t);
  const double ab_prev = alpha_bar_at(sched, prev);
  const std::size_t rows = x.dim(0), width = x.row_size();
  if (cfg.kind == SamplerKind::kAncestral) {
    // With stride 1 this is the textbook step: alpha_eff = alpha[t].
    const double alpha_eff = prev == t - 1 ? sched.alpha[static_cast<std::size_t>(t)] : ab_t / ab_prev;
    const double beta_eff = 1.0 - alpha_eff;
    const double c_eps = beta_eff / std::sqrt(1.0 - ab_t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_eff);
    const double sigma = prev >= 0 ? std::sqrt(beta_eff) : 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      auto xr = x.row(r);
      auto er = eps_hat.row(r);
      for (std::size_t j = 0; j < width; ++j) {
        xr[j] = inv_sqrt_alpha * (xr[j] - c_eps * er[j]);
        if (sigma > 0.0) xr[j] += sigma * rngs[r].normal();
      }
    }
  } else {
    const double sigma = prev >= 0 ? cfg.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev)
                                   : 0.0;
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    for (std::size_t r = 0; r < rows; ++r) {
      auto xr = x.row(r);
      auto er = eps_hat.row(r);
      for (std::size_t j = 0; j < width; ++j) {
        const double x0 = (xr[j] - std::sqrt(1.0 - ab_t) * er[j]) / std::sqrt(ab_t);
        xr[j] = std::sqrt(ab_prev) * x0 + dir * er[j];
        if (sigma > 0.0) xr[j] += sigma * rngs[r].normal();
      }
    }
  }
}

// Runs the reverse chain over the given descending timestep indices.
void run_chain(const NoiseModel& model, Tensor& x, std::span<const int> prompts, std::span<RngStream> rngs,
               const std::vector<int>& steps, const SamplerConfig& cfg, const NoiseSchedule& sched, const char* op) {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int prev = i + 1 < steps.size() ? steps[i + 1] : -1;
    Tensor eps_hat = cfg_predict(model, x, t, prompts, cfg.guidance);
    reverse_step(x, eps_hat, t, prev, rngs, cfg, sched);
    check_finite(x, t, op);
  }
}

void clamp_unit(Tensor& x) {
  for (auto& v : x.data()) v = std::clamp(v, -1.0, 1.0);
}

Tensor initial_noise(std::size_t rows, const Shape& image_shape, std::span<RngStream> rngs) {
  Shape s{rows};
  s.insert(s.end(), image_shape.begin(), image_shape.end());
  Tensor x(s);
  for (std::size_t r = 0; r < rows; ++r) rngs[r].fill_normal(x.row(r));
  return x;
}

void check_batch(std::span<const int> prompts, std::span<RngStream> rngs, const char* op) {
  if (prompts.size() != rngs.size() || prompts.empty()) {
    throw ValidationError(std::string(op) + ": need one rng stream per prompt");
  }
}

}  // namespace

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check_t(t, sched, "forward_diffuse");
  if (x0.shape() != eps.shape()) {
    throw ShapeError("forward_diffuse: x0 " + to_string(x0.shape()) + " vs eps " + to_string(eps.shape()));
  }
  const double a = std::sqrt(sched.alpha_bar[static_cast<std::size_t>(t)]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor forward_diffuse_rows(const Tensor& x0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched) {
  if (x0.shape() != eps.shape()) {
    throw ShapeError("forward_diffuse_rows: x0 " + to_string(x0.shape()) + " vs eps " + to_string(eps.shape()));
  }
  if (t.size() != x0.dim(0)) throw ShapeError("forward_diffuse_rows: need one timestep per row");
  Tensor out(x0.shape());
  const std::size_t width = x0.row_size();
  for (std::size_t r = 0; r < t.size(); ++r) {
    check_t(t[r], sched, "forward_diffuse_rows");
    const double a = std::sqrt(sched.alpha_bar[static_cast<std::size_t>(t[r])]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t[r])]);
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = a * x0[r * width + j] + b * eps[r * width + j];
  }
  return out;
}

Tensor cfg_predict(const NoiseModel& model, const Tensor& x_t, int t, std::span<const int> prompts, double scale) {
  const std::size_t rows = x_t.dim(0);
  if (prompts.size() != rows) throw ShapeError("cfg_predict: need one prompt per row");
  if (scale == 1.0) {
    std::vector<int> ts(rows, t);
    return predict_noise(model, x_t, ts, prompts);
  }
  // Conditional rows first, then the same latents under the null prompt.
  Tensor both = concat_rows({x_t, x_t});
  std::vector<int> ts(2 * rows, t);
  std::vector<int> ids(prompts.begin(), prompts.end());
  ids.insert(ids.end(), rows, kNullPrompt);
  Tensor eps = predict_noise(model, both, ts, ids);
  Tensor out(x_t.shape());
  const std::size_t n = x_t.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double c = eps[i], u = eps[n + i];
    out[i] = u + scale * (c - u);
  }
  return out;
}

std::vector<int> sampling_timesteps(int timesteps, int steps) {
  if (steps < 1 || steps > timesteps) {
    throw ValidationError("sampler steps " + std::to_string(steps) + " outside [1, " + std::to_string(timesteps) + "]");
  }
  // Evenly strided, always starting at T-1; stride 1 when steps == T.
  std::vector<int> out;
  for (int i = steps - 1; i >= 0; --i) {
    out.push_back(static_cast<int>((static_cast<long long>(i + 1) * timesteps) / steps) - 1);
  }
  return out;
}

Tensor sample(const NoiseModel& model, std::span<const int> prompts, std::span<RngStream> rngs, const SamplerConfig& cfg,
              const NoiseSchedule& sched) {
  check_batch(prompts, rngs, "sample");
  Tensor x = initial_noise(prompts.size(), model.denoiser->config().image_shape(), rngs);
  run_chain(model, x, prompts, rngs, sampling_timesteps(sched.timesteps(), cfg.steps), cfg, sched, "sample");
  clamp_unit(x);
  return x;
}

Tensor sample(const NoiseModel& model, int prompt, RngStream rng, const SamplerConfig& cfg, const NoiseSchedule& sched) {
  std::vector<int> p{prompt};
  std::vector<RngStream> r{rng};
  Tensor x = sample(model, p, r, cfg, sched);
  return x.reshaped(model.denoiser->config().image_shape());
}

Tensor sdrecon(const NoiseModel& model, std::span<const int> prompts, const Tensor& x_real, int level,
               std::span<RngStream> rngs, const SamplerConfig& cfg, const NoiseSchedule& sched) {
  check_batch(prompts, rngs, "sdrecon");
  if (x_real.dim(0) != prompts.size()) throw ShapeError("sdrecon: need one image per prompt");
  if (level < 0 || level > sched.timesteps()) {
    throw ValidationError("sdrecon: level " + std::to_string(level) + " outside [0, " + std::to_string(sched.timesteps()) + "]");
  }
  if (level == 0) return x_real;
  const int t = level - 1;
  Tensor eps(x_real.shape());
  for (std::size_t r = 0; r < prompts.size(); ++r) rngs[r].fill_normal(eps.row(r));
  Tensor x = forward_diffuse(x_real, t, eps, sched);
  std::vector<int> steps;
  for (int s = t; s >= 0; --s) steps.push_back(s);
  SamplerConfig full = cfg;
  full.kind = SamplerKind::kAncestral;
  run_chain(model, x, prompts, rngs, steps, full, sched, "sdrecon");
  clamp_unit(x);
  return x;
}

Tensor sample_with_lan(const NoiseModel& model, const NoiseModel& base, std::span<const int> prompts,
                       std::span<RngStream> rngs, const SamplerConfig& cfg, const NoiseSchedule& sched) {
  check_batch(prompts, rngs, "sample_with_lan");
  Tensor h_base = initial_noise(prompts.size(), model.denoiser->config().image_shape(), rngs);
  Tensor h = h_base;
  const auto steps = sampling_timesteps(sched.timesteps(), cfg.steps);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int prev = i + 1 < steps.size() ? steps[i + 1] : -1;
    Tensor eps_model = cfg_predict(model, h, t, prompts, cfg.guidance);
    Tensor eps_base = cfg_predict(base, h_base, t, prompts, cfg.guidance);
    // Both chains see the same step noise.
    std::vector<RngStream> shared(rngs.begin(), rngs.end());
    reverse_step(h, eps_model, t, prev, shared, cfg, sched);
    reverse_step(h_base, eps_base, t, prev, rngs, cfg, sched);
    h = lan_transform(h, h_base);
    check_finite(h, t, "sample_with_lan");
  }
  clamp_unit(h);
  return h;
}

}  // namespace hgdpo
