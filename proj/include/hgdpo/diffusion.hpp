// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "hgdpo/model.hpp"
#include "hgdpo/rng.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo {

/// DDPM beta/alpha/alpha_bar tables over timestep indices 0..T-1.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  int timesteps() const { return static_cast<int>(beta.size()); }

  /// Linear beta grid from beta_min to beta_max; requires T >= 2 and
  /// 0 < beta_min <= beta_max < 1.
  static NoiseSchedule linear(int timesteps, double beta_min, double beta_max);
  /// Arbitrary betas in (0, 1), non-decreasing.
  static NoiseSchedule from_betas(std::vector<double> betas);
};

enum class SamplerKind { kAncestral, kDdim };

struct SamplerConfig {
  int steps = 1000;
  double guidance = 5.0;
  SamplerKind kind = SamplerKind::kAncestral;
  double eta = 0.0;
};

/// sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps.
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);
/// Row-wise variant: row r of x0/eps is diffused to timestep t[r].
Tensor forward_diffuse_rows(const Tensor& x0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched);

/// eps_uncond + scale * (eps_cond - eps_uncond), both evaluated in one batch.
Tensor cfg_predict(const NoiseModel& model, const Tensor& x_t, int t, std::span<const int> prompts, double scale);

/// Descending timestep indices visited by a sampler with `steps` steps.
std::vector<int> sampling_timesteps(int timesteps, int steps);

/// Generates one image per prompt. Row r draws x_T and every step's noise from
/// rngs[r] only, so results do not depend on how items are batched. The final
/// output is clamped to [-1, 1]; intermediates are not.
Tensor sample(const NoiseModel& model, std::span<const int> prompts, std::span<RngStream> rngs,
              const SamplerConfig& cfg, const NoiseSchedule& sched);
Tensor sample(const NoiseModel& model, int prompt, RngStream rng, const SamplerConfig& cfg, const NoiseSchedule& sched);

/// SDEdit-style reconstruction at noise level `level` in [0, T]: level 0 is
/// the identity; otherwise x_real is diffused to index level-1 and denoised
/// through every index down to 0 with guidance cfg.guidance.
Tensor sdrecon(const NoiseModel& model, std::span<const int> prompts, const Tensor& x_real, int level,
               std::span<RngStream> rngs, const SamplerConfig& cfg, const NoiseSchedule& sched);

/// Sampling with latent adaptive normalization: a base chain and a model
/// chain run from the same noise, and after each step the model latent is
/// renormalized per channel to the base latent's mean/std.
Tensor sample_with_lan(const NoiseModel& model, const NoiseModel& base, std::span<const int> prompts,
                       std::span<RngStream> rngs, const SamplerConfig& cfg, const NoiseSchedule& sched);

}  // namespace hgdpo
