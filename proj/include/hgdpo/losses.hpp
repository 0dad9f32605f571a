// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "hgdpo/autodiff.hpp"
#include "hgdpo/diffusion.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo {

struct DpoConfig {
  double beta = 2500.0;
};

struct StatConfig {
  double lambda_stat = 10000.0;
  /// Use the same z for the trained and base one-step samples.
  bool share_noise = true;
};

/// Graph-building noise predictor for the model being trained:
/// (graph, x_t [B,C,H,W], t per row, prompt per row) -> eps prediction.
using Predictor =
    std::function<ad::Var(ad::Graph&, ad::Var x_t, std::span<const int> t, std::span<const int> prompts)>;

/// Predictor over a fixed model (inference values wrapped as a graph input).
Predictor frozen_predictor(const NoiseModel& model);

// All losses take a batch: images [B,C,H,W], one prompt and timestep per row,
// noise tensors shaped like the images. Per-item terms are averaged over the
// batch.

/// Mean squared noise-prediction error.
ad::Var sft_loss(ad::Graph& g, const Predictor& model, const Tensor& x0, std::span<const int> prompts,
                 std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched);

struct DpoTerms {
  ad::Var loss;    // scalar
  ad::Var inside;  // [B], argument of log-sigmoid
  ad::Var eps_theta_w;  // trained-model prediction on the noised winners
};

/// Diffusion-DPO with constant timestep weighting; winner and loser of a row
/// share its timestep but use their own noise.
DpoTerms dpo_terms(ad::Graph& g, const Predictor& model, const NoiseModel& ref, const Tensor& x_w, const Tensor& x_l,
                   std::span<const int> prompts, std::span<const int> t, const Tensor& eps_w, const Tensor& eps_l,
                   const DpoConfig& cfg, const NoiseSchedule& sched);
ad::Var dpo_loss(ad::Graph& g, const Predictor& model, const NoiseModel& ref, const Tensor& x_w, const Tensor& x_l,
                 std::span<const int> prompts, std::span<const int> t, const Tensor& eps_w, const Tensor& eps_l,
                 const DpoConfig& cfg, const NoiseSchedule& sched);

/// (1 - alpha_t) / (sqrt(alpha_t) * sqrt(1 - alpha_bar_t)).
double stat_kappa(int t, const NoiseSchedule& sched);

/// Squared distance between channel means of one ancestral step from
/// l_t = forward_diffuse(x_w, t, eps) taken with the trained and the base
/// model (no guidance). z_theta / z_base are the step noises; pass the same
/// tensor for both to share them. Requires t >= 1.
ad::Var stat_matching_loss(ad::Graph& g, const Predictor& model, const NoiseModel& base, const Tensor& x_w,
                           std::span<const int> prompts, std::span<const int> t, const Tensor& eps,
                           const Tensor& z_theta, const Tensor& z_base, const NoiseSchedule& sched);
ad::Var stat_matching_loss(ad::Graph& g, const Predictor& model, const NoiseModel& base, const Tensor& x_w,
                           std::span<const int> prompts, std::span<const int> t, const Tensor& eps, const Tensor& z,
                           const NoiseSchedule& sched);

/// Same loss given the trained prediction already computed on l_t.
ad::Var stat_matching_from_prediction(ad::Graph& g, const Tensor& l_t, ad::Var eps_theta, const Tensor& eps_base,
                                      std::span<const int> t, const Tensor& z_theta, const Tensor& z_base,
                                      const NoiseSchedule& sched);

/// dpo_loss + lambda_stat * stat_matching_loss, with the statistics term
/// reusing the winner's timestep and noise. `z_base` is used only when
/// stat.share_noise is false.
ad::Var easy_objective(ad::Graph& g, const Predictor& model, const NoiseModel& ref, const NoiseModel& base,
                       const Tensor& x_w, const Tensor& x_l, std::span<const int> prompts, std::span<const int> t,
                       const Tensor& eps_w, const Tensor& eps_l, const Tensor& z, const Tensor& z_base,
                       const DpoConfig& dpo, const StatConfig& stat, const NoiseSchedule& sched);

/// Per-channel renormalization of h_hat to h_base's channel mean and
/// (population) std. Accepts [C,H,W] or [B,C,H,W]; batched inputs are
/// normalized item by item.
Tensor lan_transform(const Tensor& h_hat, const Tensor& h_base);

/// Cosine distances between dataset-averaged channel-mean vectors and between
/// dataset-averaged channel-std vectors of two image sets.
std::pair<double, double> latent_stat_cosine(const std::vector<Tensor>& winners, const std::vector<Tensor>& losers);

}  // namespace hgdpo
