// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgdpo/diffusion.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/tensor.hpp"
#include "hgdpo/world.hpp"

namespace hgdpo {

/// Circular mean hue in degrees [0, 360) over every pixel of every image
/// ([3,H,W] in [-1,1]) whose saturation is at least 1e-3.
double hue_circular_mean(const std::vector<Tensor>& images);
/// Wrapped difference of the two sets' circular mean hues, in [0, 180].
double hue_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues; columns of *vectors (if given) are eigenvectors.
std::vector<double> symmetric_eigen(const Tensor& a, Tensor* vectors = nullptr);
/// Square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
Tensor sqrtm_psd(const Tensor& a);
/// Squared Frechet distance between N(mu1, cov1) and N(mu2, cov2).
double frechet_distance(const std::vector<double>& mu1, const Tensor& cov1, const std::vector<double>& mu2,
                        const Tensor& cov2);
/// Orthonormal [d, k] basis from Gram-Schmidt on seeded Gaussian columns.
Tensor random_projection(std::size_t d, std::size_t k, std::uint64_t seed);
/// Frechet distance between projected image features; each set needs at
/// least proj_dim + 1 images.
double toy_fid(const std::vector<Tensor>& a, const std::vector<Tensor>& b, std::size_t proj_dim = 16,
               std::uint64_t proj_seed = 0x5eed);

/// Mean over images of the Laplacian response std.
double laplacian_sharpness(const std::vector<Tensor>& images);

/// Fraction of pairs with a > b; ties count one half.
double win_rate(const std::vector<double>& a, const std::vector<double>& b);
double win_rate(const std::vector<PromptSpec>& prompts, const WorldConfig& world, const std::vector<Tensor>& a,
                const std::vector<Tensor>& b, const std::vector<int>& prompt_ids);

struct StageReport {
  std::string label;
  double mean_oracle = 0.0;
  double mean_alignment = 0.0;
  double mean_quality = 0.0;
  double mean_sharpness_term = 0.0;
  double toy_fid = 0.0;
  double hue_distance_vs_base = 0.0;
  double sharpness = 0.0;
  double win_rate_vs_base = 0.5;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

/// Paired evaluation samples: item i uses prompt i mod P and noise seed
/// derive_seed(seed, i).
struct EvalSet {
  std::vector<Tensor> images;
  std::vector<int> prompts;
  std::vector<OracleScore> scores;
};

struct EvalContext {
  const std::vector<PromptSpec>* prompts = nullptr;
  const WorldConfig* world = nullptr;
  const NoiseSchedule* sched = nullptr;
  SamplerConfig sampler;
  int n = 64;
  std::uint64_t seed = 0;
  std::size_t fid_dim = 16;
  std::uint64_t fid_seed = 0x5eed;
  /// Real reference images for toy-FID.
  const std::vector<Tensor>* real = nullptr;
  /// Base-model samples for the same (prompt, seed) items.
  const EvalSet* base = nullptr;
};

/// Samples and scores the evaluation items. With lan_base set, sampling uses
/// latent adaptive normalization against that model.
EvalSet sample_eval_set(const NoiseModel& model, const EvalContext& ctx, const NoiseModel* lan_base = nullptr);
StageReport report_for(const EvalSet& set, const EvalContext& ctx, const std::string& label);
StageReport evaluate_stage(const NoiseModel& model, const EvalContext& ctx, const std::string& label,
                           const NoiseModel* lan_base = nullptr);

}  // namespace hgdpo
