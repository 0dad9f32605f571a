// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "hgdpo/rng.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo {

// Procedural stand-in for a captioned photo collection. Each prompt is a
// coloured Gaussian blob at a grid position with a fine checkerboard texture;
// the low-frequency blob plays the role of composition and the texture the
// role of fine detail. Images are [3, 16, 16] in [-1, 1].

struct WorldConfig {
  int prompts = 32;
  std::size_t height = 16;
  std::size_t width = 16;
  double blob_sigma = 2.5;
  double texture_amplitude = 0.15;
  double noise_amplitude = 0.02;
  double quality_percentile = 25.0;
  int pilot_renders = 1000;

  Shape image_shape() const { return {3, height, width}; }
};

struct PromptSpec {
  int id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double hue = 0.0;  // radians in [0, 2pi)
  int texture_freq = 1;
};

struct RealImage {
  Tensor pixels;
  int prompt_id = 0;
  std::uint64_t seed = 0;
};

struct OracleScore {
  double total = 0.0;
  double alignment = 0.0;
  double quality = 0.0;
  double sharpness = 0.0;
};

struct OracleWeights {
  double position = 1.0;
  double hue = 0.5;
  double quality = 1.0;
  double sharpness = 0.3;
};

/// Prompt table: blob centres cycle over a 4x4 grid, hues follow a golden
/// ratio sequence (so every prompt has a distinct centre/hue pair).
std::vector<PromptSpec> make_prompts(const WorldConfig& cfg);

/// Noise-free render of a prompt (texture included).
Tensor render_ideal(const PromptSpec& p, const WorldConfig& cfg);
/// One render with texture strength and pixel noise drawn from rng.
Tensor render(const PromptSpec& p, RngStream& rng, const WorldConfig& cfg);

/// Oracle preference score of image x under prompt p.
OracleScore oracle_score(const Tensor& x, const PromptSpec& p, const WorldConfig& cfg, const OracleWeights& w = {});

/// Score a render must reach to count as a real image for prompt p: the
/// configured percentile of pilot renders of p.
double quality_floor(const PromptSpec& p, const WorldConfig& cfg, std::uint64_t seed);

/// Draws renders from rng until one scores at least `floor` (the best draw is
/// kept if none does within the pilot budget).
RealImage gen_real(const PromptSpec& p, RngStream rng, const WorldConfig& cfg, std::optional<double> floor = {});

/// One real image per prompt; item i uses seed derive_seed(seed, i).
std::vector<RealImage> gen_real_set(const std::vector<PromptSpec>& prompts, const WorldConfig& cfg, std::uint64_t seed);

namespace image {

/// HSV of a pixel given RGB in [0, 1]; hue in degrees [0, 360).
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};
Hsv rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(double h_deg, double s, double v);

/// Chroma-weighted centroid (x, y) of pixels whose chroma exceeds the
/// threshold; nullopt when none does.
std::optional<std::array<double, 2>> centroid(const Tensor& img);
/// 3x3 box blur with reflect padding.
Tensor box_blur(const Tensor& img);
/// 4x4 average pooling per channel.
Tensor lowpass(const Tensor& img);
/// Integer translation with reflect padding at the borders.
Tensor shift(const Tensor& img, int dx, int dy);
/// 3x3 Laplacian of the channel-mean image, reflect padding; [H, W].
Tensor laplacian(const Tensor& img);
/// Population standard deviation of laplacian(img).
double laplacian_std(const Tensor& img);

}  // namespace image

}  // namespace hgdpo
