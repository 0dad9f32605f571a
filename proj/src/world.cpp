// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hgdpo/errors.hpp"

namespace hgdpo {

namespace {

constexpr double kBackground = -0.8;
constexpr double kBlobGain = 1.6;
constexpr double kChromaThreshold = 0.2;
constexpr double kHueMaskLevel = 0.3;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double blob_mask(const PromptSpec& p, double sigma, std::size_t x, std::size_t y) {
  const double dx = static_cast<double>(x) - p.cx, dy = static_cast<double>(y) - p.cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

double texture(const PromptSpec& p, std::size_t x, std::size_t y) {
  const double w = std::numbers::pi * p.texture_freq / 2.0;
  return std::cos(w * static_cast<double>(x)) * std::cos(w * static_cast<double>(y));
}

void check_image(const Tensor& img, const char* op) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError(std::string(op) + ": expected [3,H,W], got " + to_string(img.shape()));
}

std::size_t reflect(long i, std::size_t n) {
  if (i < 0) i = -i;
  if (i >= static_cast<long>(n)) i = 2 * static_cast<long>(n) - 2 - i;
  return static_cast<std::size_t>(i);
}

double circ_dist(double a, double b) {
  double d = std::fmod(std::abs(a - b), kTwoPi);
  return d > std::numbers::pi ? kTwoPi - d : d;
}

Tensor draw(const PromptSpec& p, const WorldConfig& cfg, double texture_gain, RngStream* noise) {
  const std::size_t h = cfg.height, w = cfg.width;
  Tensor img({3, h, w});
  const auto col = image::hsv_to_rgb(p.hue * 180.0 / std::numbers::pi, 1.0, 1.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double m = blob_mask(p, cfg.blob_sigma, x, y);
      // Texture and noise are achromatic, so they never move a pixel's hue.
      double shared = texture_gain * cfg.texture_amplitude * m * texture(p, x, y);
      if (noise) shared += cfg.noise_amplitude * (2.0 * noise->uniform() - 1.0);
      for (std::size_t c = 0; c < 3; ++c) {
        img[(c * h + y) * w + x] = std::clamp(kBackground + kBlobGain * m * col[c] + shared, -1.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

std::vector<PromptSpec> make_prompts(const WorldConfig& cfg) {
  if (cfg.prompts < 1) throw ValidationError("world.prompts must be positive");
  if (cfg.height != 16 || cfg.width != 16) throw ValidationError("world image size is fixed at 16x16");
  static constexpr double kGrid[4] = {5.0, 7.0, 9.0, 11.0};
  std::vector<PromptSpec> out;
  for (int i = 0; i < cfg.prompts; ++i) {
    PromptSpec p;
    p.id = i;
    p.cx = kGrid[i % 4];
    p.cy = kGrid[(i / 4) % 4];
    const double golden = 0.6180339887498949;
    p.hue = kTwoPi * std::fmod(0.1 + golden * i, 1.0);
    p.texture_freq = 1 + (i % 2);
    out.push_back(p);
  }
  return out;
}

Tensor render_ideal(const PromptSpec& p, const WorldConfig& cfg) { return draw(p, cfg, 1.0, nullptr); }

Tensor render(const PromptSpec& p, RngStream& rng, const WorldConfig& cfg) {
  const double gain = 0.8 + 0.4 * rng.uniform();
  return draw(p, cfg, gain, &rng);
}

OracleScore oracle_score(const Tensor& x, const PromptSpec& p, const WorldConfig& cfg, const OracleWeights& w) {
  check_image(x, "oracle_score");
  if (x.shape() != cfg.image_shape()) {
    throw ShapeError("oracle_score: image " + to_string(x.shape()) + ", world expects " + to_string(cfg.image_shape()));
  }
  const std::size_t h = x.dim(1), wd = x.dim(2), plane = h * wd;
  OracleScore s;

  const auto c = image::centroid(x);
  const double cx = c ? (*c)[0] : (static_cast<double>(wd) - 1.0) / 2.0;
  const double cy = c ? (*c)[1] : (static_cast<double>(h) - 1.0) / 2.0;
  const double pos_err = std::hypot(cx - p.cx, cy - p.cy);

  // Chroma-weighted circular hue mean over the prompt's blob region.
  double sx = 0.0, sy = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < wd; ++xx) {
      if (blob_mask(p, cfg.blob_sigma, xx, y) < kHueMaskLevel) continue;
      const std::size_t i = y * wd + xx;
      const auto hsv = image::rgb_to_hsv((x[i] + 1.0) / 2.0, (x[plane + i] + 1.0) / 2.0, (x[2 * plane + i] + 1.0) / 2.0);
      const double chroma = hsv.s * hsv.v;
      const double a = hsv.h * std::numbers::pi / 180.0;
      sx += chroma * std::cos(a);
      sy += chroma * std::sin(a);
    }
  }
  const double hue_err = std::hypot(sx, sy) < 1e-12 ? std::numbers::pi : circ_dist(std::atan2(sy, sx), p.hue);
  s.alignment = -w.position * pos_err - w.hue * hue_err;

  const Tensor lp = image::lowpass(x);
  const Tensor ideal = image::lowpass(render_ideal(p, cfg));
  double err = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) err += (lp[i] - ideal[i]) * (lp[i] - ideal[i]);
  s.quality = -w.quality * std::sqrt(err);

  s.sharpness = w.sharpness * image::laplacian_std(x);
  s.total = s.alignment + s.quality + s.sharpness;
  return s;
}

double quality_floor(const PromptSpec& p, const WorldConfig& cfg, std::uint64_t seed) {
  const int per_prompt = std::max(1, cfg.pilot_renders / std::max(1, cfg.prompts));
  std::vector<double> scores;
  for (int i = 0; i < per_prompt; ++i) {
    RngStream rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    scores.push_back(oracle_score(render(p, rng, cfg), p, cfg).total);
  }
  std::sort(scores.begin(), scores.end());
  const double pos = cfg.quality_percentile / 100.0 * static_cast<double>(scores.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(scores.size() - 1, lo + 1);
  return scores[lo] + (pos - static_cast<double>(lo)) * (scores[hi] - scores[lo]);
}

RealImage gen_real(const PromptSpec& p, RngStream rng, const WorldConfig& cfg, std::optional<double> floor) {
  RealImage best{Tensor(), p.id, rng.seed()};
  double best_score = -1e300;
  const int attempts = std::max(1, cfg.pilot_renders);
  for (int a = 0; a < attempts; ++a) {
    Tensor img = render(p, rng, cfg);
    const double s = oracle_score(img, p, cfg).total;
    if (s > best_score) {
      best_score = s;
      best.pixels = std::move(img);
    }
    if (!floor || best_score >= *floor) break;
  }
  return best;
}

std::vector<RealImage> gen_real_set(const std::vector<PromptSpec>& prompts, const WorldConfig& cfg, std::uint64_t seed) {
  std::vector<RealImage> out(prompts.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::uint64_t item = derive_seed(seed, i);
    const double floor = quality_floor(prompts[i], cfg, derive_seed(item, 1));
    out[i] = gen_real(prompts[i], RngStream(item), cfg, floor);
  }
  return out;
}

namespace image {

Hsv rgb_to_hsv(double r, double g, double b) {
  r = std::clamp(r, 0.0, 1.0);
  g = std::clamp(g, 0.0, 1.0);
  b = std::clamp(b, 0.0, 1.0);
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) return out;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

std::array<double, 3> hsv_to_rgb(double h_deg, double s, double v) {
  h_deg = std::fmod(h_deg, 360.0);
  if (h_deg < 0.0) h_deg += 360.0;
  const double c = v * s;
  const double hp = h_deg / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  const double m = v - c;
  for (auto& ch : rgb) ch += m;
  return rgb;
}

std::optional<std::array<double, 2>> centroid(const Tensor& img) {
  check_image(img, "centroid");
  const std::size_t h = img.dim(1), w = img.dim(2), plane = h * w;
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double a = img[i], b = img[plane + i], c = img[2 * plane + i];
      const double chroma = std::max({a, b, c}) - std::min({a, b, c});
      const double wt = chroma - kChromaThreshold;
      if (wt <= 0.0) continue;
      sw += wt;
      sx += wt * static_cast<double>(x);
      sy += wt * static_cast<double>(y);
    }
  }
  if (sw <= 0.0) return std::nullopt;
  return std::array<double, 2>{sx / sw, sy / sw};
}

Tensor box_blur(const Tensor& img) {
  check_image(img, "box_blur");
  const std::size_t h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            s += img[(c * h + reflect(static_cast<long>(y) + dy, h)) * w + reflect(static_cast<long>(x) + dx, w)];
          }
        }
        out[(c * h + y) * w + x] = s / 9.0;
      }
    }
  }
  return out;
}

Tensor lowpass(const Tensor& img) {
  check_image(img, "lowpass");
  const std::size_t h = img.dim(1), w = img.dim(2), ph = h / 4, pw = w / 4;
  Tensor out({3, ph, pw}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < ph * 4; ++y) {
      for (std::size_t x = 0; x < pw * 4; ++x) out[(c * ph + y / 4) * pw + x / 4] += img[(c * h + y) * w + x] / 16.0;
    }
  }
  return out;
}

Tensor shift(const Tensor& img, int dx, int dy) {
  check_image(img, "shift");
  const std::size_t h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sy = reflect(static_cast<long>(y) - dy, h), sx = reflect(static_cast<long>(x) - dx, w);
        out[(c * h + y) * w + x] = img[(c * h + sy) * w + sx];
      }
    }
  }
  return out;
}

Tensor laplacian(const Tensor& img) {
  check_image(img, "laplacian");
  const std::size_t h = img.dim(1), w = img.dim(2), plane = h * w;
  std::vector<double> gray(plane);
  for (std::size_t i = 0; i < plane; ++i) gray[i] = (img[i] + img[plane + i] + img[2 * plane + i]) / 3.0;
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto at = [&](long yy, long xx) { return gray[reflect(yy, h) * w + reflect(xx, w)]; };
      const long yi = static_cast<long>(y), xi = static_cast<long>(x);
      out[y * w + x] = at(yi - 1, xi) + at(yi + 1, xi) + at(yi, xi - 1) + at(yi, xi + 1) - 4.0 * at(yi, xi);
    }
  }
  return out;
}

double laplacian_std(const Tensor& img) {
  const Tensor l = laplacian(img);
  double mean = 0.0;
  for (double v : l.data()) mean += v;
  mean /= static_cast<double>(l.size());
  double var = 0.0;
  for (double v : l.data()) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(l.size()));
}

}  // namespace image

}  // namespace hgdpo
