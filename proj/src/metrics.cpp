// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hgdpo/errors.hpp"
#include "hgdpo/rng.hpp"

namespace hgdpo {

namespace {

constexpr double kSaturationFloor = 1e-3;

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(p, j);
    }
  }
  return c;
}

void check_square(const Tensor& a, const char* op) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw ShapeError(std::string(op) + ": expected square matrix, got " + to_string(a.shape()));
}

struct Moments {
  std::vector<double> mu;
  Tensor cov;
};

Moments feature_moments(const std::vector<Tensor>& set, const Tensor& proj) {
  const std::size_t d = proj.dim(0), k = proj.dim(1), n = set.size();
  Tensor feats({n, k}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (set[i].size() != d) throw ShapeError("toy_fid: image size " + std::to_string(set[i].size()) + " vs " + std::to_string(d));
    for (std::size_t p = 0; p < d; ++p) {
      const double v = set[i][p];
      for (std::size_t j = 0; j < k; ++j) feats.at(i, j) += v * proj.at(p, j);
    }
  }
  Moments m{std::vector<double>(k, 0.0), Tensor({k, k}, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) m.mu[j] += feats.at(i, j) / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        m.cov.at(a, b) += (feats.at(i, a) - m.mu[a]) * (feats.at(i, b) - m.mu[b]) / static_cast<double>(n - 1);
      }
    }
  }
  return m;
}

}  // namespace

double hue_circular_mean(const std::vector<Tensor>& images) {
  double sx = 0.0, sy = 0.0;
  std::size_t kept = 0;
  for (const Tensor& img : images) {
    if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("hue_circular_mean: expected [3,H,W], got " + to_string(img.shape()));
    const std::size_t plane = img.dim(1) * img.dim(2);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto hsv = image::rgb_to_hsv((img[i] + 1.0) / 2.0, (img[plane + i] + 1.0) / 2.0, (img[2 * plane + i] + 1.0) / 2.0);
      if (hsv.s < kSaturationFloor) continue;
      const double a = hsv.h * std::numbers::pi / 180.0;
      sx += std::cos(a);
      sy += std::sin(a);
      ++kept;
    }
  }
  if (kept == 0) throw NumericError("hue_circular_mean: every pixel is below the saturation floor");
  if (std::hypot(sx, sy) / static_cast<double>(kept) < 1e-9) throw NumericError("hue_circular_mean: resultant vanishes, mean hue undefined");
  double deg = std::atan2(sy, sx) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

double hue_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.empty() || b.empty()) throw ValidationError("hue_distance: empty image set");
  const double d = std::abs(hue_circular_mean(a) - hue_circular_mean(b));
  return std::min(d, 360.0 - d);
}

std::vector<double> symmetric_eigen(const Tensor& a_in, Tensor* vectors) {
  check_square(a_in, "symmetric_eigen");
  const std::size_t n = a_in.dim(0);
  Tensor a = a_in;
  Tensor v({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        total += a.at(i, j) * a.at(i, j);
        if (i != j) off += a.at(i, j) * a.at(i, j);
      }
    }
    if (off <= 1e-30 * std::max(total, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a.at(i, i);
  if (vectors) *vectors = std::move(v);
  return eig;
}

Tensor sqrtm_psd(const Tensor& a) {
  check_square(a, "sqrtm_psd");
  const std::size_t n = a.dim(0);
  Tensor sym = a;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sym.at(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));
  }
  Tensor v;
  const std::vector<double> eig = symmetric_eigen(sym, &v);
  Tensor out({n, n}, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double r = std::sqrt(std::max(0.0, eig[k]));
    if (r == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += r * v.at(i, k) * v.at(j, k);
    }
  }
  return out;
}

double frechet_distance(const std::vector<double>& mu1, const Tensor& cov1, const std::vector<double>& mu2,
                        const Tensor& cov2) {
  check_square(cov1, "frechet_distance");
  check_square(cov2, "frechet_distance");
  const std::size_t n = mu1.size();
  if (mu2.size() != n || cov1.dim(0) != n || cov2.dim(0) != n) throw ShapeError("frechet_distance: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) d2 += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
  const Tensor s1 = sqrtm_psd(cov1);
  const Tensor cross = sqrtm_psd(matmul(matmul(s1, cov2), s1));
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) tr += cov1.at(i, i) + cov2.at(i, i) - 2.0 * cross.at(i, i);
  return std::max(0.0, d2 + tr);
}

Tensor random_projection(std::size_t d, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > d) throw ValidationError("random_projection: need 0 < k <= d");
  RngStream rng(seed);
  Tensor q({d, k});
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> col(d);
    rng.fill_normal(col);
    // Modified Gram-Schmidt, applied twice for orthogonality to fp accuracy.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += col[i] * q.at(i, p);
        for (std::size_t i = 0; i < d; ++i) col[i] -= dot * q.at(i, p);
      }
    }
    double norm = 0.0;
    for (double c : col) norm += c * c;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q.at(i, j) = col[i] / norm;
  }
  return q;
}

double toy_fid(const std::vector<Tensor>& a, const std::vector<Tensor>& b, std::size_t proj_dim, std::uint64_t proj_seed) {
  if (a.size() < proj_dim + 1 || b.size() < proj_dim + 1) {
    throw ValidationError("toy_fid: each set needs at least " + std::to_string(proj_dim + 1) + " images");
  }
  const Tensor proj = random_projection(a.front().size(), proj_dim, proj_seed);
  const Moments ma = feature_moments(a, proj), mb = feature_moments(b, proj);
  return frechet_distance(ma.mu, ma.cov, mb.mu, mb.cov);
}

double laplacian_sharpness(const std::vector<Tensor>& images) {
  if (images.empty()) return 0.0;
  double s = 0.0;
  for (const Tensor& img : images) s += image::laplacian_std(img);
  return s / static_cast<double>(images.size());
}

double win_rate(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("win_rate: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " scores");
  if (a.empty()) throw ValidationError("win_rate: no pairs");
  double wins = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) wins += 1.0;
    else if (a[i] == b[i]) wins += 0.5;
  }
  return wins / static_cast<double>(a.size());
}

double win_rate(const std::vector<PromptSpec>& prompts, const WorldConfig& world, const std::vector<Tensor>& a,
                const std::vector<Tensor>& b, const std::vector<int>& prompt_ids) {
  if (a.size() != b.size() || a.size() != prompt_ids.size()) throw ValidationError("win_rate: length mismatch");
  std::vector<double> sa, sb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const PromptSpec& p = prompts.at(static_cast<std::size_t>(prompt_ids[i]));
    sa.push_back(oracle_score(a[i], p, world).total);
    sb.push_back(oracle_score(b[i], p, world).total);
  }
  return win_rate(sa, sb);
}

EvalSet sample_eval_set(const NoiseModel& model, const EvalContext& ctx, const NoiseModel* lan_base) {
  if (ctx.n < 1) throw ValidationError("eval.samples must be positive");
  const std::size_t n = static_cast<std::size_t>(ctx.n), p = ctx.prompts->size();
  EvalSet set;
  std::vector<RngStream> rngs;
  for (std::size_t i = 0; i < n; ++i) {
    set.prompts.push_back(static_cast<int>(i % p));
    rngs.emplace_back(derive_seed(ctx.seed, i));
  }
  const Tensor batch = lan_base ? sample_with_lan(model, *lan_base, set.prompts, rngs, ctx.sampler, *ctx.sched)
                                : sample(model, set.prompts, rngs, ctx.sampler, *ctx.sched);
  const Shape shape = ctx.world->image_shape();
  for (std::size_t i = 0; i < n; ++i) set.images.push_back(batch.slice_rows(i, i + 1).reshaped(shape));
  set.scores.resize(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    set.scores[i] = oracle_score(set.images[i], (*ctx.prompts)[static_cast<std::size_t>(set.prompts[i])], *ctx.world);
  }
  return set;
}

StageReport report_for(const EvalSet& set, const EvalContext& ctx, const std::string& label) {
  if (!ctx.base) throw ValidationError("evaluation needs the base-model sample cache");
  if (ctx.base->images.size() != set.images.size() || ctx.base->prompts != set.prompts) {
    throw ValidationError("base-model sample cache does not match the evaluation items");
  }
  StageReport r;
  r.label = label;
  r.n_samples = static_cast<int>(set.images.size());
  r.seed = ctx.seed;
  const double n = static_cast<double>(set.images.size());
  std::vector<double> mine, base;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    r.mean_oracle += set.scores[i].total / n;
    r.mean_alignment += set.scores[i].alignment / n;
    r.mean_quality += set.scores[i].quality / n;
    r.mean_sharpness_term += set.scores[i].sharpness / n;
    mine.push_back(set.scores[i].total);
    base.push_back(ctx.base->scores[i].total);
  }
  r.toy_fid = toy_fid(set.images, *ctx.real, ctx.fid_dim, ctx.fid_seed);
  r.hue_distance_vs_base = hue_distance(set.images, ctx.base->images);
  r.sharpness = laplacian_sharpness(set.images);
  r.win_rate_vs_base = win_rate(mine, base);
  return r;
}

StageReport evaluate_stage(const NoiseModel& model, const EvalContext& ctx, const std::string& label,
                           const NoiseModel* lan_base) {
  return report_for(sample_eval_set(model, ctx, lan_base), ctx, label);
}

}  // namespace hgdpo
