// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/losses.hpp"

#include <cmath>
#include <string>

#include "hgdpo/errors.hpp"

namespace hgdpo {

namespace {

void check_batch(const Tensor& x, std::size_t rows, const Tensor& noise, const char* op) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + to_string(x.shape()));
  if (x.dim(0) != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(rows) + " prompts for shape " + to_string(x.shape()));
  }
  if (noise.shape() != x.shape()) {
    throw ShapeError(std::string(op) + ": noise shape " + to_string(noise.shape()) + " vs " + to_string(x.shape()));
  }
}

template <typename T>
std::vector<T> twice(std::span<const T> v) {
  std::vector<T> out(v.begin(), v.end());
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

// Per-row mean squared difference.
Tensor row_mse(const Tensor& a, const Tensor& b) {
  const std::size_t rows = a.dim(0), width = a.row_size();
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      const double d = a[r * width + i] - b[r * width + i];
      s += d * d;
    }
    out[r] = s / static_cast<double>(width);
  }
  return out;
}

// [B,C,H,W] -> [B,C]
Tensor channel_means(const Tensor& x) {
  const std::size_t b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out({b, c});
  for (std::size_t i = 0; i < b * c; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < plane; ++k) s += x[i * plane + k];
    out[i] = s / static_cast<double>(plane);
  }
  return out;
}

struct StepCoeffs {
  std::vector<double> inv_sqrt_alpha;
  std::vector<double> eps_coeff;
  std::vector<double> sigma;
};

StepCoeffs step_coeffs(std::span<const int> t, const NoiseSchedule& sched) {
  StepCoeffs c;
  for (int ti : t) {
    if (ti < 1 || ti >= sched.timesteps()) {
      throw ValidationError("stat_matching_loss: timestep " + std::to_string(ti) + " outside [1, " +
                            std::to_string(sched.timesteps()) + ")");
    }
    const auto i = static_cast<std::size_t>(ti);
    c.inv_sqrt_alpha.push_back(1.0 / std::sqrt(sched.alpha[i]));
    c.eps_coeff.push_back(sched.beta[i] / std::sqrt(1.0 - sched.alpha_bar[i]));
    c.sigma.push_back(std::sqrt(sched.beta[i]));
  }
  return c;
}

Tensor scaled_rows(const Tensor& x, const std::vector<double>& coeffs) {
  Tensor out = x;
  const std::size_t width = x.row_size();
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    for (std::size_t i = 0; i < width; ++i) out[r * width + i] *= coeffs[r];
  }
  return out;
}


}  // namespace

Predictor frozen_predictor(const NoiseModel& model) {
  return [model](ad::Graph& g, ad::Var x_t, std::span<const int> t, std::span<const int> prompts) {
    return g.constant(predict_noise(model, x_t.value(), t, prompts));
  };
}

ad::Var sft_loss(ad::Graph& g, const Predictor& model, const Tensor& x0, std::span<const int> prompts,
                 std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched) {
  check_batch(x0, prompts.size(), eps, "sft_loss");
  const Tensor x_t = forward_diffuse_rows(x0, t, eps, sched);
  ad::Var pred = model(g, g.constant(x_t), t, prompts);
  return ad::mean(ad::square(ad::sub(pred, g.external(eps))));
}

DpoTerms dpo_terms(ad::Graph& g, const Predictor& model, const NoiseModel& ref, const Tensor& x_w, const Tensor& x_l,
                   std::span<const int> prompts, std::span<const int> t, const Tensor& eps_w, const Tensor& eps_l,
                   const DpoConfig& cfg, const NoiseSchedule& sched) {
  if (!(cfg.beta > 0.0)) throw ValidationError("dpo beta must be positive");
  check_batch(x_w, prompts.size(), eps_w, "dpo_loss");
  check_batch(x_l, prompts.size(), eps_l, "dpo_loss");
  const std::size_t b = prompts.size();
  const Tensor x_t = concat_rows({forward_diffuse_rows(x_w, t, eps_w, sched), forward_diffuse_rows(x_l, t, eps_l, sched)});
  const Tensor target = concat_rows({eps_w, eps_l});
  const std::vector<int> t2 = twice(t), p2 = twice(prompts);

  ad::Var pred = model(g, g.constant(x_t), t2, p2);
  const Tensor ref_pred = predict_noise(ref, x_t, t2, p2);
  ad::Var err = ad::row_mean(ad::square(ad::sub(pred, g.constant(target))));
  ad::Var delta = ad::sub(err, g.constant(row_mse(ref_pred, target)));
  ad::Var inside = ad::scale(ad::sub(ad::slice_rows(delta, 0, b), ad::slice_rows(delta, b, 2 * b)), -cfg.beta / 2.0);

  DpoTerms out;
  out.inside = inside;
  out.loss = ad::neg(ad::mean(ad::log_sigmoid(inside)));
  out.eps_theta_w = ad::slice_rows(pred, 0, b);
  return out;
}

ad::Var dpo_loss(ad::Graph& g, const Predictor& model, const NoiseModel& ref, const Tensor& x_w, const Tensor& x_l,
                 std::span<const int> prompts, std::span<const int> t, const Tensor& eps_w, const Tensor& eps_l,
                 const DpoConfig& cfg, const NoiseSchedule& sched) {
  return dpo_terms(g, model, ref, x_w, x_l, prompts, t, eps_w, eps_l, cfg, sched).loss;
}

double stat_kappa(int t, const NoiseSchedule& sched) {
  const auto i = static_cast<std::size_t>(t);
  return (1.0 - sched.alpha[i]) / (std::sqrt(sched.alpha[i]) * std::sqrt(1.0 - sched.alpha_bar[i]));
}

ad::Var stat_matching_from_prediction(ad::Graph& g, const Tensor& l_t, ad::Var eps_theta, const Tensor& eps_base,
                                      std::span<const int> t, const Tensor& z_theta, const Tensor& z_base,
                                      const NoiseSchedule& sched) {
  check_batch(l_t, t.size(), z_theta, "stat_matching_loss");
  check_batch(l_t, t.size(), z_base, "stat_matching_loss");
  const StepCoeffs c = step_coeffs(t, sched);

  // One ancestral step for each model from the same l_t.
  ad::Var theta_prev = ad::add(
      ad::row_scale(ad::sub(g.external(l_t), ad::row_scale(eps_theta, c.eps_coeff)), c.inv_sqrt_alpha),
      g.constant(scaled_rows(z_theta, c.sigma)));
  Tensor base_prev = scaled_rows(eps_base, c.eps_coeff);
  for (std::size_t i = 0; i < base_prev.size(); ++i) base_prev[i] = l_t[i] - base_prev[i];
  base_prev = scaled_rows(base_prev, c.inv_sqrt_alpha);
  const Tensor zs = scaled_rows(z_base, c.sigma);
  for (std::size_t i = 0; i < base_prev.size(); ++i) base_prev[i] += zs[i];

  ad::Var diff = ad::sub(ad::channel_mean(theta_prev), g.constant(channel_means(base_prev)));
  // Sum over channels, mean over the batch.
  return ad::scale(ad::mean(ad::square(diff)), static_cast<double>(l_t.dim(1)));
}

ad::Var stat_matching_loss(ad::Graph& g, const Predictor& model, const NoiseModel& base, const Tensor& x_w,
                           std::span<const int> prompts, std::span<const int> t, const Tensor& eps,
                           const Tensor& z_theta, const Tensor& z_base, const NoiseSchedule& sched) {
  check_batch(x_w, prompts.size(), eps, "stat_matching_loss");
  step_coeffs(t, sched);
  const Tensor l_t = forward_diffuse_rows(x_w, t, eps, sched);
  ad::Var eps_theta = model(g, g.constant(l_t), t, prompts);
  const Tensor eps_base = predict_noise(base, l_t, t, prompts);
  return stat_matching_from_prediction(g, l_t, eps_theta, eps_base, t, z_theta, z_base, sched);
}

ad::Var stat_matching_loss(ad::Graph& g, const Predictor& model, const NoiseModel& base, const Tensor& x_w,
                           std::span<const int> prompts, std::span<const int> t, const Tensor& eps, const Tensor& z,
                           const NoiseSchedule& sched) {
  return stat_matching_loss(g, model, base, x_w, prompts, t, eps, z, z, sched);
}

ad::Var easy_objective(ad::Graph& g, const Predictor& model, const NoiseModel& ref, const NoiseModel& base,
                       const Tensor& x_w, const Tensor& x_l, std::span<const int> prompts, std::span<const int> t,
                       const Tensor& eps_w, const Tensor& eps_l, const Tensor& z, const Tensor& z_base,
                       const DpoConfig& dpo, const StatConfig& stat, const NoiseSchedule& sched) {
  if (!(stat.lambda_stat >= 0.0)) throw ValidationError("lambda_stat must be non-negative");
  DpoTerms terms = dpo_terms(g, model, ref, x_w, x_l, prompts, t, eps_w, eps_l, dpo, sched);
  if (stat.lambda_stat == 0.0) return terms.loss;
  const Tensor l_t = forward_diffuse_rows(x_w, t, eps_w, sched);
  const Tensor eps_base = predict_noise(base, l_t, t, prompts);
  ad::Var ls = stat_matching_from_prediction(g, l_t, terms.eps_theta_w, eps_base, t, z,
                                             stat.share_noise ? z : z_base, sched);
  return ad::add(terms.loss, ad::scale(ls, stat.lambda_stat));
}

Tensor lan_transform(const Tensor& h_hat, const Tensor& h_base) {
  if (h_hat.shape() != h_base.shape()) {
    throw ShapeError("lan_transform: shapes " + to_string(h_hat.shape()) + " and " + to_string(h_base.shape()));
  }
  if (h_hat.rank() != 3 && h_hat.rank() != 4) {
    throw ShapeError("lan_transform: expected [C,H,W] or [B,C,H,W], got " + to_string(h_hat.shape()));
  }
  const std::size_t r = h_hat.rank();
  const std::size_t plane = h_hat.dim(r - 1) * h_hat.dim(r - 2);
  const std::size_t groups = h_hat.size() / plane;
  Tensor out(h_hat.shape());
  const auto stats = [plane](const Tensor& x, std::size_t off) {
    double mu = 0.0;
    for (std::size_t k = 0; k < plane; ++k) mu += x[off + k];
    mu /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t k = 0; k < plane; ++k) var += (x[off + k] - mu) * (x[off + k] - mu);
    return std::pair{mu, std::sqrt(var / static_cast<double>(plane))};
  };
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t off = gi * plane;
    const auto [mu, sd] = stats(h_hat, off);
    const auto [mu_b, sd_b] = stats(h_base, off);
    if (!(sd > 0.0)) throw NumericError("lan_transform: zero standard deviation in channel " + std::to_string(gi));
    for (std::size_t k = 0; k < plane; ++k) out[off + k] = (h_hat[off + k] - mu) / sd * sd_b + mu_b;
  }
  return out;
}

std::pair<double, double> latent_stat_cosine(const std::vector<Tensor>& winners, const std::vector<Tensor>& losers) {
  if (winners.empty() || losers.empty()) throw ValidationError("latent_stat_cosine: empty image set");
  const auto averaged = [](const std::vector<Tensor>& set) {
    const std::size_t c = set.front().dim(0);
    std::vector<double> mu(c, 0.0), sd(c, 0.0);
    for (const Tensor& x : set) {
      if (x.rank() != 3 || x.dim(0) != c) throw ShapeError("latent_stat_cosine: image shape " + to_string(x.shape()));
      const std::size_t plane = x.size() / c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double m = 0.0, v = 0.0;
        for (std::size_t k = 0; k < plane; ++k) m += x[ch * plane + k];
        m /= static_cast<double>(plane);
        for (std::size_t k = 0; k < plane; ++k) v += (x[ch * plane + k] - m) * (x[ch * plane + k] - m);
        mu[ch] += m / static_cast<double>(set.size());
        sd[ch] += std::sqrt(v / static_cast<double>(plane)) / static_cast<double>(set.size());
      }
    }
    return std::pair{mu, sd};
  };
  const auto cosine_distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("latent_stat_cosine: channel counts differ");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw NumericError("latent_stat_cosine: zero statistics vector");
    if (a == b) return 0.0;
    return 1.0 - ab / std::sqrt(aa * bb);
  };
  const auto [mw, sw] = averaged(winners);
  const auto [ml, sl] = averaged(losers);
  return {cosine_distance(mw, ml), cosine_distance(sw, sl)};
}

}  // namespace hgdpo
