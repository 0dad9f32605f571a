// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hgdpo/diffusion.hpp"
#include "hgdpo/errors.hpp"
#include "hgdpo/losses.hpp"
#include "support.hpp"

using namespace hgdpo;
using hgdpo::testing::fd_max_rel_error;
using hgdpo::testing::random_tensor;
using hgdpo::testing::tiny_denoiser;

namespace {

struct Fixture {
  NoiseSchedule sched = NoiseSchedule::linear(10, 1e-3, 0.2);
  ModelState theta;
  ModelState ref;
  RngStream rng{77};
  Tensor x_w, x_l, eps_w, eps_l, z, z2;
  std::vector<int> prompts{0, 2, 1};
  std::vector<int> t{3, 7, 1};

  Fixture() {
    theta.denoiser = Denoiser::create(tiny_denoiser(10), 1);
    theta.conditioner = Conditioner::create(3, 2, 2, 2);
    ref = snapshot(theta);
    for (auto* p : theta.denoiser.parameters())
      for (auto& v : p->value.data()) v += 0.05 * rng.normal();
    const Shape s{3, 2, 2, 2};
    x_w = random_tensor(s, rng);
    x_l = random_tensor(s, rng);
    eps_w = random_tensor(s, rng);
    eps_l = random_tensor(s, rng);
    z = random_tensor(s, rng);
    z2 = random_tensor(s, rng);
  }

  Predictor trainable(bool record) {
    return [this, record](ad::Graph& g, ad::Var x, std::span<const int> tt, std::span<const int> pp) {
      ad::Var c = std::as_const(theta.conditioner).embed(g, pp, tt, false);
      Denoiser::Bind b;
      b.train_weights = record;
      return theta.denoiser.forward(g, x, tt, c, b);
    };
  }

  double grad_error(const std::function<ad::Var(ad::Graph&, const Predictor&)>& loss) {
    for (auto* p : theta.denoiser.parameters()) p->zero_grad();
    {
      ad::Graph g;
      g.backward(loss(g, trainable(true)));
    }
    return fd_max_rel_error(theta.denoiser.parameters(), [&] {
      ad::Graph g(ad::GradMode::kInference);
      return loss(g, trainable(false)).value().item();
    });
  }
};

}  // namespace

TEST_CASE("sft loss identities and gradient") {
  Fixture f;
  Predictor oracle = [&](ad::Graph& g, ad::Var, std::span<const int>, std::span<const int>) {
    return g.constant(f.eps_w);
  };
  Predictor zero = [&](ad::Graph& g, ad::Var, std::span<const int>, std::span<const int>) {
    return g.constant(Tensor(f.eps_w.shape(), 0.0));
  };
  ad::Graph g;
  CHECK(sft_loss(g, oracle, f.x_w, f.prompts, f.t, f.eps_w, f.sched).value().item() == 0.0);
  double ms = 0;
  for (double v : f.eps_w.data()) ms += v * v;
  CHECK(sft_loss(g, zero, f.x_w, f.prompts, f.t, f.eps_w, f.sched).value().item() ==
        doctest::Approx(ms / f.eps_w.size()).epsilon(1e-14));
  CHECK(f.grad_error([&](ad::Graph& gg, const Predictor& m) {
    return sft_loss(gg, m, f.x_w, f.prompts, f.t, f.eps_w, f.sched);
  }) < 1e-5);
  CHECK_THROWS_AS(sft_loss(g, zero, f.x_w, std::vector<int>{0}, f.t, f.eps_w, f.sched), ShapeError);
}

TEST_CASE("dpo identities") {
  Fixture f;
  const NoiseModel ref = f.ref.view();
  ad::Graph g;
  DpoConfig cfg;
  auto same = frozen_predictor(ref);
  auto terms = dpo_terms(g, same, ref, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, cfg, f.sched);
  CHECK(std::abs(terms.loss.value().item() - std::numbers::ln2) < 1e-12);
  for (double v : terms.inside.value().data()) CHECK(v == 0.0);

  auto a = dpo_terms(g, f.trainable(false), ref, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, cfg, f.sched);
  auto b = dpo_terms(g, f.trainable(false), ref, f.x_l, f.x_w, f.prompts, f.t, f.eps_l, f.eps_w, cfg, f.sched);
  double swapped = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.inside.value()[i] == -b.inside.value()[i]);
    const double x = a.inside.value()[i];
    swapped += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  CHECK(b.loss.value().item() == doctest::Approx(swapped / 3).epsilon(1e-12));
  CHECK_THROWS_AS(dpo_loss(g, same, ref, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, DpoConfig{0.0}, f.sched),
                  ValidationError);
}

TEST_CASE("dpo is positive when the model improves only on the winner") {
  Fixture f;
  const NoiseModel ref = f.ref.view();
  const double delta = 1e-4;
  // theta predicts the ref output moved toward the winner's true noise.
  Predictor better = [&](ad::Graph& g, ad::Var x, std::span<const int> tt, std::span<const int> pp) {
    Tensor pred = predict_noise(ref, x.value(), tt, pp);
    const std::size_t half = pred.size() / 2;
    for (std::size_t i = 0; i < half; ++i) pred[i] += 0.5 * (f.eps_w[i] - pred[i]);
    return g.constant(pred);
  };
  ad::Graph g;
  auto terms = dpo_terms(g, better, ref, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, DpoConfig{delta}, f.sched);
  for (double v : terms.inside.value().data()) CHECK(v > 0.0);
  CHECK(terms.loss.value().item() < std::numbers::ln2);
}

TEST_CASE("dpo gradient matches finite differences") {
  Fixture f;
  const NoiseModel ref = f.ref.view();
  for (double beta : {2500.0, 5.0}) {
    CHECK(f.grad_error([&](ad::Graph& g, const Predictor& m) {
      return dpo_loss(g, m, ref, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, DpoConfig{beta}, f.sched);
    }) < 1e-5);
  }
}

TEST_CASE("statistics matching closed form") {
  Fixture f;
  const NoiseModel base = f.ref.view();
  ad::Graph g;
  CHECK(stat_matching_loss(g, frozen_predictor(base), base, f.x_w, f.prompts, f.t, f.eps_w, f.z, f.sched)
            .value()
            .item() == 0.0);

  const Tensor l_t = forward_diffuse_rows(f.x_w, f.t, f.eps_w, f.sched);
  const Tensor e_base = predict_noise(base, l_t, f.t, f.prompts);
  const Tensor e_theta = predict_noise(f.theta.view(), l_t, f.t, f.prompts);
  double expect = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    const double k = stat_kappa(f.t[r], f.sched);
    for (std::size_t c = 0; c < 2; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < 4; ++j) d += e_theta[(r * 2 + c) * 4 + j] - e_base[(r * 2 + c) * 4 + j];
      expect += k * k * (d / 4) * (d / 4);
    }
  }
  expect /= 3;
  const double got =
      stat_matching_loss(g, f.trainable(false), base, f.x_w, f.prompts, f.t, f.eps_w, f.z, f.sched).value().item();
  CHECK(std::abs(got - expect) < 1e-9);

  // Constant offset on one channel.
  Predictor offset = [&](ad::Graph& gg, ad::Var x, std::span<const int> tt, std::span<const int> pp) {
    Tensor p = predict_noise(base, x.value(), tt, pp);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) p[(r * 2 + 1) * 4 + j] += 0.3;
    return gg.constant(p);
  };
  std::vector<int> one_t{4, 4, 4};
  const double k = stat_kappa(4, f.sched);
  CHECK(stat_matching_loss(g, offset, base, f.x_w, f.prompts, one_t, f.eps_w, f.z, f.sched).value().item() ==
        doctest::Approx(k * k * 0.09).epsilon(1e-12));
  std::vector<int> zero_t{0, 1, 1};
  CHECK_THROWS_AS(stat_matching_loss(g, offset, base, f.x_w, f.prompts, zero_t, f.eps_w, f.z, f.sched),
                  ValidationError);
}

TEST_CASE("statistics, combined gradients and lambda zero") {
  Fixture f;
  const NoiseModel base = f.ref.view();
  CHECK(f.grad_error([&](ad::Graph& g, const Predictor& m) {
    return stat_matching_loss(g, m, base, f.x_w, f.prompts, f.t, f.eps_w, f.z, f.z2, f.sched);
  }) < 1e-5);
  CHECK(f.grad_error([&](ad::Graph& g, const Predictor& m) {
    return easy_objective(g, m, f.ref.view(), base, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, f.z, f.z2, {},
                          {}, f.sched);
  }) < 1e-5);
  ad::Graph g;
  const double plain =
      dpo_loss(g, f.trainable(false), base, f.x_w, f.x_l, f.prompts, f.t, f.eps_w, f.eps_l, {}, f.sched).value().item();
  const double combined = easy_objective(g, f.trainable(false), base, base, f.x_w, f.x_l, f.prompts, f.t, f.eps_w,
                                         f.eps_l, f.z, f.z2, {}, StatConfig{0.0, true}, f.sched)
                              .value()
                              .item();
  CHECK(plain == combined);
  const double degenerate = easy_objective(g, frozen_predictor(base), base, base, f.x_w, f.x_l, f.prompts, f.t,
                                           f.eps_w, f.eps_l, f.z, f.z2, {}, {}, f.sched)
                                .value()
                                .item();
  CHECK(std::abs(degenerate - std::numbers::ln2) < 1e-12);
}

TEST_CASE("latent adaptive normalization") {
  RngStream rng(3);
  Tensor base = random_tensor({2, 3, 4, 4}, rng);
  CHECK(max_abs_diff(lan_transform(base, base), base) < 1e-12);
  Tensor affine = base;
  for (auto& v : affine.data()) v = 2 * v + 3;
  CHECK(max_abs_diff(lan_transform(affine, base), base) < 1e-12);
  Tensor single = random_tensor({3, 4, 4}, rng), single_base = random_tensor({3, 4, 4}, rng);
  Tensor out = lan_transform(single, single_base);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, mb = 0;
    for (std::size_t j = 0; j < 16; ++j) {
      m += out[c * 16 + j];
      mb += single_base[c * 16 + j];
    }
    CHECK(std::abs(m - mb) / 16 < 1e-9);
  }
  Tensor flat({3, 4, 4}, 1.0);
  CHECK_THROWS_AS(lan_transform(flat, single_base), NumericError);
  CHECK_THROWS_AS(lan_transform(flat, base), ShapeError);
}

TEST_CASE("winner and loser statistic cosine distances") {
  RngStream rng(4);
  std::vector<Tensor> w{random_tensor({3, 4, 4}, rng), random_tensor({3, 4, 4}, rng)};
  auto same = latent_stat_cosine(w, w);
  CHECK(same.first == 0.0);
  CHECK(same.second == 0.0);
  Tensor a({2, 2, 2}, 0.0), b({2, 2, 2}, 0.0);
  for (std::size_t j = 0; j < 4; ++j) {
    a[j] = j % 2 ? 2.0 : 0.0;
    b[4 + j] = j % 2 ? 2.0 : 0.0;
  }
  CHECK(latent_stat_cosine({a}, {b}).first == doctest::Approx(1.0));
  CHECK_THROWS_AS(latent_stat_cosine({}, w), ValidationError);
}
