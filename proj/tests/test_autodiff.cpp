// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>

#include "hgdpo/autodiff.hpp"
#include "hgdpo/errors.hpp"
#include "support.hpp"

namespace ad = hgdpo::ad;
using hgdpo::Shape;
using hgdpo::Tensor;
using hgdpo::testing::fd_max_rel_error;
using hgdpo::testing::random_tensor;

namespace {

using Build = std::function<ad::Var(ad::Graph&, std::vector<ad::Var>&)>;

// Builds sum(w * f(params)) with a fixed random w so every output element
// contributes, and compares gradients against central differences.
double check_op(std::vector<Shape> shapes, const Build& build, std::uint64_t seed = 1) {
  hgdpo::RngStream rng(seed);
  std::vector<ad::Parameter> params;
  for (std::size_t i = 0; i < shapes.size(); ++i) params.emplace_back("p", random_tensor(shapes[i], rng));
  Tensor weights;
  auto eval = [&](bool backward) {
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (auto& p : params) vars.push_back(g.parameter(p));
    ad::Var out = build(g, vars);
    if (weights.empty()) weights = random_tensor(out.shape(), rng);
    ad::Var loss = ad::sum(ad::mul(out, g.constant(weights)));
    if (backward) g.backward(loss);
    return loss.value().item();
  };
  eval(true);
  std::vector<ad::Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return fd_max_rel_error(ptrs, [&] { return eval(false); });
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  const Shape s{3, 4};
  CHECK(check_op({s, s}, [](ad::Graph&, auto& v) { return ad::add(v[0], v[1]); }) < 1e-6);
  CHECK(check_op({s, s}, [](ad::Graph&, auto& v) { return ad::sub(v[0], v[1]); }) < 1e-6);
  CHECK(check_op({s, s}, [](ad::Graph&, auto& v) { return ad::mul(v[0], v[1]); }) < 1e-6);
  CHECK(check_op({s, {1}}, [](ad::Graph&, auto& v) { return ad::mul(v[0], v[1]); }) < 1e-6);
  CHECK(check_op({{1}, s}, [](ad::Graph&, auto& v) { return ad::add(v[0], v[1]); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::scale(v[0], -2.5); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::add_scalar(v[0], 0.7); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::square(v[0]); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::relu(v[0]); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::silu(v[0]); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::sigmoid(v[0]); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::log_sigmoid(v[0]); }) < 1e-6);
  CHECK(check_op({s}, [](ad::Graph&, auto& v) { return ad::neg(v[0]); }) < 1e-6);
}

TEST_CASE("linear algebra and reduction gradients match finite differences") {
  CHECK(check_op({{3, 5}, {5, 2}}, [](ad::Graph&, auto& v) { return ad::matmul(v[0], v[1]); }) < 1e-6);
  CHECK(check_op({{4, 3}, {3, 6}, {6}}, [](ad::Graph&, auto& v) { return ad::linear(v[0], v[1], v[2]); }) < 1e-6);
  CHECK(check_op({{2, 3, 4}}, [](ad::Graph&, auto& v) { return ad::sum(v[0]); }) < 1e-6);
  CHECK(check_op({{2, 3, 4}}, [](ad::Graph&, auto& v) { return ad::mean(v[0]); }) < 1e-6);
  CHECK(check_op({{3, 2, 2}}, [](ad::Graph&, auto& v) { return ad::row_mean(v[0]); }) < 1e-6);
  CHECK(check_op({{3, 4}}, [](ad::Graph&, auto& v) { return ad::row_scale(v[0], {0.5, -1.0, 2.0}); }) < 1e-6);
  CHECK(check_op({{3, 2, 2}}, [](ad::Graph&, auto& v) { return ad::channel_mean(v[0]); }) < 1e-6);
  CHECK(check_op({{2, 3, 2, 2}}, [](ad::Graph&, auto& v) { return ad::channel_mean(v[0]); }) < 1e-6);
  CHECK(check_op({{3, 2}, {3, 4}}, [](ad::Graph&, auto& v) { return ad::concat({v[0], v[1]}); }) < 1e-6);
  CHECK(check_op({{2, 6}}, [](ad::Graph&, auto& v) { return ad::reshape(v[0], {3, 4}); }) < 1e-6);
  CHECK(check_op({{5, 3}}, [](ad::Graph&, auto& v) { return ad::slice_rows(v[0], 1, 4); }) < 1e-6);
}

TEST_CASE("reused nodes accumulate gradients") {
  CHECK(check_op({{3, 3}}, [](ad::Graph&, auto& v) { return ad::mul(ad::silu(v[0]), ad::matmul(v[0], v[0])); }) <
        1e-6);
}

TEST_CASE("shape mismatches raise ShapeError") {
  ad::Graph g;
  auto a = g.constant(Tensor({2, 3}));
  auto b = g.constant(Tensor({3, 2}));
  CHECK_THROWS_AS(ad::add(a, b), hgdpo::ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), hgdpo::ShapeError);
  CHECK_THROWS_AS(ad::reshape(a, {4}), hgdpo::ShapeError);
  CHECK_THROWS_AS(ad::slice_rows(a, 1, 3), hgdpo::ShapeError);
  CHECK_THROWS_AS(ad::row_scale(a, {1.0}), hgdpo::ShapeError);
  CHECK_THROWS(g.backward(a));
}

TEST_CASE("inference graphs carry no gradients and variables expose theirs") {
  ad::Parameter p("p", Tensor({2}, 1.0));
  {
    ad::Graph g(ad::GradMode::kInference);
    auto v = g.parameter(p);
    CHECK_FALSE(v.requires_grad());
  }
  ad::Graph g;
  auto x = g.variable(Tensor({2}, std::vector<double>{1.0, 3.0}));
  auto loss = ad::sum(ad::square(x));
  g.backward(loss);
  CHECK(g.grad(x)[1] == 6.0);
  CHECK(loss.value().item() == 10.0);
}

TEST_CASE("log_sigmoid is stable for large inputs") {
  ad::Graph g;
  auto x = g.variable(Tensor({2}, std::vector<double>{-800.0, 800.0}));
  auto y = ad::log_sigmoid(x);
  CHECK(y.value()[0] == doctest::Approx(-800.0));
  CHECK(y.value()[1] == 0.0);
  g.backward(ad::sum(y));
  CHECK(g.grad(x)[0] == doctest::Approx(1.0));
  CHECK(g.grad(x)[1] == doctest::Approx(0.0));
}
