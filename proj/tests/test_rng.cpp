// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "hgdpo/errors.hpp"
#include "hgdpo/rng.hpp"

using hgdpo::RngStream;

TEST_CASE("streams are pure functions of seed and counter") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(42, 50);
  RngStream d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  CHECK(c.next_u64() == d.next_u64());
  CHECK(RngStream(1).next_u64() != RngStream(2).next_u64());
}

TEST_CASE("derived seeds are distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(hgdpo::derive_seed(s, i));
  CHECK(seen.size() == 1000);
  CHECK(RngStream(7).fork(3).seed() == hgdpo::derive_seed(7, 3));
}

TEST_CASE("uniform and normal moments") {
  RngStream rng(123);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("uniform_int range and counts") {
  RngStream rng(9);
  int counts[5] = {};
  for (int i = 0; i < 50000; ++i) {
    const auto v = rng.uniform_int(3, 8);
    REQUIRE(v >= 3);
    REQUIRE(v < 8);
    ++counts[v - 3];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK_THROWS_AS(rng.uniform_int(4, 4), hgdpo::ValidationError);
}
