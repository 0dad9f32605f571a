// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hgdpo/errors.hpp"

namespace hgdpo::kernels {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t c, std::size_t ea, std::size_t eb, std::size_t ec,
                 const char* op) {
  if (a < ea || b < eb || c < ec) throw ShapeError(std::string(op) + ": buffer smaller than stated dimensions");
}

constexpr std::size_t kRows = 4;
constexpr std::size_t kCols = 32;

// C[i0:i0+kRows, j0:j0+kCols] over the full k range, accumulators in registers.
inline void micro_full(const double* a, const double* b, double* c, std::size_t i0, std::size_t j0, std::size_t k,
                       std::size_t n) {
  double acc[kRows][kCols] = {};
  const double* a0 = a + (i0 + 0) * k;
  const double* a1 = a + (i0 + 1) * k;
  const double* a2 = a + (i0 + 2) * k;
  const double* a3 = a + (i0 + 3) * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + j0;
    const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
#pragma GCC unroll 32
    for (std::size_t j = 0; j < kCols; ++j) {
      const double bv = brow[j];
      acc[0][j] = std::fma(v0, bv, acc[0][j]);
      acc[1][j] = std::fma(v1, bv, acc[1][j]);
      acc[2][j] = std::fma(v2, bv, acc[2][j]);
      acc[3][j] = std::fma(v3, bv, acc[3][j]);
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    double* crow = c + (i0 + r) * n + j0;
    for (std::size_t j = 0; j < kCols; ++j) crow[j] = acc[r][j];
  }
}

// Arbitrary tile: rows [i0, i1) x cols [j0, j1).
inline void micro_edge(const double* a, const double* b, double* c, std::size_t i0, std::size_t i1, std::size_t j0,
                       std::size_t j1, std::size_t k, std::size_t n) {
  for (std::size_t i = i0; i < i1; ++i) {
    double acc[kCols] = {};
    const std::size_t w = j1 - j0;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n + j0;
      for (std::size_t j = 0; j < w; ++j) acc[j] = std::fma(av, brow[j], acc[j]);
    }
    for (std::size_t j = 0; j < w; ++j) c[i * n + j0 + j] = acc[j];
  }
}

void blocked_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t row_blocks = (m + kRows - 1) / kRows;
  const std::size_t col_blocks = (n + kCols - 1) / kCols;
  const long long tiles = static_cast<long long>(row_blocks * col_blocks);
#pragma omp parallel for schedule(static) if (tiles > 16 && m * n * k > (1u << 18))
  for (long long tile = 0; tile < tiles; ++tile) {
    const std::size_t rb = static_cast<std::size_t>(tile) / col_blocks;
    const std::size_t cb = static_cast<std::size_t>(tile) % col_blocks;
    const std::size_t i0 = rb * kRows, i1 = std::min(m, i0 + kRows);
    const std::size_t j0 = cb * kCols, j1 = std::min(n, j0 + kCols);
    if (i1 - i0 == kRows && j1 - j0 == kCols) {
      micro_full(a, b, c, i0, j0, k, n);
    } else {
      micro_edge(a, b, c, i0, i1, j0, j1, k, n);
    }
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows, std::size_t cols) {
  check_sizes(in.size(), out.size(), 0, rows * cols, rows * cols, 0, "transpose");
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile), c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t q = c0; q < c1; ++q) out[q * rows + r] = in[r * cols + q];
      }
    }
  }
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  check_sizes(a.size(), b.size(), c.size(), m * k, k * n, m * n, "gemm_nn");
  blocked_nn(a.data(), b.data(), c.data(), m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  check_sizes(a.size(), b.size(), c.size(), m * k, n * k, m * n, "gemm_nt");
  std::vector<double> bt(k * n);
  transpose(b.first(n * k), bt, n, k);
  blocked_nn(a.data(), bt.data(), c.data(), m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  check_sizes(a.size(), b.size(), c.size(), m * k, m * n, k * n, "gemm_tn");
  std::vector<double> at(k * m);
  transpose(a.first(m * k), at, m, k);
  blocked_nn(at.data(), b.data(), c.data(), k, m, n);
}

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  check_sizes(a.size(), b.size(), c.size(), m * k, k * n, m * n, "serial::gemm_nn");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[p * n + j], acc);
      c[i * n + j] = acc;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  check_sizes(a.size(), b.size(), c.size(), m * k, n * k, m * n, "serial::gemm_nt");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[j * k + p], acc);
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  check_sizes(a.size(), b.size(), c.size(), m * k, m * n, k * n, "serial::gemm_tn");
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc = std::fma(a[i * k + p], b[i * n + j], acc);
      c[p * n + j] = acc;
    }
  }
}

}  // namespace serial

}  // namespace hgdpo::kernels
