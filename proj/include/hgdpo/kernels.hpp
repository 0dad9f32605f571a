// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

// Dense row-major GEMM kernels. Every variant overwrites C.
//
// The blocked kernels in hgdpo::kernels are OpenMP-parallel over row blocks
// of C; hgdpo::kernels::serial holds the plain triple-loop reference used by
// the tests and the benchmark. Both accumulate each C[i][j] with std::fma in
// ascending k order, so a row of C never depends on which other rows are in
// the batch or on the thread count.
namespace hgdpo::kernels {

/// C[m x n] = A[m x k] * B[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);

/// C[m x n] = A[m x k] * B[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);

/// C[k x n] = A[m x k]^T * B[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);

/// out[cols x rows] = in[rows x cols]^T
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows, std::size_t cols);

/// Number of OpenMP threads the blocked kernels will use (1 without OpenMP).
int max_threads();

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);

}  // namespace serial

}  // namespace hgdpo::kernels
