#pragma once

// Raw dense kernels. Two implementations share one contract: every output
// element is produced by exactly the same sequence of floating point
// operations, so the OpenMP kernels are bitwise equal to the serial ones.
// Work is split across output rows only; no cross-thread reductions.

#include <cstddef>
#include <span>

namespace toca::kernels {

namespace reference {

// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_transposed(std::span<const double> a, std::span<const double> b,
                       std::span<double> c, std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<double> m, std::size_t rows, std::size_t cols);

}  // namespace reference

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_transposed(std::span<const double> a, std::span<const double> b,
                       std::span<double> c, std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<double> m, std::size_t rows, std::size_t cols);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace toca::kernels
