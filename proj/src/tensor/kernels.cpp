#include "toca/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef TOCA_HAVE_OPENMP
#include <omp.h>
#endif

namespace toca::kernels {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

inline void matmul_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                       std::size_t n) {
    std::fill(c_row, c_row + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
        const double a_ip = a_row[p];
        const double* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
            c_row[j] += a_ip * b_row[j];
        }
    }
}

inline void matmul_transposed_row(const double* a_row, const double* b, double* c_row,
                                  std::size_t k, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        const double* b_row = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            acc += a_row[p] * b_row[p];
        }
        c_row[j] = acc;
    }
}

inline void softmax_row(double* row, std::size_t cols) {
    if (cols == 0) {
        return;
    }
    double max_v = row[0];
    for (std::size_t j = 1; j < cols; ++j) {
        max_v = std::max(max_v, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        row[j] = std::exp(row[j] - max_v);
        sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) {
        row[j] *= inv;
    }
}

}  // namespace

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
    }
}

void matmul_transposed(std::span<const double> a, std::span<const double> b,
                       std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        matmul_transposed_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
    }
}

void softmax_rows(std::span<double> m, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        softmax_row(m.data() + i * cols, cols);
    }
}

}  // namespace reference

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
    [[maybe_unused]] const bool big = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
    }
}

void matmul_transposed(std::span<const double> a, std::span<const double> b,
                       std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
    [[maybe_unused]] const bool big = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_transposed_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
    }
}

void softmax_rows(std::span<double> m, std::size_t rows, std::size_t cols) {
    const auto count = static_cast<std::ptrdiff_t>(rows);
    [[maybe_unused]] const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        softmax_row(m.data() + static_cast<std::size_t>(i) * cols, cols);
    }
}

}  // namespace parallel

int max_threads() {
#ifdef TOCA_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace toca::kernels
