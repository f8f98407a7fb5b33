#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

#include "toca/flop_counter.hpp"
#include "toca/kernels.hpp"
#include "toca/rng.hpp"
#include "toca/tensor.hpp"

namespace toca {

namespace {

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape(a) + " vs " +
                                    shape(b));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("Matrix::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ " + shape(a) + " x " +
                                    shape(b));
    }
    Matrix c(a.rows(), b.cols());
    detail::count_matmul(2ULL * a.rows() * a.cols() * b.cols());
    kernels::parallel::matmul(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.cols());
    return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_transposed: inner dimensions differ " + shape(a) +
                                    " x " + shape(b) + "^T");
    }
    Matrix c(a.rows(), b.rows());
    detail::count_matmul(2ULL * a.rows() * a.cols() * b.rows());
    kernels::parallel::matmul_transposed(a.values(), b.values(), c.values(), a.rows(), a.cols(),
                                         b.rows());
    return c;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out = m;
    detail::count_softmax(5ULL * m.size());
    kernels::parallel::softmax_rows(out.values(), out.rows(), out.cols());
    return out;
}

void gelu_inplace(Matrix& m) {
    detail::count_activation(6ULL * m.size());
    const double k = std::sqrt(2.0 / std::numbers::pi);
    for (double& v : m.values()) {
        v = 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
    }
}

Matrix layer_norm_rows(const Matrix& m, double eps) {
    Matrix out(m.rows(), m.cols());
    const auto n = static_cast<double>(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto in = m.row(i);
        double mean = 0.0;
        for (double v : in) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : in) {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < in.size(); ++j) {
            dst[j] = (in[j] - mean) * inv;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            t(j, i) = m(i, j);
        }
    }
    return t;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) {
            throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) +
                                    " out of range for " + shape(m));
        }
        const auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_inplace");
    auto dst = a.values();
    const auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

void scale_inplace(Matrix& a, double factor) {
    for (double& v : a.values()) {
        v *= factor;
    }
}

double frobenius_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

double frobenius_norm(const Matrix& m) { return frobenius_norm(m.values()); }

double frobenius_distance(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_distance");
    const auto x = a.values();
    const auto y = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

Matrix gaussian(std::size_t rows, std::size_t cols, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) {
        throw std::invalid_argument("gaussian: sigma must be >= 0, got " + std::to_string(sigma));
    }
    Matrix out(rows, cols);
    if (sigma == 0.0) {
        return out;
    }
    Rng rng(seed);
    for (double& v : out.values()) {
        v = sigma * rng.normal();
    }
    return out;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        return false;
    }
    return a.size() == 0 ||
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(),
                       [](double v) { return std::isfinite(v); });
}

}  // namespace toca
