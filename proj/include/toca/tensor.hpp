#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace toca {

/// Dense row-major matrix of 64-bit reals.
///
/// This is the only numeric container in the project: token features (N x D),
/// projection weights, attention maps and noise all live in a Matrix. Token
/// features keep their H x W grid shape in the ModelConfig, not here.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a x b with the inner index summed in ascending order. Throws
/// std::invalid_argument on a dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a x b^T, same summation contract as matmul.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

/// Tanh-approximated GELU, applied elementwise in place.
void gelu_inplace(Matrix& m);

/// Per-row layer normalization without affine parameters.
Matrix layer_norm_rows(const Matrix& m, double eps = 1e-6);

Matrix transpose(const Matrix& m);
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

void add_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double factor);

double frobenius_norm(const Matrix& m);
double frobenius_norm(std::span<const double> v);

/// sqrt(sum (a_ij - b_ij)^2). Throws std::invalid_argument on shape mismatch.
double frobenius_distance(const Matrix& a, const Matrix& b);

/// I.i.d. N(0, sigma^2) samples, fully determined by `seed` (see rng.hpp).
/// Throws std::invalid_argument for sigma < 0.
Matrix gaussian(std::size_t rows, std::size_t cols, double sigma, std::uint64_t seed);

/// True when both matrices have the same shape and identical bit patterns.
bool bitwise_equal(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

}  // namespace toca
