#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "toca/tensor.hpp"

namespace toca {

/// Tolerance on row sums for maps accepted as row-stochastic.
inline constexpr double kStochasticTolerance = 1e-6;

/// lambda * column sums of a row-stochastic self-attention map: how much each
/// token contributes to all others. Throws std::invalid_argument when a row
/// sum is off by more than kStochasticTolerance.
std::vector<double> score_s1(const Matrix& attention, double lambda = 1.0);

/// Row entropies -sum c ln c of a cross-attention map (0 ln 0 = 0). A map with
/// no columns (class-conditional model) yields zeros.
std::vector<double> score_s2(const Matrix& cross_attention);

/// n_i / cycle.
std::vector<double> score_s3(std::span<const std::uint32_t> counters, double cycle);

/// lambda1 s1 + lambda2 s2 + lambda3 s3, elementwise. Empty inputs count as 0.
std::vector<double> weighted_score(std::span<const double> s1, std::span<const double> s2,
                                   std::span<const double> s3, double lambda1, double lambda2,
                                   double lambda3);

/// Per G x G cell of the H x W grid, the flat index of the cell's highest
/// base score (ties go to the lowest index). Trailing partial cells count as
/// cells. Throws std::invalid_argument when G is 0 or exceeds min(H, W).
std::vector<std::size_t> spatial_cell_winners(std::span<const double> base, std::size_t grid_h,
                                              std::size_t grid_w, std::size_t cell);

/// S = base * (1 + lambda4) for each cell winner, S = base elsewhere.
std::vector<double> apply_spatial_boost(std::span<const double> base, std::size_t grid_h,
                                        std::size_t grid_w, std::size_t cell, double lambda4);

struct ComputeMask {
    std::vector<std::size_t> compute;  // ascending
    std::vector<std::size_t> cache;    // ascending
    std::vector<std::uint8_t> gamma;   // 1 = computed

    std::size_t tokens() const { return gamma.size(); }
};

ComputeMask all_compute_mask(std::size_t tokens);
ComputeMask all_cache_mask(std::size_t tokens);

/// floor(ratio * N); ratio is clamped to [0, 1].
std::size_t cached_token_count(double ratio, std::size_t tokens);

/// Caches the floor(ratio * N) lowest-scoring tokens, ties broken toward the
/// lower index.
ComputeMask select_compute_set(std::span<const double> scores, double ratio);

/// One mask per batch half. Coupled selection sums the halves' scores per
/// token and shares the resulting mask.
std::vector<ComputeMask> select_compute_set(const std::vector<std::vector<double>>& halves,
                                            double ratio, bool coupled);

}  // namespace toca
