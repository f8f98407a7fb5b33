#include "toca/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace toca {

std::vector<double> score_s1(const Matrix& attention, double lambda) {
    std::vector<double> sums(attention.cols(), 0.0);
    for (std::size_t i = 0; i < attention.rows(); ++i) {
        const auto row = attention.row(i);
        double row_sum = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            sums[j] += row[j];
            row_sum += row[j];
        }
        if (std::abs(row_sum - 1.0) > kStochasticTolerance) {
            throw std::invalid_argument("score_s1: row " + std::to_string(i) + " sums to " +
                                        std::to_string(row_sum));
        }
    }
    for (double& s : sums) {
        s *= lambda;
    }
    return sums;
}

std::vector<double> score_s2(const Matrix& cross_attention) {
    std::vector<double> entropy(cross_attention.rows(), 0.0);
    for (std::size_t i = 0; i < cross_attention.rows(); ++i) {
        double h = 0.0;
        for (double c : cross_attention.row(i)) {
            if (c > 0.0) {
                h -= c * std::log(c);
            }
        }
        entropy[i] = std::max(0.0, h);
    }
    return entropy;
}

std::vector<double> score_s3(std::span<const std::uint32_t> counters, double cycle) {
    std::vector<double> s(counters.size());
    for (std::size_t i = 0; i < counters.size(); ++i) {
        s[i] = static_cast<double>(counters[i]) / cycle;
    }
    return s;
}

std::vector<double> weighted_score(std::span<const double> s1, std::span<const double> s2,
                                   std::span<const double> s3, double lambda1, double lambda2,
                                   double lambda3) {
    const std::size_t n = std::max({s1.size(), s2.size(), s3.size()});
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        if (!s1.empty()) v += lambda1 * s1[i];
        if (!s2.empty()) v += lambda2 * s2[i];
        if (!s3.empty()) v += lambda3 * s3[i];
        out[i] = v;
    }
    return out;
}

std::vector<std::size_t> spatial_cell_winners(std::span<const double> base, std::size_t grid_h,
                                              std::size_t grid_w, std::size_t cell) {
    if (base.size() != grid_h * grid_w) {
        throw std::invalid_argument("spatial_cell_winners: score length does not match grid");
    }
    if (cell == 0 || cell > std::min(grid_h, grid_w)) {
        throw std::invalid_argument("spatial_cell_winners: cell size " + std::to_string(cell) +
                                    " invalid for a " + std::to_string(grid_h) + "x" +
                                    std::to_string(grid_w) + " grid");
    }
    std::vector<std::size_t> winners;
    for (std::size_t r0 = 0; r0 < grid_h; r0 += cell) {
        for (std::size_t c0 = 0; c0 < grid_w; c0 += cell) {
            std::size_t best = r0 * grid_w + c0;
            for (std::size_t r = r0; r < std::min(grid_h, r0 + cell); ++r) {
                for (std::size_t c = c0; c < std::min(grid_w, c0 + cell); ++c) {
                    const std::size_t idx = r * grid_w + c;
                    // Row-major visit order: strict > keeps the lowest index on ties.
                    if (base[idx] > base[best]) {
                        best = idx;
                    }
                }
            }
            winners.push_back(best);
        }
    }
    return winners;
}

std::vector<double> apply_spatial_boost(std::span<const double> base, std::size_t grid_h,
                                        std::size_t grid_w, std::size_t cell, double lambda4) {
    std::vector<double> boosted(base.begin(), base.end());
    if (lambda4 == 0.0) {
        return boosted;
    }
    for (std::size_t idx : spatial_cell_winners(base, grid_h, grid_w, cell)) {
        boosted[idx] = base[idx] * (1.0 + lambda4);
    }
    return boosted;
}

ComputeMask all_compute_mask(std::size_t tokens) {
    ComputeMask m;
    m.compute.resize(tokens);
    std::iota(m.compute.begin(), m.compute.end(), std::size_t{0});
    m.gamma.assign(tokens, 1);
    return m;
}

ComputeMask all_cache_mask(std::size_t tokens) {
    ComputeMask m;
    m.cache.resize(tokens);
    std::iota(m.cache.begin(), m.cache.end(), std::size_t{0});
    m.gamma.assign(tokens, 0);
    return m;
}

std::size_t cached_token_count(double ratio, std::size_t tokens) {
    const double r = std::clamp(ratio, 0.0, 1.0);
    return std::min(tokens, static_cast<std::size_t>(std::floor(r * static_cast<double>(tokens))));
}

ComputeMask select_compute_set(std::span<const double> scores, double ratio) {
    const std::size_t n = scores.size();
    const std::size_t n_cache = cached_token_count(ratio, n);
    if (n_cache == 0) return all_compute_mask(n);
    if (n_cache == n) return all_cache_mask(n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto lower = [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cache),
                     order.end(), lower);

    ComputeMask m;
    m.gamma.assign(n, 1);
    for (std::size_t k = 0; k < n_cache; ++k) {
        m.gamma[order[k]] = 0;
    }
    m.cache.reserve(n_cache);
    m.compute.reserve(n - n_cache);
    for (std::size_t i = 0; i < n; ++i) {
        (m.gamma[i] != 0 ? m.compute : m.cache).push_back(i);
    }
    return m;
}

std::vector<ComputeMask> select_compute_set(const std::vector<std::vector<double>>& halves,
                                            double ratio, bool coupled) {
    std::vector<ComputeMask> masks;
    if (halves.empty()) {
        return masks;
    }
    if (!coupled || halves.size() == 1) {
        for (const auto& s : halves) {
            masks.push_back(select_compute_set(s, ratio));
        }
        return masks;
    }
    std::vector<double> summed(halves.front().size(), 0.0);
    for (const auto& s : halves) {
        if (s.size() != summed.size()) {
            throw std::invalid_argument("select_compute_set: halves differ in token count");
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            summed[i] += s[i];
        }
    }
    masks.assign(halves.size(), select_compute_set(summed, ratio));
    return masks;
}

}  // namespace toca
