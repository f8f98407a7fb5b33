#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "toca/model.hpp"
#include "toca/sampler.hpp"

namespace toca {

/// Per-row Frobenius norm of a - b.
std::vector<double> token_distances(const Matrix& a, const Matrix& b);

struct RedundancyProfile {
    std::vector<std::size_t> layers;
    std::size_t steps = 0;   // T; distances cover step pairs (s, s+1) for s < T-1
    std::size_t tokens = 0;
    /// distances[k][s][i]: token i of layer layers[k], between steps s and s+1.
    std::vector<std::vector<std::vector<double>>> distances;
    /// layer_means[k][s]: mean over tokens.
    std::vector<std::vector<double>> layer_means;
};

/// Follows the uncached trajectory and records, for each layer of interest,
/// how far every token's block output moves between consecutive steps.
/// Throws std::invalid_argument for a layer outside the model.
RedundancyProfile measure_temporal_redundancy(const Model& model, const Conditioning& cond,
                                              const GenerationConfig& config,
                                              const std::vector<std::size_t>& layers);

enum class NoiseScale {
    Absolute,  // noise ~ N(0, sigma^2)
    Relative,  // noise ~ N(0, (sigma |x_i|)^2) with x_i the clean input row
};

struct PropagationSite {
    std::size_t layer = 0;
    ModuleKind kind = ModuleKind::SelfAttention;
    std::size_t token = 0;
};

struct PropagationProfile {
    PropagationSite site;
    double sigma = 0.0;
    NoiseScale scale = NoiseScale::Absolute;
    /// Per-token |eps_perturbed - eps_clean|, length N.
    std::vector<double> errors;
    /// Mean token norm of the clean eps.
    double mean_token_norm = 0.0;
    /// errors divided by mean_token_norm (zero when that norm is zero).
    std::vector<double> normalized;
};

/// Runs the denoiser twice on batch element 0 of (x_t, cond), once clean and
/// once with Gaussian noise added to the input row `site.token` of the
/// module at the site. Throws std::invalid_argument for an invalid site or a
/// negative sigma.
PropagationProfile measure_error_propagation(const Model& model, const Matrix& x_t, double t,
                                             const Conditioning& cond,
                                             const PropagationSite& site, double sigma,
                                             NoiseScale scale, std::uint64_t seed);

struct FrequencyMap {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<std::uint64_t> counts;  // row-major H x W

    std::uint64_t total() const;
    std::uint64_t max() const;
};

/// Throws std::invalid_argument when the grid does not match the run.
FrequencyMap build_cache_frequency_map(const RunStats& stats, std::size_t grid_h,
                                       std::size_t grid_w);

/// Binary PGM (P5). Darker pixels were cached more often; `comment` lands in
/// a header comment line.
void write_pgm(std::ostream& out, const FrequencyMap& map, const std::string& comment);

struct Quantiles {
    double min = 0, p25 = 0, median = 0, p75 = 0, p95 = 0, max = 0, mean = 0;
};

/// Linear-interpolated quantiles; all zero for an empty sample.
Quantiles quantiles(std::vector<double> values);

void write_redundancy_csv(std::ostream& out, const RedundancyProfile& profile);
void write_propagation_csv(std::ostream& out, const PropagationProfile& profile);
std::string redundancy_summary_json(const RedundancyProfile& profile);
std::string propagation_summary_json(const PropagationProfile& profile);
std::string frequency_summary_json(const FrequencyMap& map);

}  // namespace toca
