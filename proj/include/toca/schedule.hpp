#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "toca/model.hpp"

namespace toca {

/// How a layer's cache ratio depends on its module type.
enum class RatioMode {
    /// Every module, the output head included, uses R x r_l x r_t. With R = 1
    /// this is whole-model (naive) feature caching.
    Uniform,
    /// Self-attention caches every token at non-fresh steps; MLP and
    /// cross-attention scale R by their share of the per-block flops,
    /// renormalized to a mean of 1.
    FlopsShare,
    /// Compute fraction (1 - R x r_l x r_t) is scaled by 1 - 0.4 lambda_type for
    /// self-attention and 1 + 0.6 lambda_type for the MLP; cross-attention is
    /// left at 1.
    TypeTradeoff,
};

/// Steps in [begin, end) use a fixed cycle length instead of N_t.
struct FixedCycleWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t cycle = 2;

    bool operator==(const FixedCycleWindow&) const = default;
};

struct CacheSchedule {
    double ratio = 0.93;             // R, fraction of tokens cached
    double base_cycle = 3.0;         // N0, steps between fresh steps
    double lambda_attention = 1.0;   // weight of s1
    double lambda_entropy = 1.0;     // weight of s2
    double lambda_frequency = 0.25;  // weight of s3
    double lambda_spatial = 1.0;     // boost of the per-cell winner
    double depth_slope = 0.06;       // lambda_l
    double step_slope = 0.03;        // lambda_t
    double type_tradeoff = 2.5;      // lambda_type
    double cycle_slope = 0.4;        // w_t
    std::size_t grid = 2;            // spatial cell size G
    double center = 1.0;             // c; 0.5 reproduces the literal printed formulas
    bool cfg_coupled = true;
    RatioMode mode = RatioMode::TypeTradeoff;
    std::optional<FixedCycleWindow> fixed_window;

    /// Throws std::invalid_argument for out-of-range values.
    void validate() const;

    bool operator==(const CacheSchedule&) const = default;
};

enum class Profile { Off, NaiveFull, TocaDit, TocaPixart, Custom };

std::string_view to_string(Profile profile);
std::string_view to_string(RatioMode mode);
/// Throws std::invalid_argument for an unknown name.
Profile parse_profile(std::string_view name);
RatioMode parse_ratio_mode(std::string_view name);

/// Schedule defaults for a profile; Off has none. Custom starts from the
/// DiT defaults.
std::optional<CacheSchedule> profile_schedule(Profile profile);

/// N_t = N0 / (c + w_t (t/T - 0.5)), unrounded. Infinite when the
/// denominator is not positive.
double dynamic_cycle_length(const CacheSchedule& schedule, std::size_t step, std::size_t total);

struct CyclePlan {
    std::vector<std::size_t> fresh_steps;
    /// Per step: length of the cycle the step belongs to (>= 1).
    std::vector<std::size_t> cycle_length;
    std::vector<bool> fresh;

    bool is_fresh(std::size_t step) const { return fresh.at(step); }
};

/// Step 0 is fresh; a fresh step at t with cycle round(N_t) puts the next one
/// at t + round(N_t). Throws std::invalid_argument when total == 0.
CyclePlan cycle_plan(const CacheSchedule& schedule, std::size_t total);

/// r_l = c + lambda_l (l/L - 0.5)
double depth_factor(const CacheSchedule& schedule, std::size_t layer, std::size_t depth);
/// r_t = c + lambda_t (0.5 - t/T)
double step_factor(const CacheSchedule& schedule, std::size_t step, std::size_t total);

/// r_type multipliers for FlopsShare mode.
struct TypeShares {
    double mlp = 1.0;
    double cross_attention = 0.0;
};

TypeShares flops_type_shares(const ModelConfig& config);

struct RatioContext {
    std::size_t depth = 1;
    std::size_t total_steps = 1;
    TypeShares shares;
};

RatioContext make_ratio_context(const ModelConfig& config, std::size_t total_steps);

/// Cache ratio of one dispatch at a non-fresh step, clamped to [0, 1].
/// When R x r_l x r_t is 0 nothing is cached in any mode.
double effective_cache_ratio(std::size_t layer, std::size_t step, ModuleKind kind,
                             const CacheSchedule& schedule, const RatioContext& context);

}  // namespace toca
