#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "toca/cache_engine.hpp"
#include "toca/model.hpp"
#include "toca/schedule.hpp"

namespace toca {

/// beta_t for t = 1..T with the derived alpha_t = 1 - beta_t and
/// alpha_bar_t = prod alpha_i. Index 0 of every vector is unused so that
/// beta(t) reads like the math.
class NoiseSchedule {
public:
    /// Linear betas from `beta_start` to `beta_end` over `steps`.
    static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4,
                                double beta_end = 2e-2);
    /// Throws std::invalid_argument unless every beta lies in (0, 1).
    explicit NoiseSchedule(std::vector<double> betas);

    std::size_t steps() const { return betas_.size() - 1; }
    double beta(std::size_t t) const { return betas_.at(t); }
    double alpha(std::size_t t) const { return 1.0 - betas_.at(t); }
    /// alpha_bar(0) = 1.
    double alpha_bar(std::size_t t) const { return alpha_bars_.at(t); }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

/// x_{t-1} = (x_t - (1 - alpha)/sqrt(1 - alpha_bar) eps) / sqrt(alpha) + sqrt(beta) z.
/// Throws std::invalid_argument when alpha_bar = 1 with beta > 0, or on a
/// shape mismatch.
Matrix ddpm_update(const Matrix& x_t, const Matrix& eps, double alpha, double alpha_bar,
                   double beta, const Matrix* z);

/// DDPM reverse step from t (>= 1) with z drawn from the (seed, t) stream; z = 0 at t = 1.
Matrix ddpm_step(const Matrix& x_t, const Matrix& eps, std::size_t t,
                 const NoiseSchedule& schedule, std::uint64_t seed);

/// Deterministic DDIM update through the predicted x0.
Matrix ddim_update(const Matrix& x_t, const Matrix& eps, double alpha_bar, double alpha_bar_prev);
Matrix ddim_step(const Matrix& x_t, const Matrix& eps, std::size_t t,
                 const NoiseSchedule& schedule);

/// eps_uncond + w (eps_cond - eps_uncond).
Matrix cfg_combine(const Matrix& eps_uncond, const Matrix& eps_cond, double guidance);

enum class SamplerKind { Ddpm, Ddim };

struct GenerationConfig {
    std::size_t steps = 20;
    SamplerKind sampler = SamplerKind::Ddpm;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    /// Run the unconditional and conditional branches as a batch of two.
    bool cfg = false;
    double guidance = 1.5;
    std::uint64_t seed = 0;
    bool record_eps = false;
    bool record_masks = false;
};

struct RunStats {
    /// Combined eps per step (with record_eps).
    std::vector<Matrix> eps;
    std::vector<std::size_t> fresh_steps;
    std::vector<DispatchRecord> dispatches;
    std::vector<std::vector<std::uint8_t>> masks;
    /// Per token: times cached, summed over every dispatch and batch half.
    std::vector<std::uint64_t> token_cache_counts;
    std::size_t dispatches_per_step = 0;
    std::size_t batch = 1;
    double wall_seconds = 0.0;

    std::size_t computed_events() const;
    std::size_t cached_events() const;
    std::size_t non_fresh_dispatches() const;
};

struct GenerationResult {
    Matrix x0;
    RunStats stats;
};

/// Optional per-step instrumentation of run_generation.
struct StepHooks {
    ForwardOptions forward;
    /// Called after each denoiser pass with the step index (0 = t = T) and t.
    std::function<void(std::size_t step, std::size_t t, const ForwardResult&)> on_forward;
};

/// Reverse diffusion from x_T ~ N(0, I) over t = T..1. Without a schedule
/// every module is computed at every step; identical seeds then reproduce the
/// baseline trajectory bit for bit. With cfg, batch element 0 is the
/// unconditional branch and 1 the conditional one.
GenerationResult run_generation(const Model& model, const Conditioning& cond,
                                const GenerationConfig& config,
                                const std::optional<CacheSchedule>& schedule,
                                const StepHooks* hooks = nullptr);

}  // namespace toca
