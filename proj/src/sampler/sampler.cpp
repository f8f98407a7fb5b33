#include "toca/sampler.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "toca/rng.hpp"

namespace toca {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) {
        throw std::invalid_argument("NoiseSchedule: steps must be >= 1");
    }
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = beta_start + (beta_end - beta_start) * frac;
    }
    return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
    if (betas.empty()) {
        throw std::invalid_argument("NoiseSchedule: no betas");
    }
    betas_.reserve(betas.size() + 1);
    betas_.push_back(0.0);
    alpha_bars_.reserve(betas.size() + 1);
    alpha_bars_.push_back(1.0);
    for (double b : betas) {
        if (!(b > 0.0 && b < 1.0)) {
            throw std::invalid_argument("NoiseSchedule: beta " + std::to_string(b) +
                                        " outside (0, 1)");
        }
        betas_.push_back(b);
        alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
    }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

}  // namespace

Matrix ddpm_update(const Matrix& x_t, const Matrix& eps, double alpha, double alpha_bar,
                   double beta, const Matrix* z) {
    require_same_shape(x_t, eps, "ddpm_update");
    if (alpha_bar >= 1.0 && beta > 0.0) {
        throw std::invalid_argument("ddpm_update: alpha_bar = 1 with beta > 0");
    }
    const double eps_coef = alpha_bar >= 1.0 ? 0.0 : (1.0 - alpha) / std::sqrt(1.0 - alpha_bar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double noise_coef = std::sqrt(beta);
    Matrix out(x_t.rows(), x_t.cols());
    const auto x = x_t.values();
    const auto e = eps.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = inv_sqrt_alpha * (x[i] - eps_coef * e[i]);
    }
    if (z != nullptr) {
        require_same_shape(x_t, *z, "ddpm_update");
        const auto n = z->values();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += noise_coef * n[i];
        }
    }
    return out;
}

Matrix ddpm_step(const Matrix& x_t, const Matrix& eps, std::size_t t,
                 const NoiseSchedule& schedule, std::uint64_t seed) {
    if (t < 1 || t > schedule.steps()) {
        throw std::invalid_argument("ddpm_step: t must lie in [1, T]");
    }
    if (t == 1) {
        return ddpm_update(x_t, eps, schedule.alpha(t), schedule.alpha_bar(t), schedule.beta(t),
                           nullptr);
    }
    const Matrix z = gaussian(x_t.rows(), x_t.cols(), 1.0, derive_seed(seed, streams::kStepNoise, t));
    return ddpm_update(x_t, eps, schedule.alpha(t), schedule.alpha_bar(t), schedule.beta(t), &z);
}

Matrix ddim_update(const Matrix& x_t, const Matrix& eps, double alpha_bar,
                   double alpha_bar_prev) {
    require_same_shape(x_t, eps, "ddim_update");
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0) || !(alpha_bar_prev > 0.0 && alpha_bar_prev <= 1.0)) {
        throw std::invalid_argument("ddim_update: alpha_bar must lie in (0, 1]");
    }
    const double sqrt_ab = std::sqrt(alpha_bar);
    const double sqrt_one_minus_ab = std::sqrt(1.0 - alpha_bar);
    const double sqrt_prev = std::sqrt(alpha_bar_prev);
    const double sqrt_one_minus_prev = std::sqrt(1.0 - alpha_bar_prev);
    Matrix out(x_t.rows(), x_t.cols());
    const auto x = x_t.values();
    const auto e = eps.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double x0 = (x[i] - sqrt_one_minus_ab * e[i]) / sqrt_ab;
        dst[i] = sqrt_prev * x0 + sqrt_one_minus_prev * e[i];
    }
    return out;
}

Matrix ddim_step(const Matrix& x_t, const Matrix& eps, std::size_t t,
                 const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps()) {
        throw std::invalid_argument("ddim_step: t must lie in [1, T]");
    }
    return ddim_update(x_t, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
}

Matrix cfg_combine(const Matrix& eps_uncond, const Matrix& eps_cond, double guidance) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    Matrix out(eps_uncond.rows(), eps_uncond.cols());
    const auto u = eps_uncond.values();
    const auto c = eps_cond.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = u[i] + guidance * (c[i] - u[i]);
    }
    return out;
}

std::size_t RunStats::computed_events() const {
    std::size_t total = 0;
    for (const auto& d : dispatches) total += d.computed;
    return total;
}

std::size_t RunStats::cached_events() const {
    std::size_t total = 0;
    for (const auto& d : dispatches) total += d.cached;
    return total;
}

std::size_t RunStats::non_fresh_dispatches() const {
    std::size_t total = 0;
    for (const auto& d : dispatches) total += d.fresh ? 0 : 1;
    return total;
}

GenerationResult run_generation(const Model& model, const Conditioning& cond,
                                const GenerationConfig& config,
                                const std::optional<CacheSchedule>& schedule,
                                const StepHooks* hooks) {
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig& mc = model.config;
    const std::size_t total = config.steps;
    const NoiseSchedule noise = NoiseSchedule::linear(total, config.beta_start, config.beta_end);
    const std::size_t batch = config.cfg ? 2 : 1;

    std::vector<Conditioning> conds;
    if (config.cfg) {
        conds.push_back(null_conditioning(model));
    }
    conds.push_back(cond);

    std::optional<CacheEngine> engine;
    if (schedule) {
        engine.emplace(mc, *schedule, total, batch, CacheEngineOptions{config.record_masks});
    }

    GenerationResult result;
    result.stats.batch = batch;
    Matrix x = gaussian(mc.tokens(), mc.hidden, 1.0, derive_seed(config.seed, streams::kInitialNoise));

    for (std::size_t step = 0; step < total; ++step) {
        const std::size_t t = total - step;
        if (engine) {
            engine->begin_step(step);
        }
        std::vector<Matrix> inputs(batch, x);
        ForwardResult fwd = model_forward(model, inputs, static_cast<double>(t), conds,
                                          engine ? &*engine : nullptr,
                                          hooks ? hooks->forward : ForwardOptions{});
        if (hooks && hooks->on_forward) {
            hooks->on_forward(step, t, fwd);
        }
        Matrix eps = config.cfg ? cfg_combine(fwd.eps[0], fwd.eps[1], config.guidance)
                                : std::move(fwd.eps[0]);
        x = config.sampler == SamplerKind::Ddpm ? ddpm_step(x, eps, t, noise, config.seed)
                                                : ddim_step(x, eps, t, noise);
        if (config.record_eps) {
            result.stats.eps.push_back(std::move(eps));
        }
    }

    RunStats& stats = result.stats;
    stats.dispatches_per_step = mc.depth * (mc.has_cross_attention() ? 3 : 2) + 1;
    if (engine) {
        stats.fresh_steps = engine->plan().fresh_steps;
        stats.dispatches = engine->dispatches();
        stats.masks = engine->masks();
        stats.token_cache_counts = engine->token_cache_counts();
    } else {
        stats.fresh_steps.resize(total);
        for (std::size_t s = 0; s < total; ++s) stats.fresh_steps[s] = s;
        stats.token_cache_counts.assign(mc.tokens(), 0);
    }
    result.x0 = std::move(x);
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace toca
