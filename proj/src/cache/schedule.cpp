#include "toca/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "toca/flops.hpp"

namespace toca {

void CacheSchedule::validate() const {
    auto fail = [](const std::string& msg) {
        throw std::invalid_argument("CacheSchedule: " + msg);
    };
    if (!(ratio >= 0.0 && ratio <= 1.0)) fail("ratio must lie in [0, 1]");
    if (!(base_cycle >= 1.0)) fail("base_cycle must be >= 1");
    if (!(lambda_attention >= 0.0) || !(lambda_entropy >= 0.0) || !(lambda_frequency >= 0.0) ||
        !(lambda_spatial >= 0.0)) {
        fail("score weights must be >= 0");
    }
    if (!(type_tradeoff >= 0.0)) fail("type_tradeoff must be >= 0");
    if (!std::isfinite(depth_slope) || !std::isfinite(step_slope) || !std::isfinite(cycle_slope)) {
        fail("slopes must be finite");
    }
    if (grid < 1) fail("grid must be >= 1");
    if (!(center > 0.0) || !std::isfinite(center)) fail("center must be > 0");
    if (fixed_window) {
        if (fixed_window->begin > fixed_window->end) fail("fixed window begin > end");
        if (fixed_window->cycle < 1) fail("fixed window cycle must be >= 1");
    }
}

std::string_view to_string(Profile profile) {
    switch (profile) {
    case Profile::Off:
        return "off";
    case Profile::NaiveFull:
        return "naive-full";
    case Profile::TocaDit:
        return "toca-dit";
    case Profile::TocaPixart:
        return "toca-pixart";
    case Profile::Custom:
        return "custom";
    }
    return "unknown";
}

std::string_view to_string(RatioMode mode) {
    switch (mode) {
    case RatioMode::Uniform:
        return "uniform";
    case RatioMode::FlopsShare:
        return "flops-share";
    case RatioMode::TypeTradeoff:
        return "type-tradeoff";
    }
    return "unknown";
}

Profile parse_profile(std::string_view name) {
    for (Profile p : {Profile::Off, Profile::NaiveFull, Profile::TocaDit, Profile::TocaPixart,
                      Profile::Custom}) {
        if (to_string(p) == name) return p;
    }
    throw std::invalid_argument("unknown profile '" + std::string(name) + "'");
}

RatioMode parse_ratio_mode(std::string_view name) {
    for (RatioMode m : {RatioMode::Uniform, RatioMode::FlopsShare, RatioMode::TypeTradeoff}) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown ratio mode '" + std::string(name) + "'");
}

std::optional<CacheSchedule> profile_schedule(Profile profile) {
    CacheSchedule s;
    switch (profile) {
    case Profile::Off:
        return std::nullopt;
    case Profile::NaiveFull:
        s.ratio = 1.0;
        s.base_cycle = 3.0;
        s.depth_slope = 0.0;
        s.step_slope = 0.0;
        s.cycle_slope = 0.0;
        s.lambda_frequency = 0.0;
        s.lambda_spatial = 0.0;
        s.mode = RatioMode::Uniform;
        return s;
    case Profile::TocaDit:
    case Profile::Custom:
        return s;
    case Profile::TocaPixart:
        s.ratio = 0.70;
        s.base_cycle = 2.0;
        s.cycle_slope = 0.1;
        s.step_slope = 0.4;
        s.depth_slope = 0.3;
        s.mode = RatioMode::FlopsShare;
        s.cfg_coupled = true;
        return s;
    }
    return std::nullopt;
}

double dynamic_cycle_length(const CacheSchedule& schedule, std::size_t step, std::size_t total) {
    const double progress = static_cast<double>(step) / static_cast<double>(total);
    const double denom = schedule.center + schedule.cycle_slope * (progress - 0.5);
    if (denom <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return schedule.base_cycle / denom;
}

CyclePlan cycle_plan(const CacheSchedule& schedule, std::size_t total) {
    if (total == 0) {
        throw std::invalid_argument("cycle_plan: total steps must be >= 1");
    }
    CyclePlan plan;
    plan.fresh.assign(total, false);
    plan.cycle_length.assign(total, 1);
    std::size_t step = 0;
    while (step < total) {
        std::size_t length = 0;
        const auto& window = schedule.fixed_window;
        if (window && step >= window->begin && step < window->end) {
            length = window->cycle;
        } else {
            const double n_t = dynamic_cycle_length(schedule, step, total);
            length = std::isfinite(n_t) && n_t < static_cast<double>(total)
                         ? static_cast<std::size_t>(std::max(1L, std::lround(n_t)))
                         : total;
        }
        plan.fresh[step] = true;
        plan.fresh_steps.push_back(step);
        const std::size_t end = std::min(total, step + length);
        for (std::size_t s = step; s < end; ++s) {
            plan.cycle_length[s] = length;
        }
        step = end;
    }
    return plan;
}

double depth_factor(const CacheSchedule& schedule, std::size_t layer, std::size_t depth) {
    return schedule.center +
           schedule.depth_slope * (static_cast<double>(layer) / static_cast<double>(depth) - 0.5);
}

double step_factor(const CacheSchedule& schedule, std::size_t step, std::size_t total) {
    return schedule.center +
           schedule.step_slope * (0.5 - static_cast<double>(step) / static_cast<double>(total));
}

TypeShares flops_type_shares(const ModelConfig& config) {
    if (!config.has_cross_attention()) {
        return {1.0, 0.0};
    }
    const auto mlp = static_cast<double>(flops_mlp(config.tokens(), config.hidden));
    const auto cross = static_cast<double>(
        flops_cross_attention(config.tokens(), config.text_tokens, config.hidden, config.heads));
    const double total = mlp + cross;
    // Renormalized so the mean over the two partially cached types is 1.
    return {2.0 * mlp / total, 2.0 * cross / total};
}

RatioContext make_ratio_context(const ModelConfig& config, std::size_t total_steps) {
    return {config.depth, total_steps, flops_type_shares(config)};
}

double effective_cache_ratio(std::size_t layer, std::size_t step, ModuleKind kind,
                             const CacheSchedule& schedule, const RatioContext& context) {
    const double base = schedule.ratio * depth_factor(schedule, layer, context.depth) *
                        step_factor(schedule, step, context.total_steps);
    if (base <= 0.0) {
        return 0.0;
    }
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

    switch (schedule.mode) {
    case RatioMode::Uniform:
        return clamp01(base);
    case RatioMode::FlopsShare:
        switch (kind) {
        case ModuleKind::SelfAttention:
            return 1.0;
        case ModuleKind::CrossAttention:
            return clamp01(base * context.shares.cross_attention);
        case ModuleKind::Mlp:
            return clamp01(base * context.shares.mlp);
        case ModuleKind::Head:
            return 0.0;
        }
        break;
    case RatioMode::TypeTradeoff: {
        double factor = 1.0;
        switch (kind) {
        case ModuleKind::SelfAttention:
            factor = 1.0 - 0.4 * schedule.type_tradeoff;
            break;
        case ModuleKind::Mlp:
            factor = 1.0 + 0.6 * schedule.type_tradeoff;
            break;
        case ModuleKind::CrossAttention:
            factor = 1.0;
            break;
        case ModuleKind::Head:
            return 0.0;
        }
        const double compute = (1.0 - clamp01(base)) * std::max(0.0, factor);
        return clamp01(1.0 - compute);
    }
    }
    return 0.0;
}

}  // namespace toca
