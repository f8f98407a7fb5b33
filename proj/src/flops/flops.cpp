#include "toca/flops.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "toca/flop_counter.hpp"
#include "toca/rng.hpp"
#include "toca/scores.hpp"

namespace toca {

std::uint64_t flops_self_attention(std::uint64_t tokens, std::uint64_t hidden,
                                   std::uint64_t heads) {
    const std::uint64_t n = tokens, d = hidden;
    return 8 * n * d * d + 4 * n * n * d + 5 * n * n * heads;
}

std::uint64_t flops_cross_attention(std::uint64_t image_tokens, std::uint64_t text_tokens,
                                    std::uint64_t hidden, std::uint64_t heads) {
    const std::uint64_t n1 = image_tokens, n2 = text_tokens, d = hidden;
    return 4 * (n1 + n2) * d * d + 4 * n1 * n2 * d + 5 * n1 * n2 * heads;
}

std::uint64_t flops_mlp(std::uint64_t tokens, std::uint64_t hidden) {
    return 16 * tokens * hidden * hidden + 24 * tokens * hidden;
}

SelectionOverhead flops_selection_overhead(std::size_t tokens, std::size_t grid) {
    const double n = static_cast<double>(tokens);
    const double cell = static_cast<double>(grid * grid);
    SelectionOverhead o;
    o.attention_score = n;
    o.entropy_score = 2.0 * n;
    o.frequency_score = 3.0 * n;
    o.spatial_score = grid == 0 ? 0.0 : (n / cell) * cell * std::log2(cell) + 2.0 * n / cell;
    o.global_sort = tokens == 0 ? 0.0 : n * std::log2(n);
    o.total = o.attention_score + o.entropy_score + o.frequency_score + o.spatial_score +
              o.global_sort;
    return o;
}

double flops_full_forward(const ModelConfig& config) {
    const double per_block =
        static_cast<double>(flops_self_attention(config.tokens(), config.hidden, config.heads)) +
        static_cast<double>(flops_mlp(config.tokens(), config.hidden)) +
        (config.has_cross_attention()
             ? static_cast<double>(flops_cross_attention(config.tokens(), config.text_tokens,
                                                         config.hidden, config.heads))
             : 0.0);
    return per_block * static_cast<double>(config.depth);
}

namespace {

struct ModuleCost {
    double self_attention = 0;
    double cross_attention = 0;
    double mlp = 0;
};

// Cost of one dispatch of `kind` with computed fraction f.
double dispatch_cost(const ModelConfig& c, ModuleKind kind, double f) {
    const double n = static_cast<double>(c.tokens());
    const double d = static_cast<double>(c.hidden);
    const double h = static_cast<double>(c.heads);
    const double n2 = static_cast<double>(c.text_tokens);
    switch (kind) {
    case ModuleKind::SelfAttention:
        return 8 * n * d * d * f + (4 * n * n * d + 5 * n * n * h) * f * f;
    case ModuleKind::CrossAttention:
        // Text-side key/value projections run whenever any query is computed.
        return 4 * n * d * d * f + (f > 0 ? 4 * n2 * d * d : 0.0) +
               (4 * n * n2 * d + 5 * n * n2 * h) * f;
    case ModuleKind::Mlp:
        return (16 * n * d * d + 24 * n * d) * f;
    case ModuleKind::Head:
        return 0.0;
    }
    return 0.0;
}

void add_cost(ModuleCost& cost, ModuleKind kind, double value) {
    switch (kind) {
    case ModuleKind::SelfAttention:
        cost.self_attention += value;
        break;
    case ModuleKind::CrossAttention:
        cost.cross_attention += value;
        break;
    case ModuleKind::Mlp:
        cost.mlp += value;
        break;
    case ModuleKind::Head:
        break;
    }
}

}  // namespace

FlopsReport estimate_run_flops(const ModelConfig& config, std::size_t steps, bool cfg,
                               const std::optional<CacheSchedule>& schedule) {
    config.validate();
    const double batch = cfg ? 2.0 : 1.0;
    const std::size_t n = config.tokens();

    std::vector<ModuleKind> kinds{ModuleKind::SelfAttention};
    if (config.has_cross_attention()) kinds.push_back(ModuleKind::CrossAttention);
    kinds.push_back(ModuleKind::Mlp);

    FlopsReport report;
    report.steps = steps;

    std::optional<CyclePlan> plan;
    RatioContext context = make_ratio_context(config, steps == 0 ? 1 : steps);
    if (schedule && steps > 0) {
        schedule->validate();
        plan = cycle_plan(*schedule, steps);
    }
    const double overhead_per_dispatch =
        schedule ? flops_selection_overhead(n, schedule->grid).total : 0.0;

    ModuleCost cost;
    std::size_t fresh = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        const bool is_fresh = !plan || plan->is_fresh(step);
        fresh += is_fresh ? 1 : 0;
        for (std::size_t layer = 0; layer < config.depth; ++layer) {
            for (ModuleKind kind : kinds) {
                double f = 1.0;
                if (!is_fresh) {
                    const double ratio =
                        effective_cache_ratio(layer, step, kind, *schedule, context);
                    const std::size_t cached = cached_token_count(ratio, n);
                    f = static_cast<double>(n - cached) / static_cast<double>(n);
                    if (cached > 0 && cached < n) {
                        report.overhead_flops += batch * overhead_per_dispatch;
                    }
                }
                // Accumulated alongside the cached cost so that an uncached
                // schedule reproduces the baseline exactly.
                report.baseline_flops += batch * dispatch_cost(config, kind, 1.0);
                const double spent = batch * dispatch_cost(config, kind, f);
                report.cached_flops += spent;
                add_cost(cost, kind, spent);
            }
        }
    }
    report.fresh_steps = fresh;
    report.self_attention_flops = cost.self_attention;
    report.cross_attention_flops = cost.cross_attention;
    report.mlp_flops = cost.mlp;
    report.cached_flops += report.overhead_flops;
    report.speedup = report.cached_flops > 0 ? report.baseline_flops / report.cached_flops : 1.0;
    return report;
}

std::string to_json(const FlopsReport& report) {
    nlohmann::ordered_json j;
    j["baseline_flops"] = report.baseline_flops;
    j["cached_flops"] = report.cached_flops;
    j["overhead_flops"] = report.overhead_flops;
    j["speedup"] = report.speedup;
    j["self_attention_flops"] = report.self_attention_flops;
    j["cross_attention_flops"] = report.cross_attention_flops;
    j["mlp_flops"] = report.mlp_flops;
    j["steps"] = report.steps;
    j["fresh_steps"] = report.fresh_steps;
    return j.dump(2);
}

namespace {

AttentionWeights random_attention(std::size_t hidden, std::uint64_t seed) {
    return {gaussian(hidden, hidden, 1.0, derive_seed(seed, 0)),
            gaussian(hidden, hidden, 1.0, derive_seed(seed, 1)),
            gaussian(hidden, hidden, 1.0, derive_seed(seed, 2)),
            gaussian(hidden, hidden, 1.0, derive_seed(seed, 3))};
}

}  // namespace

std::uint64_t instrumented_flops(ModuleKind kind, std::size_t tokens, std::size_t text_tokens,
                                 std::size_t hidden, std::size_t heads) {
    constexpr std::uint64_t kSeed = 0x70CAull;
    const Matrix x = gaussian(tokens, hidden, 1.0, derive_seed(kSeed, 10));
    switch (kind) {
    case ModuleKind::SelfAttention: {
        const AttentionWeights w = random_attention(hidden, derive_seed(kSeed, 11));
        FlopCountingScope scope;
        self_attention_forward(x, w, heads);
        return scope.tally().total();
    }
    case ModuleKind::CrossAttention: {
        const AttentionWeights w = random_attention(hidden, derive_seed(kSeed, 12));
        const Matrix text = gaussian(text_tokens, hidden, 1.0, derive_seed(kSeed, 13));
        FlopCountingScope scope;
        cross_attention_forward(x, text, w, heads);
        return scope.tally().total();
    }
    case ModuleKind::Mlp: {
        const MlpWeights w{gaussian(hidden, 4 * hidden, 1.0, derive_seed(kSeed, 14)),
                           gaussian(4 * hidden, hidden, 1.0, derive_seed(kSeed, 15))};
        FlopCountingScope scope;
        mlp_forward(x, w);
        return scope.tally().total();
    }
    case ModuleKind::Head:
        break;
    }
    throw std::invalid_argument("instrumented_flops: the output head has no cost model");
}

std::vector<FlopCheck> cross_check_flops(const std::vector<FlopDims>& dims) {
    std::vector<FlopCheck> checks;
    for (const auto& d : dims) {
        const std::size_t n2 = d.tokens + 1;
        checks.push_back({ModuleKind::SelfAttention, d.tokens, 0, d.hidden, d.heads,
                          flops_self_attention(d.tokens, d.hidden, d.heads),
                          instrumented_flops(ModuleKind::SelfAttention, d.tokens, 0, d.hidden,
                                             d.heads)});
        checks.push_back({ModuleKind::CrossAttention, d.tokens, n2, d.hidden, d.heads,
                          flops_cross_attention(d.tokens, n2, d.hidden, d.heads),
                          instrumented_flops(ModuleKind::CrossAttention, d.tokens, n2, d.hidden,
                                             d.heads)});
        checks.push_back({ModuleKind::Mlp, d.tokens, 0, d.hidden, d.heads,
                          flops_mlp(d.tokens, d.hidden),
                          instrumented_flops(ModuleKind::Mlp, d.tokens, 0, d.hidden, d.heads)});
    }
    return checks;
}

}  // namespace toca
