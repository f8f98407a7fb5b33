#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "toca/flops.hpp"

namespace {

toca::ModelConfig dit_xl2() {
    toca::ModelConfig c;
    c.depth = 28;
    c.hidden = 1152;
    c.heads = 16;
    c.grid_h = 16;
    c.grid_w = 16;
    c.num_classes = 1000;
    return c;
}

toca::CacheSchedule saturating(double cycle) {
    toca::CacheSchedule s;
    s.ratio = 1.0;
    s.base_cycle = cycle;
    s.depth_slope = 0;
    s.step_slope = 0;
    s.cycle_slope = 0;
    s.mode = toca::RatioMode::Uniform;
    return s;
}

}  // namespace

TEST(ClosedForms, Examples) {
    EXPECT_EQ(toca::flops_self_attention(2, 4, 1), 340u);
    EXPECT_EQ(toca::flops_self_attention(0, 4, 1), 0u);
    EXPECT_EQ(toca::flops_cross_attention(2, 3, 4, 1), 446u);
    EXPECT_EQ(toca::flops_cross_attention(2, 0, 4, 1), 4u * 2u * 16u);
    EXPECT_EQ(toca::flops_mlp(2, 4), 704u);
    EXPECT_EQ(toca::flops_mlp(0, 4), 0u);
}

TEST(ClosedForms, ScalingLaws) {
    // With N = 1 and H = 0 only the 8 N D^2 term grows with D squared.
    EXPECT_EQ(toca::flops_self_attention(1, 8, 0) - 4 * 8, 4 * (toca::flops_self_attention(1, 4, 0) - 4 * 4));
    EXPECT_EQ(toca::flops_mlp(6, 5), 3 * toca::flops_mlp(2, 5));
    // The image-text term is symmetric in N1 and N2.
    const auto ca = [](std::uint64_t n1, std::uint64_t n2) {
        return toca::flops_cross_attention(n1, n2, 4, 0) - 4 * (n1 + n2) * 16;
    };
    EXPECT_EQ(ca(3, 7), ca(7, 3));
}

TEST(SelectionOverhead, Examples) {
    const auto o = toca::flops_selection_overhead(256, 2);
    EXPECT_EQ(o.attention_score, 256.0);
    EXPECT_EQ(o.entropy_score, 512.0);
    EXPECT_EQ(o.frequency_score, 768.0);
    EXPECT_EQ(o.spatial_score, 640.0);
    EXPECT_EQ(o.global_sort, 2048.0);
    EXPECT_EQ(o.total, 256.0 + 512.0 + 768.0 + 640.0 + 2048.0);
    EXPECT_EQ(toca::flops_selection_overhead(1, 1).global_sort, 0.0);
}

TEST(SelectionOverhead, UnderOnePercentAtDitDims) {
    const auto cfg = dit_xl2();
    const double per_layer_main = static_cast<double>(toca::flops_self_attention(256, 1152, 16) +
                                                      toca::flops_mlp(256, 1152));
    EXPECT_LT(toca::flops_selection_overhead(256, 2).total / per_layer_main, 0.01);
    EXPECT_DOUBLE_EQ(toca::flops_full_forward(cfg), per_layer_main * 28);
}

TEST(Instrumented, MatchesClosedFormsExactly) {
    for (const auto& check : toca::cross_check_flops({{2, 4, 1}, {4, 8, 2}, {16, 32, 4}, {9, 12, 3}})) {
        EXPECT_TRUE(check.matches()) << toca::to_string(check.kind) << " N=" << check.tokens
                                     << " D=" << check.hidden << ": " << check.closed_form
                                     << " vs " << check.counted;
    }
    EXPECT_THROW(toca::instrumented_flops(toca::ModuleKind::Head, 2, 0, 4, 1), std::invalid_argument);
}

TEST(EstimateRun, UnitCycleEqualsBaseline) {
    auto s = *toca::profile_schedule(toca::Profile::TocaDit);
    s.base_cycle = 1;
    s.cycle_slope = 0;
    const auto r = toca::estimate_run_flops(dit_xl2(), 50, true, s);
    EXPECT_EQ(r.cached_flops, r.baseline_flops);
    EXPECT_EQ(r.speedup, 1.0);
    EXPECT_EQ(r.fresh_steps, 50u);
    const auto none = toca::estimate_run_flops(dit_xl2(), 50, true, std::nullopt);
    EXPECT_EQ(none.cached_flops, none.baseline_flops);
    EXPECT_DOUBLE_EQ(none.baseline_flops, 50 * 2 * toca::flops_full_forward(dit_xl2()));
}

TEST(EstimateRun, FullReuseCountsOnlyFreshSteps) {
    toca::ModelConfig c;
    c.text_tokens = 6;
    const auto r = toca::estimate_run_flops(c, 20, false, saturating(3));
    // Every non-fresh dispatch caches everything, so no selection is needed.
    EXPECT_EQ(r.overhead_flops, 0.0);
    EXPECT_EQ(r.fresh_steps, 7u);
    EXPECT_NEAR(r.cached_flops, r.baseline_flops * 7.0 / 20.0, 1e-6 * r.baseline_flops);
}

TEST(EstimateRun, MonotoneInRatioAndCycle) {
    const auto cfg = dit_xl2();
    auto s = *toca::profile_schedule(toca::Profile::TocaDit);
    double previous = std::numeric_limits<double>::infinity();
    for (double r = 0.0; r <= 1.0001; r += 0.05) {
        s.ratio = std::min(r, 1.0);
        const double cost = toca::estimate_run_flops(cfg, 50, true, s).cached_flops;
        EXPECT_LE(cost, previous + 1e-6) << "R=" << r;
        previous = cost;
    }
    s = *toca::profile_schedule(toca::Profile::TocaDit);
    previous = std::numeric_limits<double>::infinity();
    for (double n0 = 1; n0 <= 8; n0 += 1) {
        s.base_cycle = n0;
        const double cost = toca::estimate_run_flops(cfg, 50, true, s).cached_flops;
        EXPECT_LE(cost, previous + 1e-6) << "N0=" << n0;
        previous = cost;
    }
}

TEST(EstimateRun, DitTableFiveBand) {
    const auto r = toca::estimate_run_flops(dit_xl2(), 50, true,
                                            toca::profile_schedule(toca::Profile::TocaDit));
    EXPECT_GE(r.speedup, 2.32 * 0.85);
    EXPECT_LE(r.speedup, 2.32 * 1.15);
    EXPECT_GT(r.overhead_flops, 0.0);
    EXPECT_GE(r.self_attention_flops, 0.0);
}

TEST(FlopsReport, JsonFieldNames) {
    const auto r = toca::estimate_run_flops(toca::ModelConfig{}, 10, false,
                                            toca::profile_schedule(toca::Profile::TocaDit));
    const auto j = nlohmann::json::parse(toca::to_json(r));
    for (const char* key : {"baseline_flops", "cached_flops", "overhead_flops", "speedup"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_DOUBLE_EQ(j["speedup"].get<double>(), r.speedup);
}
