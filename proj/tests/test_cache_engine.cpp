#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "toca/cache_engine.hpp"
#include "toca/rng.hpp"

using toca::Matrix;

namespace {

toca::ModelConfig toy(std::size_t text_tokens = 0) {
    toca::ModelConfig c;
    c.depth = 3;
    c.hidden = 8;
    c.heads = 2;
    c.grid_h = 3;
    c.grid_w = 3;
    c.text_tokens = text_tokens;
    c.num_classes = 4;
    return c;
}

toca::CacheSchedule uniform(double ratio, double cycle) {
    toca::CacheSchedule s;
    s.ratio = ratio;
    s.base_cycle = cycle;
    s.depth_slope = 0;
    s.step_slope = 0;
    s.cycle_slope = 0;
    s.mode = toca::RatioMode::Uniform;
    return s;
}

// Module stand-in: row i of the output is (half + 1) * (i + 1) + salt.
toca::ModuleFn fake_module(double salt) {
    return [salt](std::size_t half, std::span<const std::size_t> rows) {
        Matrix out(rows.size(), 2);
        for (std::size_t k = 0; k < rows.size(); ++k)
            for (std::size_t j = 0; j < 2; ++j)
                out(k, j) = static_cast<double>((half + 1) * (rows[k] + 1)) + salt;
        return toca::ModuleOutput{out, std::nullopt};
    };
}

toca::CacheSlot filled_slot(std::size_t n) {
    toca::CacheSlot slot;
    slot.values = Matrix(n, 2, -1.0);
    slot.counters.assign(n, 0);
    slot.initialized = true;
    return slot;
}

// Drives one sample through `steps` denoiser passes with step-dependent inputs.
std::vector<Matrix> drive(const toca::Model& model, toca::ModuleRouter* router,
                          toca::CacheEngine* engine, std::size_t steps, std::size_t batch = 1) {
    const bool text = model.config.has_cross_attention();
    std::vector<toca::Conditioning> conds(
        batch, text ? toca::text_conditioning(model, 1) : toca::class_conditioning(model, 1));
    if (batch == 2) conds[0] = toca::null_conditioning(model);
    std::vector<Matrix> eps;
    for (std::size_t s = 0; s < steps; ++s) {
        if (engine) engine->begin_step(s);
        const Matrix x = toca::gaussian(model.config.tokens(), model.config.hidden, 1.0, 100 + s);
        const std::vector<Matrix> xs(batch, x);
        auto r = toca::model_forward(model, xs, static_cast<double>(steps - s), conds, router);
        eps.push_back(r.eps.back());
    }
    return eps;
}

}  // namespace

TEST(CachedLayerApply, AllComputeAllCacheAndSplice) {
    const std::size_t n = 5;
    const auto fn = fake_module(0.5);
    const auto slot = filled_slot(n);

    const auto full = toca::cached_layer_apply(fn, 1, toca::all_compute_mask(n), slot);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    EXPECT_EQ(full.values, fn(1, all).values);

    const auto cached = toca::cached_layer_apply(fn, 1, toca::all_cache_mask(n), slot);
    EXPECT_EQ(cached.values, slot.values);

    const std::vector<double> scores{5, 1, 4, 2, 3};
    const auto mask = toca::select_compute_set(scores, 0.4);  // caches tokens 1 and 3
    const auto mixed = toca::cached_layer_apply(fn, 1, mask, slot);
    const Matrix fresh = fn(1, all).values;
    for (std::size_t i = 0; i < n; ++i) {
        const Matrix& source = mask.gamma[i] ? fresh : slot.values;
        EXPECT_EQ(mixed.values(i, 0), source(i, 0));
        EXPECT_EQ(mixed.values(i, 1), source(i, 1));
    }

    toca::CacheSlot empty;
    EXPECT_THROW(toca::cached_layer_apply(fn, 0, toca::all_cache_mask(n), empty), std::logic_error);
}

TEST(CacheUpdate, CounterLaw) {
    const std::size_t n = 4;
    toca::CacheSlot slot;
    const Matrix first(n, 2, 1.0);
    EXPECT_THROW(toca::cache_update(toca::all_cache_mask(n), first, slot), std::logic_error);
    toca::cache_update(toca::all_compute_mask(n), first, slot);
    EXPECT_EQ(slot.values, first);
    EXPECT_EQ(slot.counters, (std::vector<std::uint32_t>(n, 0)));

    toca::cache_update(toca::all_cache_mask(n), Matrix(n, 2, 7.0), slot);
    EXPECT_EQ(slot.values, first);
    EXPECT_EQ(slot.counters, (std::vector<std::uint32_t>(n, 1)));

    const std::vector<double> scores{0, 9, 0, 9};
    const auto mask = toca::select_compute_set(scores, 0.5);  // computes 1 and 3
    Matrix next(n, 2, 3.0);
    toca::cache_update(mask, next, slot);
    EXPECT_EQ(slot.counters, (std::vector<std::uint32_t>{2, 0, 2, 0}));
    EXPECT_EQ(slot.values(0, 0), 1.0);
    EXPECT_EQ(slot.values(1, 0), 3.0);
    EXPECT_EQ(slot.values(2, 1), 1.0);
    EXPECT_EQ(slot.values(3, 1), 3.0);
}

TEST(CacheEngine, FreshStepsMatchUncachedModel) {
    const auto model = toca::init_model(toy(), 3);
    toca::CacheEngine engine(model.config, *toca::profile_schedule(toca::Profile::TocaDit), 6, 1);
    const auto cached = drive(model, &engine, &engine, 6);
    const auto plain = drive(model, nullptr, nullptr, 6);
    for (std::size_t s : engine.plan().fresh_steps) {
        EXPECT_TRUE(toca::bitwise_equal(cached[s], plain[s])) << "step " << s;
    }
}

TEST(CacheEngine, ZeroRatioIsBitwiseUncached) {
    for (std::size_t text : {0u, 4u}) {
        const auto model = toca::init_model(toy(text), 4);
        auto schedule = *toca::profile_schedule(toca::Profile::TocaDit);
        schedule.ratio = 0.0;
        toca::CacheEngine engine(model.config, schedule, 8, 1);
        const auto cached = drive(model, &engine, &engine, 8);
        const auto plain = drive(model, nullptr, nullptr, 8);
        for (std::size_t s = 0; s < 8; ++s) EXPECT_TRUE(toca::bitwise_equal(cached[s], plain[s]));
        for (const auto& d : engine.dispatches()) EXPECT_EQ(d.cached, 0u);
    }
}

TEST(CacheEngine, HalfRatioKeepsFloorHalfOfTheSlot) {
    const auto model = toca::init_model(toy(), 5);
    toca::CacheEngine engine(model.config, uniform(0.5, 2), 2, 1);
    const std::size_t n = model.config.tokens();
    std::vector<toca::Conditioning> conds{toca::class_conditioning(model, 0)};

    engine.begin_step(0);
    std::vector<Matrix> xs{toca::gaussian(n, 8, 1.0, 1)};
    toca::model_forward(model, xs, 2.0, conds, &engine);
    const Matrix before = engine.store().slot(0, 1, toca::ModuleKind::Mlp).values;

    engine.begin_step(1);
    xs[0] = toca::gaussian(n, 8, 1.0, 2);
    toca::model_forward(model, xs, 1.0, conds, &engine);
    const Matrix after = engine.store().slot(0, 1, toca::ModuleKind::Mlp).values;

    std::size_t unchanged = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool same = true;
        for (std::size_t j = 0; j < 8; ++j) same = same && before(i, j) == after(i, j);
        unchanged += same ? 1 : 0;
    }
    EXPECT_EQ(unchanged, n / 2);
    for (const auto& d : engine.dispatches()) {
        if (!d.fresh) EXPECT_EQ(d.cached, n / 2);
    }
}

TEST(CacheEngine, CountersFollowAScriptedThreeStepCycle) {
    const auto model = toca::init_model(toy(), 6);
    // Cycle of 3: fresh, then two steps caching everything.
    toca::CacheEngine engine(model.config, uniform(1.0, 3), 6, 1);
    const std::size_t n = model.config.tokens();
    std::vector<toca::Conditioning> conds{toca::class_conditioning(model, 2)};
    for (std::size_t s = 0; s < 6; ++s) {
        engine.begin_step(s);
        std::vector<Matrix> xs{toca::gaussian(n, 8, 1.0, s)};
        toca::model_forward(model, xs, static_cast<double>(6 - s), conds, &engine);
        const auto& counters = engine.store().slot(0, 0, toca::ModuleKind::SelfAttention).counters;
        const std::uint32_t expected = static_cast<std::uint32_t>(s % 3);
        for (std::uint32_t c : counters) EXPECT_EQ(c, expected) << "step " << s;
    }
}

TEST(CacheEngine, CoupledMasksAreSharedAcrossHalves) {
    const auto model = toca::init_model(toy(), 7);
    auto schedule = *toca::profile_schedule(toca::Profile::TocaDit);
    schedule.mode = toca::RatioMode::Uniform;
    schedule.ratio = 0.6;
    toca::CacheEngine engine(model.config, schedule, 6, 2, {true});
    drive(model, &engine, &engine, 6, 2);
    const auto& d = engine.dispatches();
    const auto& m = engine.masks();
    ASSERT_EQ(d.size(), m.size());
    bool any_partial = false;
    for (std::size_t k = 0; k + 1 < d.size(); k += 2) {
        ASSERT_EQ(d[k].half, 0u);
        ASSERT_EQ(d[k + 1].half, 1u);
        EXPECT_EQ(m[k], m[k + 1]);
        any_partial = any_partial || (d[k].cached > 0 && d[k].computed > 0);
    }
    EXPECT_TRUE(any_partial);
}

TEST(CacheEngine, UsageErrors) {
    const auto model = toca::init_model(toy(), 8);
    toca::CacheEngine engine(model.config, uniform(0.5, 2), 3, 1);
    EXPECT_THROW(engine.begin_step(3), std::out_of_range);
    std::vector<toca::Conditioning> conds{toca::class_conditioning(model, 0)};
    std::vector<Matrix> xs{Matrix(9, 8)};
    EXPECT_THROW(toca::model_forward(model, xs, 1.0, conds, &engine), std::logic_error);

    auto big_grid = uniform(0.5, 2);
    big_grid.grid = 4;
    EXPECT_THROW(toca::CacheEngine(model.config, big_grid, 3, 1), std::invalid_argument);
}

TEST(DispatchCsv, HeaderAndRows) {
    std::ostringstream out;
    toca::write_dispatch_csv(out, {{2, 1, toca::ModuleKind::Mlp, 0, false, 0.5, 5, 4}});
    EXPECT_EQ(out.str(),
              "step,layer,type,half,fresh,R_eff,computed_count,cached_count\n2,1,mlp,0,0,0.5,5,4\n");
}
