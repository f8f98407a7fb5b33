#include <gtest/gtest.h>

#include <cmath>

#include "toca/sampler.hpp"

using toca::Matrix;

namespace {

toca::ModelConfig toy() {
    toca::ModelConfig c;
    c.depth = 2;
    c.hidden = 8;
    c.heads = 2;
    c.grid_h = 4;
    c.grid_w = 4;
    c.num_classes = 4;
    return c;
}

}  // namespace

TEST(NoiseSchedule, LinearBetasAndCumulativeProduct) {
    const auto s = toca::NoiseSchedule::linear(5, 0.1, 0.5);
    EXPECT_EQ(s.steps(), 5u);
    EXPECT_DOUBLE_EQ(s.beta(1), 0.1);
    EXPECT_DOUBLE_EQ(s.beta(5), 0.5);
    EXPECT_EQ(s.alpha_bar(0), 1.0);
    double prod = 1.0;
    for (std::size_t t = 1; t <= 5; ++t) {
        prod *= 1.0 - s.beta(t);
        EXPECT_DOUBLE_EQ(s.alpha_bar(t), prod);
    }
    EXPECT_THROW(toca::NoiseSchedule(std::vector<double>{0.1, 1.0}), std::invalid_argument);
    EXPECT_THROW(toca::NoiseSchedule::linear(0), std::invalid_argument);
}

TEST(Ddpm, ScalarHandExample) {
    const Matrix x = Matrix::from_rows({{1.0}});
    const Matrix eps = Matrix::from_rows({{1.0}});
    const Matrix out = toca::ddpm_update(x, eps, 0.9, 0.9, 0.1, nullptr);
    // (1 - 0.1 / sqrt(0.1)) / sqrt(0.9)
    EXPECT_NEAR(out(0, 0), 0.720759, 1e-6);
    EXPECT_NEAR(out(0, 0), (1.0 - 0.1 / std::sqrt(0.1)) / std::sqrt(0.9), 1e-15);
}

TEST(Ddpm, NoNoiseLimitAndShape) {
    const Matrix x = toca::gaussian(3, 4, 1.0, 1);
    const Matrix eps = toca::gaussian(3, 4, 1.0, 2);
    const Matrix out = toca::ddpm_update(x, eps, 1.0 - 1e-15, 0.5, 1e-15, nullptr);
    EXPECT_EQ(out.rows(), 3u);
    EXPECT_EQ(out.cols(), 4u);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out.values()[i], x.values()[i], 1e-12);
    EXPECT_THROW(toca::ddpm_update(x, eps, 0.9, 1.0, 0.1, nullptr), std::invalid_argument);
    EXPECT_THROW(toca::ddpm_update(x, Matrix(2, 2), 0.9, 0.5, 0.1, nullptr), std::invalid_argument);
}

TEST(Ddpm, StepNoiseIsSeededAndAbsentAtTheLastStep) {
    const auto s = toca::NoiseSchedule::linear(10);
    const Matrix x = toca::gaussian(2, 3, 1.0, 1);
    const Matrix eps = toca::gaussian(2, 3, 1.0, 2);
    EXPECT_TRUE(toca::bitwise_equal(toca::ddpm_step(x, eps, 5, s, 9), toca::ddpm_step(x, eps, 5, s, 9)));
    EXPECT_FALSE(toca::bitwise_equal(toca::ddpm_step(x, eps, 5, s, 9), toca::ddpm_step(x, eps, 5, s, 10)));
    EXPECT_TRUE(toca::bitwise_equal(toca::ddpm_step(x, eps, 1, s, 9),
                                    toca::ddpm_update(x, eps, s.alpha(1), s.alpha_bar(1), s.beta(1), nullptr)));
    EXPECT_THROW(toca::ddpm_step(x, eps, 0, s, 9), std::invalid_argument);
}

TEST(Ddim, ClosedForm) {
    const Matrix x = Matrix::from_rows({{2.0}});
    const Matrix eps = Matrix::from_rows({{0.5}});
    const double ab = 0.64, prev = 0.81;
    const double x0 = (2.0 - 0.6 * 0.5) / 0.8;
    const Matrix out = toca::ddim_update(x, eps, ab, prev);
    EXPECT_NEAR(out(0, 0), 0.9 * x0 + std::sqrt(0.19) * 0.5, 1e-14);

    // eps = 0 and alpha_bar unchanged: x is a fixed point.
    const Matrix y = toca::gaussian(2, 2, 1.0, 3);
    const Matrix same = toca::ddim_update(y, Matrix(2, 2), 0.5, 0.5);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(same.values()[i], y.values()[i], 1e-15);
    EXPECT_TRUE(toca::bitwise_equal(toca::ddim_update(y, y, 0.3, 0.6), toca::ddim_update(y, y, 0.3, 0.6)));
}

TEST(Cfg, LinearCombination) {
    const Matrix u = toca::gaussian(2, 2, 1.0, 1);
    const Matrix c = toca::gaussian(2, 2, 1.0, 2);
    EXPECT_TRUE(toca::bitwise_equal(toca::cfg_combine(u, c, 0.0), u));
    const Matrix cond_only = toca::cfg_combine(u, c, 1.0);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(cond_only.values()[i], c.values()[i], 1e-15);
    EXPECT_EQ(toca::cfg_combine(Matrix(1, 1, 0.0), Matrix(1, 1, 2.0), 1.5)(0, 0), 3.0);
}

TEST(RunGeneration, DisabledCacheMatchesZeroRatioBitwise) {
    const auto model = toca::init_model(toy(), 1);
    const auto cond = toca::class_conditioning(model, 2);
    toca::GenerationConfig g;
    g.steps = 8;
    g.seed = 3;
    g.cfg = true;
    auto schedule = *toca::profile_schedule(toca::Profile::TocaDit);
    schedule.ratio = 0.0;
    const auto plain = toca::run_generation(model, cond, g, std::nullopt);
    const auto zero = toca::run_generation(model, cond, g, schedule);
    EXPECT_TRUE(toca::bitwise_equal(plain.x0, zero.x0));
}

TEST(RunGeneration, SingleStepIsFresh) {
    const auto model = toca::init_model(toy(), 2);
    toca::GenerationConfig g;
    g.steps = 1;
    const auto r = toca::run_generation(model, toca::class_conditioning(model, 0), g,
                                        toca::profile_schedule(toca::Profile::TocaDit));
    EXPECT_EQ(r.stats.fresh_steps, (std::vector<std::size_t>{0}));
    EXPECT_EQ(r.stats.cached_events(), 0u);
}

TEST(RunGeneration, TokenEventsAddUp) {
    const auto model = toca::init_model(toy(), 3);
    toca::GenerationConfig g;
    g.steps = 12;
    g.sampler = toca::SamplerKind::Ddim;
    const auto r = toca::run_generation(model, toca::class_conditioning(model, 1), g,
                                        toca::profile_schedule(toca::Profile::TocaDit));
    const std::size_t n = model.config.tokens();
    EXPECT_EQ(r.stats.dispatches_per_step, 2u * 2u + 1u);
    EXPECT_EQ(r.stats.computed_events() + r.stats.cached_events(),
              g.steps * r.stats.dispatches_per_step * n);
    EXPECT_GT(r.stats.cached_events(), 0u);
    EXPECT_TRUE(toca::all_finite(r.x0));
}

TEST(RunGeneration, DeterministicPerSeed) {
    const auto model = toca::init_model(toy(), 4);
    const auto cond = toca::class_conditioning(model, 3);
    toca::GenerationConfig g;
    g.steps = 6;
    g.seed = 11;
    const auto schedule = toca::profile_schedule(toca::Profile::TocaDit);
    EXPECT_TRUE(toca::bitwise_equal(toca::run_generation(model, cond, g, schedule).x0,
                                    toca::run_generation(model, cond, g, schedule).x0));
    g.record_eps = true;
    EXPECT_EQ(toca::run_generation(model, cond, g, schedule).stats.eps.size(), 6u);
}
