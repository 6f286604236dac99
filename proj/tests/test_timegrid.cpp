#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "robustrisk/numeric.hpp"
#include "robustrisk/random.hpp"
#include "robustrisk/timegrid.hpp"

using namespace robustrisk;

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> terminal_states(const PathBatch& b) {
    std::vector<double> out(b.n_paths());
    for (std::size_t i = 0; i < b.n_paths(); ++i)
        out[i] = b.at(i, b.grid().n_steps());
    return out;
}

} // namespace

TEST(TimeGrid, LastNodeIsExactlyT) {
    const TimeGrid g(1.0, 3);
    EXPECT_EQ(g.n_nodes(), 4u);
    EXPECT_EQ(g.node(0), 0.0);
    EXPECT_EQ(g.node(3), 1.0);
    double total = 0.0;
    for (std::size_t k = 0; k < g.n_steps(); ++k)
        total += g.step(k);
    EXPECT_DOUBLE_EQ(total, 1.0);
}

TEST(TimeGrid, RejectsBadInput) {
    EXPECT_THROW(TimeGrid(0.0, 10), ArgumentError);
    EXPECT_THROW(TimeGrid(1.0, 0), ArgumentError);
}

TEST(Philox, KnownAnswerVectors) {
    // Reference outputs of Philox4x32-10 from the Random123 distribution.
    const random::Philox4x32 zero(0);
    const auto a = zero({0, 0, 0, 0});
    EXPECT_EQ(a[0], 0x6627e8d5u);
    EXPECT_EQ(a[1], 0xe169c58du);
    EXPECT_EQ(a[2], 0xbc57ac4cu);
    EXPECT_EQ(a[3], 0x9b00dbd8u);

    const random::Philox4x32 ones(0xffffffffffffffffull);
    const auto b = ones({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
    EXPECT_EQ(b[0], 0x408f276du);
    EXPECT_EQ(b[1], 0x41c83b0eu);
    EXPECT_EQ(b[2], 0xa20bc7c6u);
    EXPECT_EQ(b[3], 0x6d5451fdu);
}

TEST(Random, DerivedSeedsDifferByLabel) {
    EXPECT_NE(random::derive_seed(7, "paths"), random::derive_seed(7, "probe"));
    EXPECT_NE(random::derive_seed(7, "paths"), random::derive_seed(8, "paths"));
    EXPECT_EQ(random::derive_seed(7, "paths"), random::derive_seed(7, "paths"));
}

TEST(Random, UniformsInOpenClosedUnitInterval) {
    for (std::uint32_t k = 0; k < 1000; ++k) {
        const auto u = random::uniform_pair(3, 5, k, 0);
        for (double x : u) {
            EXPECT_GT(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    }
}

TEST(Simulate, DegenerateDiffusionStaysAtZero) {
    const auto b = simulate_paths(arithmetic_bm(0.0, 0.0, 0.0), TimeGrid(1.0, 17), 5, 1);
    for (double x : b.states())
        EXPECT_EQ(x, 0.0);
}

TEST(Simulate, PureDriftEndsExactlyAtOne) {
    const auto b = simulate_paths(arithmetic_bm(1.0, 0.0, 0.0), TimeGrid(1.0, 100), 4, 1);
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(b.at(i, 100), 1.0);
}

TEST(Simulate, BrownianTerminalMoments) {
    const std::size_t n = 100000;
    const auto b = simulate_paths(arithmetic_bm(0.0, 0.2, 0.0), TimeGrid(1.0, 250), n, 2024, 8);
    const auto xt = terminal_states(b);
    const double m = mean_of(xt);
    EXPECT_LE(std::abs(m), 4.0 * 0.2 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(sample_variance(xt), 0.04, 0.03 * 0.04);
}

TEST(Simulate, DriftlessMeanStaysAtX0AtEveryNode) {
    const std::size_t n = 20000;
    const auto b = simulate_paths(arithmetic_bm(0.0, 0.3, 1.5), TimeGrid(1.0, 20), n, 11, 4);
    for (std::size_t k = 0; k <= 20; ++k) {
        std::vector<double> xs(n);
        for (std::size_t i = 0; i < n; ++i)
            xs[i] = b.at(i, k);
        EXPECT_LE(std::abs(mean_of(xs) - 1.5), 4.0 * standard_error(xs) + 1e-15) << "node " << k;
    }
}

TEST(Simulate, HalvingStepLeavesSecondMomentUnchanged) {
    const std::size_t n = 50000;
    auto second_moment = [&](std::size_t steps) {
        const auto b = simulate_paths(arithmetic_bm(0.1, 0.25, 0.0), TimeGrid(1.0, steps), n, 99, 8);
        auto x = terminal_states(b);
        for (double& v : x)
            v *= v;
        return std::pair{mean_of(x), standard_error(x)};
    };
    const auto [m1, s1] = second_moment(25);
    const auto [m2, s2] = second_moment(50);
    EXPECT_LT(std::abs(m1 - m2), 3.0 * std::hypot(s1, s2));
}

TEST(Simulate, GbmLogStateDrift) {
    const auto spec = gbm_log(0.05, 0.3, std::log(100.0));
    EXPECT_DOUBLE_EQ(spec.drift_1d(0.0, 0.0), 0.05 - 0.5 * 0.09);
    EXPECT_DOUBLE_EQ(spec.diffusion_1d(0.0, 0.0), 0.3);
    const std::size_t n = 40000;
    const auto b = simulate_paths(spec, TimeGrid(1.0, 10), n, 5, 4);
    auto s = terminal_states(b);
    for (double& v : s)
        v = std::exp(v);
    EXPECT_LE(std::abs(mean_of(s) - 100.0 * std::exp(0.05)), 4.0 * standard_error(s));
}

TEST(Simulate, IdenticalAcrossThreadCounts) {
    const auto spec = gbm_log(0.02, 0.4, 0.0);
    const TimeGrid g(2.0, 37);
    const auto b1 = simulate_paths(spec, g, 1001, 77, 1);
    const auto b2 = simulate_paths(spec, g, 1001, 77, 2);
    const auto b8 = simulate_paths(spec, g, 1001, 77, 8);
    EXPECT_EQ(b1.states(), b2.states());
    EXPECT_EQ(b1.states(), b8.states());
}

TEST(Increments, SameStreamRepeatsDistinctStreamsDiffer) {
    const TimeGrid g(1.0, 8);
    EXPECT_EQ(brownian_increments(g, 10, 42, 3), brownian_increments(g, 10, 42, 3));
    EXPECT_NE(brownian_increments(g, 10, 42, 3), brownian_increments(g, 10, 42, 4));
    EXPECT_THROW(brownian_increments(g, 10, 42, 10), ArgumentError);
}

TEST(Increments, MatchSimulatedPath) {
    const TimeGrid g(1.0, 8);
    const auto b = simulate_paths(arithmetic_bm(0.0, 1.0, 0.0), g, 6, 42);
    const auto dw = brownian_increments(g, 6, 42, 5);
    for (std::size_t k = 0; k < 8; ++k)
        EXPECT_DOUBLE_EQ(b.at(5, k + 1) - b.at(5, k), dw[k]);
}

TEST(Increments, OneStepSampleMeanNearZero) {
    const TimeGrid g(1.0, 1);
    const std::size_t n = 100000;
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i)
        xs[i] = brownian_increments(g, n, 123, i)[0];
    EXPECT_LE(std::abs(mean_of(xs)), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Simulate, NonFiniteCoefficientsReportPathAndStep) {
    auto spec = DiffusionSpec::scalar([](double, double x) { return x > 0.55 ? NAN : 1.0; },
                                      [](double, double) { return 0.0; }, 0.0);
    try {
        simulate_paths(spec, TimeGrid(1.0, 10), 3, 1);
        FAIL() << "expected SimulationError";
    } catch (const SimulationError& e) {
        EXPECT_EQ(e.path(), 0u);
        EXPECT_EQ(e.step(), 6u);
    }
}

TEST(Simulate, TwoDimensionalCorrelatedDiffusion) {
    DiffusionSpec spec;
    spec.dim = 2;
    spec.x0 = {0.0, 0.0};
    spec.drift = [](double, std::span<const double>, std::span<double> out) { out[0] = out[1] = 0.0; };
    // sigma = [[1, 0], [0.6, 0.8]]: corr 0.6, unit variances.
    spec.diffusion = [](double, std::span<const double>, std::span<double> s) {
        s[0] = 1.0;
        s[1] = 0.0;
        s[2] = 0.6;
        s[3] = 0.8;
    };
    const std::size_t n = 40000;
    const auto b = simulate_paths(spec, TimeGrid(1.0, 4), n, 8, 4);
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i)
        prod[i] = b.at(i, 4, 0) * b.at(i, 4, 1);
    EXPECT_LE(std::abs(mean_of(prod) - 0.6), 4.0 * standard_error(prod));
}
