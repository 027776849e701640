#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "umzi/spatial_beating.hpp"

using namespace umzi;

namespace {

constexpr double pi = 3.14159265358979323846;
constexpr double c = 299792458.0;

BeatingConfig nominal(double v0, BeatingMode mode = BeatingMode::antibunched) {
    return beating_config_for(default_source(), mode, v0);
}

}  // namespace

TEST(BeatingProbability, ZeroDelay) {
    for (double v0 : {0.0, 0.5, 0.99, 1.0})
        EXPECT_NEAR(beating_probability(nominal(v0), 0.0), 1.0 - v0, 1e-15);
}

TEST(BeatingProbability, NoVisibilityIsFlat) {
    const BeatingConfig cfg = nominal(0.0);
    for (double t = -20e-12; t < 20e-12; t += 0.37e-12)
        EXPECT_DOUBLE_EQ(beating_probability(cfg, t), 1.0);
}

TEST(BeatingProbability, AntibunchedPeriodIs1p25ps) {
    const BeatingConfig cfg = nominal(1.0);
    const double period = 1.0 / (c / 1549.32e-9 - c / 1555.75e-9);
    EXPECT_NEAR(period, 1.25e-12, 0.01 * 1.25e-12);
    // with a flat envelope the fringe repeats after one period
    BeatingConfig flat = cfg;
    flat.sigma = 1e-30;
    for (double t : {0.1e-12, 0.4e-12, 2.3e-12})
        EXPECT_NEAR(beating_probability(flat, t + period), beating_probability(flat, t), 1e-9);
    // minima of the closed form on a fine grid are spaced by one period
    std::vector<double> minima;
    const double dt = 1e-16;
    double prev2 = beating_probability(cfg, 0.0), prev = beating_probability(cfg, dt);
    for (int i = 2; i < 60000; ++i) {
        const double cur = beating_probability(cfg, i * dt);
        if (prev < prev2 && prev < cur)
            minima.push_back((i - 1) * dt);
        prev2 = prev;
        prev = cur;
    }
    ASSERT_GE(minima.size(), 3u);
    EXPECT_NEAR(minima[2] - minima[1], period, 0.01 * period);
}

TEST(BeatingPeriod, Antibunched) {
    const BeatingPeriod p = beating_period(nominal(1.0));
    EXPECT_FALSE(p.infinite);
    EXPECT_NEAR(p.time, 1.25e-12, 0.01 * 1.25e-12);
    EXPECT_NEAR(p.length, 375e-6, 0.01 * 375e-6);
    EXPECT_DOUBLE_EQ(p.length, c * p.time);
}

TEST(BeatingPeriod, BunchedNearQuotedValue) {
    const BeatingPeriod p = beating_period(nominal(1.0, BeatingMode::bunched));
    EXPECT_NEAR(p.time, 2.586e-15, 0.01 * 2.586e-15);
    EXPECT_NEAR(p.time, 2.59e-15, 0.01 * 2.59e-15);
    EXPECT_NEAR(p.length, 775.5e-9, 0.01 * 775.5e-9);
    const double oracle = 1.0 / (c / 1549.32e-9 + c / 1555.75e-9);
    EXPECT_NEAR(p.time, oracle, 1e-24);
}

TEST(BeatingPeriod, DegenerateIsInfinite) {
    BeatingConfig cfg = nominal(1.0);
    cfg.nu_s = cfg.nu_i;
    const BeatingPeriod p = beating_period(cfg);
    EXPECT_TRUE(p.infinite);
    EXPECT_TRUE(std::isinf(p.time));
}

TEST(Envelope, FirstZero) {
    EXPECT_NEAR(envelope_first_zero(2 * pi * 32e9), 15.625e-12, 1e-21);
    EXPECT_NEAR(envelope_first_zero(4 * pi * 32e9), 15.625e-12 / 2, 1e-21);
    const double z = envelope_first_zero(2 * pi * 32e9);
    for (double v0 : {0.1, 0.7, 1.0})
        EXPECT_NEAR(beating_probability(nominal(v0), z), 1.0, 1e-15);
    EXPECT_THROW(envelope_first_zero(0.0), std::domain_error);
}

TEST(Fidelity, Examples) {
    EXPECT_DOUBLE_EQ(fidelity_from_visibility(0.99), 0.995);
    EXPECT_DOUBLE_EQ(fidelity_from_visibility(0.0), 0.5);
    EXPECT_DOUBLE_EQ(fidelity_from_visibility(1.0), 1.0);
    EXPECT_THROW(fidelity_from_visibility(1.01), std::domain_error);
    EXPECT_THROW(fidelity_from_visibility(-0.1), std::domain_error);
}

TEST(Sinc, Convention) {
    EXPECT_EQ(sinc(0.0), 1.0);
    EXPECT_NEAR(sinc(pi), 0.0, 1e-16);
    EXPECT_NEAR(sinc(1e-5), std::sin(1e-5) / 1e-5, 1e-15);
    EXPECT_NEAR(sinc(2.0), std::sin(2.0) / 2.0, 1e-16);
}

TEST(BeatingProperties, RandomBoundsSymmetryAndEvenness) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0), nu(150e12, 250e12), dt(-50e-12, 50e-12);
    for (int n = 0; n < 2000; ++n) {
        BeatingConfig cfg;
        cfg.nu_i = nu(rng);
        cfg.nu_s = nu(rng);
        cfg.v0 = u(rng);
        cfg.sigma = 2 * pi * (1e9 + 100e9 * u(rng));
        cfg.mode = n % 2 ? BeatingMode::bunched : BeatingMode::antibunched;
        const double t = dt(rng);
        const double p = beating_probability(cfg, t);
        ASSERT_GE(p, 1.0 - cfg.v0 - 1e-15);
        ASSERT_LE(p, 1.0 + cfg.v0 + 1e-15);
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 2.0);
        ASSERT_LE(std::abs(p - 1.0), cfg.v0 * std::abs(sinc(cfg.sigma * t)) + 1e-15);
        ASSERT_NEAR(beating_probability(cfg, -t), p, 1e-12);
        BeatingConfig swapped = cfg;
        std::swap(swapped.nu_i, swapped.nu_s);
        ASSERT_NEAR(beating_probability(swapped, t), p, 1e-12);
    }
}

TEST(BeatingScan, UnitVisibilityMinimumLeavesOnlyAccidentals) {
    BeatingConfig cfg = nominal(1.0);
    cfg.delay_grid = {0.0};
    const BeatingRates rates{300.0, 2.0};
    const auto scan = simulate_beating_scan(cfg, rates, 10.0, 1);
    EXPECT_NEAR(scan[0].prediction, 2.0 * 10.0, 1e-12);
    BeatingRates noiseless{300.0, 0.0};
    const auto clean = simulate_beating_scan(cfg, noiseless, 10.0, 1);
    EXPECT_EQ(clean[0].prediction, 0.0);
    EXPECT_EQ(clean[0].counts, 0u);
}

TEST(BeatingScan, CountsAreDeterministicAndPoisson) {
    BeatingConfig cfg = nominal(0.99);
    for (int i = 0; i < 64; ++i)
        cfg.delay_grid.push_back(i * 5e-12 / 63);
    const BeatingRates rates{330.0, 6.0};
    const auto a = simulate_beating_scan(cfg, rates, 10.0, 77);
    const auto b = simulate_beating_scan(cfg, rates, 10.0, 77);
    std::ostringstream sa, sb;
    write_beating_csv(sa, a);
    write_beating_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "delta_tau_ps,counts,prediction");
    double chi2 = 0.0;
    for (const auto& p : a) {
        EXPECT_NEAR(p.prediction, 10.0 * (330.0 * beating_probability(cfg, p.delta_tau) + 6.0), 1e-9);
        chi2 += (static_cast<double>(p.counts) - p.prediction) * (static_cast<double>(p.counts) - p.prediction) /
                p.prediction;
    }
    // 64 dof; 4 sigma of sqrt(2 * 64)
    EXPECT_LT(std::abs(chi2 - 64.0), 4 * std::sqrt(128.0));
}

TEST(BeatingScan, ScanMinimaSpacing) {
    BeatingConfig cfg = nominal(0.99);
    for (int i = 0; i < 501; ++i)
        cfg.delay_grid.push_back(i * 5e-12 / 500);
    const auto scan = simulate_beating_scan(cfg, {1e6, 0.0}, 1.0, 3);
    std::vector<double> minima;
    for (std::size_t i = 1; i + 1 < scan.size(); ++i)
        if (scan[i].prediction < scan[i - 1].prediction && scan[i].prediction <= scan[i + 1].prediction)
            minima.push_back(scan[i].delta_tau);
    ASSERT_GE(minima.size(), 3u);
    const double step = 5e-12 / 500;
    EXPECT_NEAR(minima[2] - minima[1], 1.2504e-12, step);
}

TEST(BeatingScan, Errors) {
    BeatingConfig cfg = nominal(0.99);
    EXPECT_THROW(simulate_beating_scan(cfg, {1.0, 0.0}, 1.0, 1), std::invalid_argument);
    cfg.delay_grid = {0.0};
    cfg.mode = BeatingMode::bunched;
    EXPECT_THROW(simulate_beating_scan(cfg, {1.0, 0.0}, 1.0, 1), std::invalid_argument);
    cfg.mode = BeatingMode::antibunched;
    cfg.v0 = 1.5;
    EXPECT_THROW(simulate_beating_scan(cfg, {1.0, 0.0}, 1.0, 1), std::domain_error);
}
