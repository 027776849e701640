#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <complex>
#include <random>

#include "umzi/interferometer.hpp"
#include "umzi/source_model.hpp"

using namespace umzi;
using cd = std::complex<double>;

namespace {

constexpr double pi = 3.14159265358979323846;
const cd I{0.0, 1.0};

// Independent oracle: propagate each photon through BS1 -> arm phase -> BS2
// with a 2x2 matrix per coupler, then expand the product state and bin by the
// arrival-time difference. Each photon's long-arm phase is split arbitrarily
// (theta_s + theta_i = theta0); only physical quantities are compared.
struct Oracle {
    std::array<double, 12> prob{};          // label index -> probability
    std::array<cd, 4> central{};            // (signal, idler) ports for slot 0
};

Oracle brute_force(double ratio, double theta0, double phi, double gamma, double split) {
    const double t = std::sqrt(ratio), x = std::sqrt(1.0 - ratio);
    // BS1: input a -> arm (0 short, 1 long)
    const cd bs1[2] = {t, I * x};
    // BS2: arm -> port (0 c, 1 d)
    const cd bs2[2][2] = {{t, I * x}, {I * x, t}};
    const double theta_s = split * theta0;
    const double theta_i = theta0 - theta_s;

    Oracle o;
    std::array<cd, 12> amp{};
    std::array<cd, 4> same_time_ss{}, same_time_ll{};
    for (int as = 0; as < 2; ++as)
        for (int ai = 0; ai < 2; ++ai)
            for (int ps = 0; ps < 2; ++ps)
                for (int pi_ = 0; pi_ < 2; ++pi_) {
                    cd a = bs1[as] * bs1[ai] * bs2[as][ps] * bs2[ai][pi_];
                    if (as == 1)
                        a *= std::exp(I * (theta_s + phi));
                    if (ai == 1)
                        a *= std::exp(I * (theta_i + phi));
                    const int slot = 1 + (as - ai);  // dt = t_s - t_i in units of tau
                    const int k = ps * 2 + pi_;
                    if (slot == 1) {
                        (as == 0 ? same_time_ss : same_time_ll)[static_cast<std::size_t>(k)] += a;
                    } else {
                        amp[static_cast<std::size_t>(slot * 4 + k)] += a;
                    }
                }
    for (int k = 0; k < 4; ++k) {
        const cd ss = same_time_ss[static_cast<std::size_t>(k)];
        const cd ll = same_time_ll[static_cast<std::size_t>(k)];
        o.central[static_cast<std::size_t>(k)] = std::sqrt(gamma) * (ss + ll);
        o.prob[static_cast<std::size_t>(4 + k)] =
            gamma * std::norm(ss + ll) + (1.0 - gamma) * (std::norm(ss) + std::norm(ll));
    }
    for (int s : {0, 2})
        for (int k = 0; k < 4; ++k)
            o.prob[static_cast<std::size_t>(s * 4 + k)] = std::norm(amp[static_cast<std::size_t>(s * 4 + k)]);
    return o;
}

UmziConfig lossless(double phi, double theta0 = 0.0, double ratio = 0.5, double gamma = 1.0) {
    UmziConfig c;
    c.phi = phi;
    c.theta0 = theta0;
    c.coupler_ratio = ratio;
    c.coherence_factor = gamma;
    c.insertion_loss_db = 0.0;
    return c;
}

constexpr BasisLabel label(Port s, Port i, Slot t) { return {s, i, t}; }

}  // namespace

TEST(FirstCoupler, FiftyFiftyAmplitudes) {
    const ArmAmplitudes a = first_coupler_state(0.5);
    EXPECT_NEAR(std::abs(a.ss - cd(0.5, 0.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(a.ll - cd(-0.5, 0.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(a.sl - cd(0.0, 0.5)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(a.ls - cd(0.0, 0.5)), 0.0, 1e-15);
}

TEST(FirstCoupler, HalfTheNormIsInTheBunchedArmComponent) {
    const ArmAmplitudes a = first_coupler_state(0.5);
    // psi1' = (|SS> - |LL>)/sqrt2
    const cd overlap = (a.ss - a.ll) / std::sqrt(2.0);
    EXPECT_NEAR(std::norm(overlap), 0.5, 1e-15);
}

TEST(FirstCoupler, TransparentLimit) {
    const ArmAmplitudes a = first_coupler_state(1.0 - 1e-12);
    EXPECT_NEAR(std::abs(a.ss), 1.0, 1e-9);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
}

TEST(FirstCoupler, RatioOutOfRange) {
    EXPECT_THROW(first_coupler_state(0.0), std::domain_error);
    EXPECT_THROW(first_coupler_state(1.0), std::domain_error);
    EXPECT_THROW(first_coupler_state(1.2), std::domain_error);
}

TEST(EvolveUmzi, MatchesBruteForceExpansion) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ang(-2 * pi, 2 * pi), r(0.05, 0.95), u(0.0, 1.0);
    for (int n = 0; n < 1000; ++n) {
        const double phi = ang(rng), th = ang(rng), ratio = r(rng), gamma = u(rng);
        const TwoPhotonState s = evolve_umzi(lossless(phi, th, ratio, gamma));
        const Oracle o = brute_force(ratio, th, phi, gamma, u(rng));
        for (std::size_t k = 0; k < kBasisSize; ++k)
            ASSERT_NEAR(s.probability(BasisLabel::from_index(k)), o.prob[k], 1e-12) << "label " << k;
        for (std::size_t k = 0; k < 4; ++k)
            ASSERT_NEAR(std::abs(s.amplitudes[4 + k] - o.central[k]), 0.0, 1e-12);
    }
}

TEST(EvolveUmzi, ThetaZeroCentralIsPurelyBunched) {
    const TwoPhotonState s = evolve_umzi(lossless(0.0));
    EXPECT_GT(std::abs(s.amplitude(label(Port::c, Port::c, Slot::zero))), 0.1);
    EXPECT_GT(std::abs(s.amplitude(label(Port::d, Port::d, Slot::zero))), 0.1);
    EXPECT_NEAR(std::abs(s.amplitude(label(Port::c, Port::d, Slot::zero))), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(s.amplitude(label(Port::d, Port::c, Slot::zero))), 0.0, 1e-15);
}

TEST(EvolveUmzi, SideSlotsCarryHalfTheNormAndIgnorePhi) {
    const TwoPhotonState ref = evolve_umzi(lossless(0.0));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(0.0, 2 * pi);
    for (int n = 0; n < 200; ++n) {
        const TwoPhotonState s = evolve_umzi(lossless(ang(rng), ang(rng)));
        EXPECT_NEAR(s.slot_probability(Slot::minus_tau) + s.slot_probability(Slot::plus_tau), 0.5, 1e-12);
        for (Slot t : {Slot::minus_tau, Slot::plus_tau})
            for (Port a : {Port::c, Port::d})
                for (Port b : {Port::c, Port::d})
                    EXPECT_NEAR(s.probability(label(a, b, t)), ref.probability(label(a, b, t)), 1e-12);
    }
}

TEST(EvolveUmzi, UnitaryForRandomLosslessDevices) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ang(-10.0, 10.0), r(0.01, 0.99);
    for (int n = 0; n < 1000; ++n) {
        const TwoPhotonState s = evolve_umzi(lossless(ang(rng), ang(rng), r(rng)));
        ASSERT_NEAR(s.total_probability(), 1.0, 1e-12);
        ASSERT_LE(s.coherent_norm(), 1.0 + 1e-12);
    }
}

TEST(EvolveUmzi, DependsOnlyOnTotalPhase) {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> ang(-5.0, 5.0);
    for (int n = 0; n < 500; ++n) {
        const double th = ang(rng), phi = ang(rng), d = ang(rng);
        const TwoPhotonState a = evolve_umzi(lossless(phi, th));
        const TwoPhotonState b = evolve_umzi(lossless(phi - d, th + 2 * d));
        for (std::size_t k = 0; k < kBasisSize; ++k)
            ASSERT_NEAR(std::abs(a.amplitudes[k] - b.amplitudes[k]), 0.0, 1e-12);
    }
}

TEST(EvolveUmzi, SinglesMarginalsAreHalf) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> ang(0.0, 2 * pi), u(0.0, 1.0);
    for (int n = 0; n < 500; ++n) {
        const TwoPhotonState s = evolve_umzi(lossless(ang(rng), ang(rng), 0.5, u(rng)));
        for (Port p : {Port::c, Port::d}) {
            ASSERT_NEAR(s.signal_marginal(p), 0.5, 1e-12);
            ASSERT_NEAR(s.idler_marginal(p), 0.5, 1e-12);
        }
    }
}

TEST(EvolveUmzi, RequiresDelayBeyondSinglePhotonCoherence) {
    const SourceModel src = default_source();
    UmziConfig c = lossless(0.0);
    c.tau = 20e-12;  // below 1/32 GHz
    EXPECT_THROW(evolve_umzi(c, src), std::domain_error);
    c.tau = 100e-12;
    EXPECT_NO_THROW(evolve_umzi(c, src));
}

TEST(PostSelect, NormIsHalfGamma) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> ang(0.0, 2 * pi), u(0.0, 1.0);
    for (int n = 0; n < 1000; ++n) {
        const double g = u(rng);
        const TwoPhotonState s = postselect_central(evolve_umzi(lossless(ang(rng), ang(rng), 0.5, g)));
        ASSERT_NEAR(s.coherent_norm(), g / 2.0, 1e-12);
        ASSERT_NEAR(s.slot_probability(Slot::minus_tau) + s.slot_probability(Slot::plus_tau), 0.0, 0.0);
    }
    const TwoPhotonState one = postselect_central(evolve_umzi(lossless(0.3, 1.1)));
    EXPECT_NEAR(one.coherent_norm(), 0.5, 1e-15);
}

TEST(PostSelect, ZeroCoherenceHasNoCoherentPart) {
    const TwoPhotonState s = postselect_central(evolve_umzi(lossless(0.7, 0.0, 0.5, 0.0)));
    EXPECT_NEAR(s.coherent_norm(), 0.0, 1e-15);
    // the non-interfering residue stays, flat in phi
    EXPECT_NEAR(s.total_probability(), 0.5, 1e-12);
}

TEST(PostSelect, ThetaPiIsPurelyAntibunched) {
    const TwoPhotonState s = postselect_central(evolve_umzi(lossless(pi / 2)));
    EXPECT_NEAR(std::abs(s.amplitude(label(Port::c, Port::c, Slot::zero))), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(s.amplitude(label(Port::d, Port::d, Slot::zero))), 0.0, 1e-15);
    EXPECT_NEAR(std::norm(s.amplitude(label(Port::c, Port::d, Slot::zero))) +
                    std::norm(s.amplitude(label(Port::d, Port::c, Slot::zero))),
                0.5, 1e-12);
}

TEST(Routing, Examples) {
    auto p = routing_probabilities(lossless(0.0));
    EXPECT_NEAR(p.bunched, 1.0, 1e-15);
    EXPECT_NEAR(p.antibunched, 0.0, 1e-15);
    p = routing_probabilities(lossless(pi / 2));
    EXPECT_NEAR(p.bunched, 0.0, 1e-15);
    EXPECT_NEAR(p.antibunched, 1.0, 1e-15);
}

TEST(Routing, ClosedFormAndConditionalAgree) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ang(-2 * pi, 2 * pi);
    for (int n = 0; n < 1000; ++n) {
        const double th = ang(rng), phi = ang(rng);
        const UmziConfig c = lossless(phi, th);
        const RoutingProbabilities p = routing_probabilities(c);
        ASSERT_NEAR(p.bunched + p.antibunched, 1.0, 1e-12);
        ASSERT_NEAR(p.bunched, (1.0 + std::cos(th + 2 * phi)) / 2.0, 1e-12);
        const RoutingProbabilities q = conditional_routing(postselect_central(evolve_umzi(c)));
        ASSERT_NEAR(q.bunched, p.bunched, 1e-12);
        ASSERT_NEAR(q.antibunched, p.antibunched, 1e-12);
    }
}

TEST(Routing, ConditionalAgreesForPartialCoherenceAndUnequalCouplers) {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> ang(0.0, 2 * pi), u(0.0, 1.0), r(0.1, 0.9);
    for (int n = 0; n < 500; ++n) {
        const UmziConfig c = lossless(ang(rng), ang(rng), r(rng), u(rng));
        const RoutingProbabilities p = routing_probabilities(c);
        const RoutingProbabilities q = conditional_routing(postselect_central(evolve_umzi(c)));
        ASSERT_NEAR(q.bunched, p.bunched, 1e-12);
        ASSERT_NEAR(p.bunched + p.antibunched, 1.0, 1e-12);
    }
}

TEST(Routing, PeriodPiAndComplementarity) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> ang(0.0, 2 * pi);
    for (int n = 0; n < 500; ++n) {
        const double th = ang(rng), phi = ang(rng);
        const double p2 = routing_probabilities(lossless(phi, th)).antibunched;
        ASSERT_NEAR(routing_probabilities(lossless(phi + pi, th)).antibunched, p2, 1e-12);
        ASSERT_NEAR(routing_probabilities(lossless(phi + pi / 2, th)).bunched, p2, 1e-12);
    }
}

TEST(PureStatePhase, Examples) {
    const double a = pure_state_phase(VirtualPort::antibunched, 1, 0.0);
    EXPECT_NEAR(a, 3 * pi / 2, 1e-15);
    EXPECT_NEAR(routing_probabilities(lossless(a)).antibunched, 1.0, 1e-15);
    EXPECT_NEAR(pure_state_phase(VirtualPort::bunched, 0, 0.0), 0.0, 1e-15);
    const double b = pure_state_phase(VirtualPort::antibunched, 0, pi / 3);
    EXPECT_NEAR(b, pi / 3, 1e-15);
    EXPECT_NEAR(routing_probabilities(lossless(b, pi / 3)).antibunched, 1.0, 1e-15);
}

TEST(PureStatePhase, RandomThetaGivesPureOutput) {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> ang(-10.0, 10.0);
    for (int n = 0; n < 200; ++n) {
        const double th = ang(rng);
        for (int k = -2; k <= 2; ++k) {
            const double pb = pure_state_phase(VirtualPort::bunched, k, th);
            const double pa = pure_state_phase(VirtualPort::antibunched, k, th);
            ASSERT_NEAR(routing_probabilities(lossless(pb, th)).bunched, 1.0, 1e-12);
            ASSERT_NEAR(routing_probabilities(lossless(pa, th)).antibunched, 1.0, 1e-12);
        }
    }
}

TEST(CoherenceFactor, Examples) {
    EXPECT_EQ(coherence_factor(100e-12, 100e-12), 0.0);
    EXPECT_EQ(coherence_factor(50e-12, 100e-12), 0.0);
    EXPECT_NEAR(coherence_factor(10e-6, 100e-12), 1.0 - 1e-5, 1e-15);
    EXPECT_NEAR(coherence_factor(1e300, 100e-12), 1.0, 1e-15);
    EXPECT_THROW(coherence_factor(0.0, 1e-10), std::domain_error);
    EXPECT_THROW(coherence_factor(1e-6, -1.0), std::domain_error);
}

TEST(UmziConfigTest, Validation) {
    UmziConfig c;
    EXPECT_NO_THROW(c.validate());
    c.coupler_ratio = 1.2;
    EXPECT_THROW(c.validate(), std::domain_error);
    c = UmziConfig{};
    c.coherence_factor = 1.5;
    EXPECT_THROW(c.validate(), std::domain_error);
    c = UmziConfig{};
    c.tau = 0.0;
    EXPECT_THROW(c.validate(), std::domain_error);
    EXPECT_NEAR(UmziConfig{}.transmission(), std::pow(10.0, -0.42), 1e-15);
}
