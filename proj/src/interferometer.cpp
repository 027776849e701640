#include "umzi/interferometer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "umzi/source_model.hpp"

namespace umzi {

namespace {

constexpr Complex kI{0.0, 1.0};

enum class Arm { short_arm = 0, long_arm = 1 };

// Second coupler: amplitude for a photon in `arm` to leave by `port`.
Complex recombine(Arm arm, Port port, double ratio) {
    const double t = std::sqrt(ratio);
    const double x = std::sqrt(1.0 - ratio);
    const bool straight = (arm == Arm::short_arm) == (port == Port::c);
    return straight ? Complex{t, 0.0} : kI * x;
}

Slot slot_for(Arm idler_arm, Arm signal_arm) {
    if (idler_arm == signal_arm)
        return Slot::zero;
    // The photon in the long arm arrives tau later.
    return signal_arm == Arm::long_arm ? Slot::plus_tau : Slot::minus_tau;
}

}  // namespace

double UmziConfig::transmission() const { return std::pow(10.0, -insertion_loss_db / 10.0); }

void UmziConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw std::domain_error("umzi.tau must be positive");
    if (!std::isfinite(phi))
        throw std::domain_error("umzi.phi must be finite");
    if (!std::isfinite(theta0))
        throw std::domain_error("umzi.theta0 must be finite");
    if (!(coupler_ratio > 0.0 && coupler_ratio < 1.0))
        throw std::domain_error("umzi.coupler_ratio must lie in (0, 1)");
    if (!(coherence_factor >= 0.0 && coherence_factor <= 1.0))
        throw std::domain_error("umzi.coherence_factor must lie in [0, 1]");
    if (!(insertion_loss_db >= 0.0) || !std::isfinite(insertion_loss_db))
        throw std::domain_error("umzi.insertion_loss_db must be non-negative");
}

double TwoPhotonState::coherent_norm() const {
    double s = 0.0;
    for (const auto& a : amplitudes)
        s += std::norm(a);
    return s;
}

double TwoPhotonState::total_probability() const {
    double s = coherent_norm();
    for (double p : incoherent)
        s += p;
    return s;
}

double TwoPhotonState::slot_probability(Slot s) const {
    double total = 0.0;
    for (std::size_t i = 0; i < kBasisSize; ++i)
        if (BasisLabel::from_index(i).slot == s)
            total += probability(BasisLabel::from_index(i));
    return total;
}

double TwoPhotonState::signal_marginal(Port p) const {
    double total = 0.0;
    for (std::size_t i = 0; i < kBasisSize; ++i)
        if (BasisLabel::from_index(i).signal == p)
            total += probability(BasisLabel::from_index(i));
    return total;
}

double TwoPhotonState::idler_marginal(Port p) const {
    double total = 0.0;
    for (std::size_t i = 0; i < kBasisSize; ++i)
        if (BasisLabel::from_index(i).idler == p)
            total += probability(BasisLabel::from_index(i));
    return total;
}

ArmAmplitudes first_coupler_state(double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::domain_error("coupler ratio must lie in (0, 1)");
    const Complex s{std::sqrt(ratio), 0.0};
    const Complex l = kI * std::sqrt(1.0 - ratio);
    return {s * s, s * l, l * s, l * l};
}

TwoPhotonState evolve_umzi(const UmziConfig& cfg) {
    cfg.validate();
    const ArmAmplitudes arms = first_coupler_state(cfg.coupler_ratio);
    const Complex long_phase = std::polar(1.0, 0.5 * cfg.theta0 + cfg.phi);

    auto arm_amplitude = [&](Arm idler_arm, Arm signal_arm) {
        Complex a = idler_arm == Arm::short_arm ? (signal_arm == Arm::short_arm ? arms.ss : arms.sl)
                                                : (signal_arm == Arm::short_arm ? arms.ls : arms.ll);
        if (idler_arm == Arm::long_arm)
            a *= long_phase;
        if (signal_arm == Arm::long_arm)
            a *= long_phase;
        return a;
    };

    const double gamma = cfg.coherence_factor;
    const double coherent_scale = std::sqrt(gamma);
    TwoPhotonState out;

    for (Port sp : {Port::c, Port::d}) {
        for (Port ip : {Port::c, Port::d}) {
            auto through = [&](Arm ia, Arm sa) {
                return arm_amplitude(ia, sa) * recombine(ia, ip, cfg.coupler_ratio) *
                       recombine(sa, sp, cfg.coupler_ratio);
            };
            const Complex both_short = through(Arm::short_arm, Arm::short_arm);
            const Complex both_long = through(Arm::long_arm, Arm::long_arm);
            const std::size_t central = BasisLabel{sp, ip, Slot::zero}.index();
            out.amplitudes[central] = coherent_scale * (both_short + both_long);
            out.incoherent[central] = (1.0 - gamma) * (std::norm(both_short) + std::norm(both_long));

            out.amplitudes[BasisLabel{sp, ip, slot_for(Arm::short_arm, Arm::long_arm)}.index()] =
                through(Arm::short_arm, Arm::long_arm);
            out.amplitudes[BasisLabel{sp, ip, slot_for(Arm::long_arm, Arm::short_arm)}.index()] =
                through(Arm::long_arm, Arm::short_arm);
        }
    }
    out.normalized = std::abs(out.total_probability() - 1.0) < 1e-12;
    return out;
}

TwoPhotonState evolve_umzi(const UmziConfig& cfg, const SourceModel& source) {
    const double tau_coh =
        std::max(source.signal.single_photon_coherence_time(), source.idler.single_photon_coherence_time());
    if (!(cfg.tau > tau_coh))
        throw std::domain_error("umzi.tau must exceed the single-photon coherence time");
    return evolve_umzi(cfg);
}

TwoPhotonState postselect_central(const TwoPhotonState& state) {
    TwoPhotonState out;
    for (std::size_t i = 0; i < kBasisSize; ++i) {
        if (BasisLabel::from_index(i).slot != Slot::zero)
            continue;
        out.amplitudes[i] = state.amplitudes[i];
        out.incoherent[i] = state.incoherent[i];
    }
    out.normalized = false;
    return out;
}

RoutingProbabilities conditional_routing(const TwoPhotonState& state) {
    double bunched = 0.0;
    double antibunched = 0.0;
    for (std::size_t i = 0; i < kBasisSize; ++i) {
        const BasisLabel b = BasisLabel::from_index(i);
        if (b.slot != Slot::zero)
            continue;
        (b.bunched() ? bunched : antibunched) += state.probability(b);
    }
    const double total = bunched + antibunched;
    if (!(total > 0.0))
        throw std::domain_error("central slot is empty");
    return {bunched / total, antibunched / total};
}

RoutingProbabilities routing_probabilities(const UmziConfig& cfg) {
    cfg.validate();
    // With a = ratio, b = 1 - ratio the central slot holds a^2 + b^2 of the
    // pair probability, of which 2ab (a^2 + b^2 - 2ab gamma cos Theta) is
    // antibunched.
    const double a = cfg.coupler_ratio;
    const double b = 1.0 - a;
    const double central = a * a + b * b;
    const double anti =
        2.0 * a * b * (central - 2.0 * a * b * cfg.coherence_factor * std::cos(cfg.total_phase())) / central;
    return {1.0 - anti, anti};
}

double pure_state_phase(VirtualPort port, int k, double theta0) {
    const double target = port == VirtualPort::bunched ? 0.0 : kPi;
    double offset = std::fmod(target - theta0, kTwoPi);
    if (offset < 0.0)
        offset += kTwoPi;
    return 0.5 * offset + k * kPi;
}

double coherence_factor(double coherence_time, double tau) {
    if (!(coherence_time > 0.0) || !(tau > 0.0))
        throw std::domain_error("coherence time and delay must be positive");
    return std::max(0.0, 1.0 - tau / coherence_time);
}

void to_json(nlohmann::json& j, const UmziConfig& c) {
    j = nlohmann::json{{"tau", c.tau},
                       {"phi", c.phi},
                       {"theta0", c.theta0},
                       {"coupler_ratio", c.coupler_ratio},
                       {"coherence_factor", c.coherence_factor},
                       {"insertion_loss_db", c.insertion_loss_db}};
}

void from_json(const nlohmann::json& j, UmziConfig& c) {
    c.tau = j.at("tau").get<double>();
    c.phi = j.at("phi").get<double>();
    c.theta0 = j.at("theta0").get<double>();
    c.coupler_ratio = j.at("coupler_ratio").get<double>();
    c.coherence_factor = j.at("coherence_factor").get<double>();
    c.insertion_loss_db = j.at("insertion_loss_db").get<double>();
}

}  // namespace umzi
