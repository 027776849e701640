#pragma once

#include <array>
#include <complex>
#include <cstddef>

#include "json.hpp"

namespace umzi {

struct SourceModel;

using Complex = std::complex<double>;

/// UMZI output spatial modes.
enum class Port { c = 0, d = 1 };

/// Relative arrival slot of a pair, Delta t = t_s - t_i.
enum class Slot { minus_tau = 0, zero = 1, plus_tau = 2 };

/// The two virtual output ports of the router.
enum class VirtualPort { bunched, antibunched };

/// Output basis state: which port each photon leaves by and the arrival slot.
struct BasisLabel {
    Port signal;
    Port idler;
    Slot slot;

    constexpr std::size_t index() const {
        return static_cast<std::size_t>(slot) * 4 + static_cast<std::size_t>(signal) * 2 +
               static_cast<std::size_t>(idler);
    }
    static constexpr BasisLabel from_index(std::size_t i) {
        return {static_cast<Port>((i / 2) % 2), static_cast<Port>(i % 2), static_cast<Slot>(i / 4)};
    }
    bool bunched() const { return signal == idler; }
};

inline constexpr std::size_t kBasisSize = 12;

struct UmziConfig {
    double tau = 100e-12;             // arm delay, s
    double phi = 0.0;                 // modulator phase, rad
    double theta0 = 0.0;              // (w_s + w_i) tau mod 2pi, rad
    double coupler_ratio = 0.5;       // power transmission of each coupler
    double coherence_factor = 1.0;    // interference weight of the central peak
    double insertion_loss_db = 4.2;   // per photon

    /// Theta = theta0 + 2 phi, the only phase the output depends on.
    double total_phase() const { return theta0 + 2.0 * phi; }
    /// Per-photon power transmission implied by the insertion loss.
    double transmission() const;
    /// Throws std::domain_error naming the offending field.
    void validate() const;

    bool operator==(const UmziConfig&) const = default;
};

/// Two-photon amplitudes after the first coupler, indexed by the arm taken by
/// the idler and then the signal photon (S = short, L = long).
struct ArmAmplitudes {
    Complex ss;
    Complex sl;
    Complex ls;
    Complex ll;

    double norm() const { return std::norm(ss) + std::norm(sl) + std::norm(ls) + std::norm(ll); }
};

/// Output state over the 12 (signal port, idler port, slot) basis states.
///
/// `amplitudes` hold the coherent part. When the coherence factor is below one
/// the central slot also carries a phase-insensitive residue, stored as plain
/// probabilities in `incoherent`.
struct TwoPhotonState {
    std::array<Complex, kBasisSize> amplitudes{};
    std::array<double, kBasisSize> incoherent{};
    bool normalized = false;

    Complex amplitude(BasisLabel b) const { return amplitudes[b.index()]; }
    double probability(BasisLabel b) const { return std::norm(amplitudes[b.index()]) + incoherent[b.index()]; }

    /// Sum of |amplitude|^2.
    double coherent_norm() const;
    /// Coherent norm plus incoherent weight.
    double total_probability() const;
    double slot_probability(Slot s) const;
    /// Probability of the signal (idler) photon leaving by `p`, any slot.
    double signal_marginal(Port p) const;
    double idler_marginal(Port p) const;
    bool empty() const { return total_probability() <= 0.0; }
};

struct RoutingProbabilities {
    double bunched = 0.0;
    double antibunched = 0.0;
};

/// Coupler output for the input |w_i w_s>_a. Transmission is real sqrt(ratio)
/// onto the short arm, cross coupling i sqrt(1 - ratio) onto the long arm.
ArmAmplitudes first_coupler_state(double ratio);

/// Full two-photon evolution through both couplers.
///
/// Each photon in the long arm picks up exp(i (theta0/2 + phi)): the modulator
/// phase plus an even share of the constant dispersion phase. A pair that takes
/// the long arm together therefore gains exp(i Theta), Theta = theta0 + 2 phi,
/// which is where the pi fringe period in phi comes from. Pairs that split
/// across the arms land in the +-tau slots and only see a global phase.
TwoPhotonState evolve_umzi(const UmziConfig& cfg);

/// As above, and additionally requires tau to exceed the single-photon
/// coherence time of both channels so single-photon fringes are absent.
TwoPhotonState evolve_umzi(const UmziConfig& cfg, const SourceModel& source);

/// Central-slot projection (time-domain filter); side slots are zeroed.
TwoPhotonState postselect_central(const TwoPhotonState& state);

/// Bunched/antibunched split of the central slot, conditioned on the pair
/// landing there.
RoutingProbabilities conditional_routing(const TwoPhotonState& state);

/// Closed-form routing probabilities. For balanced couplers and full coherence
/// this is P_bunched = (1 + cos Theta)/2; the coherence factor scales the
/// cosine term.
RoutingProbabilities routing_probabilities(const UmziConfig& cfg);

/// Modulator phase that sends everything to `port`: solves
/// theta0 + 2 phi = 0 (bunched) or pi (antibunched) mod 2pi, plus k pi.
double pure_state_phase(VirtualPort port, int k, double theta0);

/// Linear-overlap model of partial two-photon coherence, max(0, 1 - tau/T_c).
double coherence_factor(double coherence_time, double tau);

void to_json(nlohmann::json& j, const UmziConfig& c);
void from_json(const nlohmann::json& j, UmziConfig& c);

}  // namespace umzi
