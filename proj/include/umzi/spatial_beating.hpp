#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "umzi/coincidence.hpp"

namespace umzi {

enum class BeatingMode { antibunched, bunched };

/// Spatial-beating measurement: the router output recombined on a 50/50
/// coupler with a variable relative delay.
struct BeatingConfig {
    BeatingMode mode = BeatingMode::antibunched;
    double nu_i = 0.0;   // Hz
    double nu_s = 0.0;   // Hz
    double sigma = kTwoPi * 32e9;  // filter bandwidth, rad/s
    double v0 = 1.0;
    std::vector<double> delay_grid;  // s

    /// Beat frequency in Hz: |nu_i - nu_s| or nu_i + nu_s depending on mode.
    double beat_frequency() const;
    void validate() const;
};

BeatingConfig beating_config_for(const SourceModel& source, BeatingMode mode, double v0);

/// sin(x)/x with sinc(0) = 1.
double sinc(double x);

/// Normalized coincidence probability 1 - v0 sinc(sigma dtau) cos(2 pi f dtau).
double beating_probability(const BeatingConfig& cfg, double delta_tau);

struct BeatingPeriod {
    double time = 0.0;    // s
    double length = 0.0;  // m
    bool infinite = false;
};

BeatingPeriod beating_period(const BeatingConfig& cfg);

/// pi / sigma, the first zero of the sinc envelope.
double envelope_first_zero(double sigma);

/// F = (1 + v0) / 2.
double fidelity_from_visibility(double v0);

struct BeatingRates {
    double base_rate = 0.0;        // mean true coincidence rate in the filter
    double accidental_rate = 0.0;  // uncorrelated coincidences in the filter
};

/// Coincidence rates after recombination for a pure antibunched input: half
/// of all pairs land in the central antibunched slot.
BeatingRates beating_rates(const Apparatus& app);

struct BeatingPoint {
    double delta_tau = 0.0;
    std::uint64_t counts = 0;
    double prediction = 0.0;  // expected counts
};

/// Poisson-sampled delay scan around the closed form. Point i uses
/// derive_seed(seed, i). Antibunched mode only.
std::vector<BeatingPoint> simulate_beating_scan(const BeatingConfig& cfg, const BeatingRates& rates,
                                                double duration_per_point, std::uint64_t seed);

void write_beating_csv(std::ostream& out, const std::vector<BeatingPoint>& scan);

}  // namespace umzi
