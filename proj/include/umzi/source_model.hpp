#pragma once

#include "json.hpp"

namespace umzi {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Largest |2 w_p - w_s - w_i| accepted as energy conserving.
inline constexpr double kEnergyConservationTolerance = kTwoPi * 1.0e9;  // rad/s

/// One filtered photon channel (signal or idler).
///
/// The center frequency is derived from the wavelength and is never set
/// independently, so c = nu * lambda holds by construction. The coherence
/// time is the order-of-magnitude estimate 1 / bandwidth.
class SpectralMode {
public:
    SpectralMode() = default;
    SpectralMode(double center_wavelength_nm, double bandwidth_3db_hz, int filter_order = 3);

    double center_wavelength_nm() const { return wavelength_nm_; }
    double center_frequency() const { return kSpeedOfLight / (wavelength_nm_ * 1e-9); }
    double angular_frequency() const { return kTwoPi * center_frequency(); }
    double bandwidth_3db() const { return bandwidth_hz_; }
    int filter_order() const { return filter_order_; }
    double single_photon_coherence_time() const { return 1.0 / bandwidth_hz_; }

    bool operator==(const SpectralMode&) const = default;

private:
    double wavelength_nm_ = 1550.0;
    double bandwidth_hz_ = 32e9;
    int filter_order_ = 3;
};

/// Accidental singles (Raman noise, leakage) lumped per detection channel, in
/// detected counts per second.
struct NoiseRates {
    double signal = 0.0;
    double idler = 0.0;
    bool operator==(const NoiseRates&) const = default;
};

/// Entangled-pair source parameters.
struct SourceModel {
    double pump_wavelength_nm = 1552.5283423562;
    SpectralMode signal{1555.75, 32e9};
    SpectralMode idler{1549.32, 32e9};
    double two_photon_coherence_time = 10e-6;  // s
    double pair_rate = 2e6;                    // pairs/s
    NoiseRates accidental_singles_rate;

    double pump_angular_frequency() const { return kTwoPi * kSpeedOfLight / (pump_wavelength_nm * 1e-9); }

    /// Throws std::domain_error on the first violated invariant.
    void validate() const;

    bool operator==(const SourceModel&) const = default;
};

/// Pump wavelength that places the pump exactly midway (in frequency) between
/// the given signal and idler channels.
double energy_conserving_pump_nm(const SpectralMode& signal, const SpectralMode& idler);

/// Source with the experiment's channel plan: signal 1555.75 nm, idler
/// 1549.32 nm, 32 GHz filters, T_c = 10 us. The pump is placed at the
/// energy-conserving midpoint (1552.53 nm); the nominal 1552.16 nm pump is
/// 92 GHz away from it and would fail validation.
SourceModel default_source();

/// |nu_i - nu_s| in Hz.
double frequency_spacing(const SourceModel& m);

/// nu_i + nu_s in Hz.
double frequency_sum(const SourceModel& m);

void to_json(nlohmann::json& j, const SpectralMode& m);
void from_json(const nlohmann::json& j, SpectralMode& m);
void to_json(nlohmann::json& j, const SourceModel& m);
void from_json(const nlohmann::json& j, SourceModel& m);

}  // namespace umzi
