#include "umzi/source_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace umzi {

SpectralMode::SpectralMode(double center_wavelength_nm, double bandwidth_3db_hz, int filter_order)
    : wavelength_nm_(center_wavelength_nm), bandwidth_hz_(bandwidth_3db_hz), filter_order_(filter_order) {
    if (!(center_wavelength_nm > 0.0) || !std::isfinite(center_wavelength_nm))
        throw std::domain_error("center_wavelength_nm must be positive");
    if (!(bandwidth_3db_hz > 0.0) || !std::isfinite(bandwidth_3db_hz))
        throw std::domain_error("bandwidth_3db_hz must be positive");
    if (filter_order < 1)
        throw std::domain_error("filter_order must be >= 1");
}

void SourceModel::validate() const {
    if (!(pump_wavelength_nm > 0.0))
        throw std::domain_error("pump_wavelength_nm must be positive");
    if (!(two_photon_coherence_time > 0.0))
        throw std::domain_error("two_photon_coherence_time_s must be positive");
    if (!(pair_rate >= 0.0))
        throw std::domain_error("pair_rate_hz must be non-negative");
    if (!(accidental_singles_rate.signal >= 0.0) || !(accidental_singles_rate.idler >= 0.0))
        throw std::domain_error("accidental_singles_rate_hz must be non-negative");

    const double mismatch =
        std::abs(2.0 * pump_angular_frequency() - signal.angular_frequency() - idler.angular_frequency());
    if (!(mismatch < kEnergyConservationTolerance))
        throw std::domain_error("energy conservation violated: |2w_p - w_s - w_i| = 2pi x " +
                                std::to_string(mismatch / kTwoPi / 1e9) + " GHz");

    const double tau_coh = std::max(signal.single_photon_coherence_time(), idler.single_photon_coherence_time());
    if (!(two_photon_coherence_time > 100.0 * tau_coh))
        throw std::domain_error("two_photon_coherence_time_s must greatly exceed the single-photon coherence time");
}

double energy_conserving_pump_nm(const SpectralMode& signal, const SpectralMode& idler) {
    const double nu_p = 0.5 * (signal.center_frequency() + idler.center_frequency());
    return kSpeedOfLight / nu_p * 1e9;
}

SourceModel default_source() {
    SourceModel m;
    m.signal = SpectralMode(1555.75, 32e9, 3);
    m.idler = SpectralMode(1549.32, 32e9, 3);
    m.pump_wavelength_nm = energy_conserving_pump_nm(m.signal, m.idler);
    m.two_photon_coherence_time = 10e-6;
    m.pair_rate = 2e6;
    m.accidental_singles_rate = {};
    return m;
}

double frequency_spacing(const SourceModel& m) {
    return std::abs(m.idler.center_frequency() - m.signal.center_frequency());
}

double frequency_sum(const SourceModel& m) { return m.idler.center_frequency() + m.signal.center_frequency(); }

void to_json(nlohmann::json& j, const SpectralMode& m) {
    j = nlohmann::json{{"center_wavelength_nm", m.center_wavelength_nm()},
                       {"bandwidth_3db_hz", m.bandwidth_3db()},
                       {"filter_order", m.filter_order()}};
}

void from_json(const nlohmann::json& j, SpectralMode& m) {
    m = SpectralMode(j.at("center_wavelength_nm").get<double>(), j.at("bandwidth_3db_hz").get<double>(),
                     j.at("filter_order").get<int>());
}

void to_json(nlohmann::json& j, const SourceModel& m) {
    j = nlohmann::json{{"pump_wavelength_nm", m.pump_wavelength_nm},
                       {"signal", m.signal},
                       {"idler", m.idler},
                       {"two_photon_coherence_time_s", m.two_photon_coherence_time},
                       {"pair_rate_hz", m.pair_rate},
                       {"accidental_singles_rate_hz",
                        {{"signal", m.accidental_singles_rate.signal}, {"idler", m.accidental_singles_rate.idler}}}};
}

void from_json(const nlohmann::json& j, SourceModel& m) {
    m.pump_wavelength_nm = j.at("pump_wavelength_nm").get<double>();
    m.signal = j.at("signal").get<SpectralMode>();
    m.idler = j.at("idler").get<SpectralMode>();
    m.two_photon_coherence_time = j.at("two_photon_coherence_time_s").get<double>();
    m.pair_rate = j.at("pair_rate_hz").get<double>();
    const auto& noise = j.at("accidental_singles_rate_hz");
    m.accidental_singles_rate.signal = noise.at("signal").get<double>();
    m.accidental_singles_rate.idler = noise.at("idler").get<double>();
}

}  // namespace umzi
