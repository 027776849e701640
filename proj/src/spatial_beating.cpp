#include "umzi/spatial_beating.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace umzi {

double BeatingConfig::beat_frequency() const {
    return mode == BeatingMode::antibunched ? std::abs(nu_i - nu_s) : nu_i + nu_s;
}

void BeatingConfig::validate() const {
    if (!(nu_i > 0.0) || !(nu_s > 0.0))
        throw std::domain_error("beating: frequencies must be positive");
    if (!(sigma > 0.0))
        throw std::domain_error("beating: sigma must be positive");
    if (!(v0 >= 0.0 && v0 <= 1.0))
        throw std::domain_error("beating: v0 must lie in [0, 1]");
}

BeatingConfig beating_config_for(const SourceModel& source, BeatingMode mode, double v0) {
    BeatingConfig cfg;
    cfg.mode = mode;
    cfg.nu_i = source.idler.center_frequency();
    cfg.nu_s = source.signal.center_frequency();
    cfg.sigma = kTwoPi * std::min(source.signal.bandwidth_3db(), source.idler.bandwidth_3db());
    cfg.v0 = v0;
    return cfg;
}

double sinc(double x) {
    if (std::abs(x) < 1e-4)
        return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

double beating_probability(const BeatingConfig& cfg, double delta_tau) {
    return 1.0 - cfg.v0 * sinc(cfg.sigma * delta_tau) * std::cos(kTwoPi * cfg.beat_frequency() * delta_tau);
}

BeatingPeriod beating_period(const BeatingConfig& cfg) {
    const double f = cfg.beat_frequency();
    if (f == 0.0)
        return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), true};
    return {1.0 / f, kSpeedOfLight / f, false};
}

double envelope_first_zero(double sigma) {
    if (!(sigma > 0.0))
        throw std::domain_error("sigma must be positive");
    return kPi / sigma;
}

double fidelity_from_visibility(double v0) {
    if (!(v0 >= 0.0 && v0 <= 1.0))
        throw std::domain_error("visibility must lie in [0, 1]");
    return 0.5 * (1.0 + v0);
}

BeatingRates beating_rates(const Apparatus& app) {
    const double t = app.umzi.transmission();
    const double es = app.det_signal.efficiency * t;
    const double ei = app.det_idler.efficiency * t;
    const double sigma = std::hypot(app.det_signal.jitter_sigma(), app.det_idler.jitter_sigma());
    const TimeFilter f{0.0, app.acq.filter_width};

    BeatingRates r;
    r.base_rate = app.source.pair_rate * 0.5 * es * ei *
                  peak_window_fraction(0.0, sigma, app.acq.resolution, app.acq.bin_width, f);
    const double singles_s =
        app.source.pair_rate * es + app.det_signal.dark_count_rate + app.source.accidental_singles_rate.signal;
    const double singles_i =
        app.source.pair_rate * ei + app.det_idler.dark_count_rate + app.source.accidental_singles_rate.idler;
    // Filter width rounded to whole bins, as filtered_counts() selects them.
    const double window = std::round(app.acq.filter_width / app.acq.bin_width) * app.acq.bin_width;
    r.accidental_rate = singles_s * singles_i * window;
    return r;
}

std::vector<BeatingPoint> simulate_beating_scan(const BeatingConfig& cfg, const BeatingRates& rates,
                                                double duration_per_point, std::uint64_t seed) {
    cfg.validate();
    if (cfg.mode != BeatingMode::antibunched)
        throw std::invalid_argument("beating scan: only the antibunched mode is simulated");
    if (cfg.delay_grid.empty())
        throw std::invalid_argument("beating scan: empty delay grid");
    if (!(duration_per_point > 0.0))
        throw std::invalid_argument("beating scan: duration must be positive");

    std::vector<BeatingPoint> scan;
    scan.reserve(cfg.delay_grid.size());
    for (std::size_t i = 0; i < cfg.delay_grid.size(); ++i) {
        const double dtau = cfg.delay_grid[i];
        BeatingPoint pt;
        pt.delta_tau = dtau;
        pt.prediction = duration_per_point * (rates.base_rate * beating_probability(cfg, dtau) + rates.accidental_rate);
        if (pt.prediction > 0.0) {
            std::mt19937_64 rng(derive_seed(seed, i));
            std::poisson_distribution<std::uint64_t> draw(pt.prediction);
            pt.counts = draw(rng);
        }
        scan.push_back(pt);
    }
    return scan;
}

void write_beating_csv(std::ostream& out, const std::vector<BeatingPoint>& scan) {
    out << "delta_tau_ps,counts,prediction\n";
    for (const auto& p : scan)
        out << fmt::format("{:.6f},{},{:.6f}\n", p.delta_tau * 1e12, p.counts, p.prediction);
}

}  // namespace umzi
