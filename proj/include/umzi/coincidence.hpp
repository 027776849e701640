#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "umzi/interferometer.hpp"
#include "umzi/source_model.hpp"

namespace umzi {

struct DetectorModel {
    std::string id;
    double efficiency = 1.0;
    double dark_count_rate = 0.0;  // counts/s
    double jitter_fwhm = 0.0;      // s

    /// Gaussian standard deviation for the configured FWHM.
    double jitter_sigma() const;
    void validate() const;

    bool operator==(const DetectorModel&) const = default;
};

/// Detector hookups. D and F are the signal photon at ports c and d, E and G
/// the idler photon at c and d. DE and FG sample the bunched virtual port,
/// EF and DG the antibunched one.
enum class PortPair { DE, FG, EF, DG };

struct DetectorPorts {
    Port signal;
    Port idler;
};

DetectorPorts ports_for(PortPair pair);
VirtualPort virtual_port_of(PortPair pair);
std::string_view to_string(PortPair pair);
/// Accepts "DE", "FG", "EF", "DG" (case-insensitive, optional comma).
PortPair parse_port_pair(std::string_view text);

/// Timestamps in integer units of the TCSPC resolution, sorted ascending.
struct TimestampStream {
    double resolution = 4e-12;
    std::vector<std::int64_t> ticks;

    bool operator==(const TimestampStream&) const = default;
};

struct CoincidenceEvent {
    double t_signal;
    double t_idler;
    double delta_t;  // t_signal - t_idler
};

/// Acquisition and analysis settings shared by all measurements.
struct Acquisition {
    double resolution = 4e-12;       // TCSPC timestamp quantum, s
    double bin_width = 4e-12;        // histogram bin, integer multiple of resolution
    double window = 800e-12;         // full coincidence window of correlate()
    double filter_width = 88e-12;    // time-domain filter
    double block_duration = 10e-3;   // fixed Monte Carlo block, s
    unsigned chunks = 1;             // worker threads
    std::vector<double> background_offsets{-350e-12, -250e-12, 250e-12, 350e-12};

    void validate() const;
    bool operator==(const Acquisition&) const = default;
};

struct RunOptions {
    PortPair ports = PortPair::EF;
    double transmission = 1.0;  // per photon, from the UMZI insertion loss
    double tau = 100e-12;       // arm delay
    double duration = 1.0;      // s
    std::uint64_t seed = 1;
    double resolution = 4e-12;
    double block_duration = 10e-3;
    unsigned chunks = 1;
};

struct RunResult {
    TimestampStream signal;
    TimestampStream idler;
    double duration = 0.0;
};

/// Monte Carlo realization of one acquisition.
///
/// The duration is cut into fixed blocks of `block_duration`; every block draws
/// from its own generator seeded from (seed, block index), and `chunks` only
/// decides how blocks are spread over threads. Output is therefore independent
/// of the chunk count. Jitter is added before quantization to `resolution`.
RunResult simulate_run(const TwoPhotonState& state, const SourceModel& source, const DetectorModel& det_signal,
                       const DetectorModel& det_idler, const RunOptions& opts);

struct CoincidenceHistogram {
    double bin_width = 4e-12;
    double origin = 0.0;  // center of bin 0
    std::vector<std::uint64_t> counts;
    double acquisition_time = 0.0;
    std::uint64_t singles_signal = 0;
    std::uint64_t singles_idler = 0;

    std::size_t size() const { return counts.size(); }
    double center(std::size_t i) const { return origin + static_cast<double>(i) * bin_width; }
    double lower_edge() const { return origin - 0.5 * bin_width; }
    double upper_edge() const { return origin + (static_cast<double>(counts.size()) - 0.5) * bin_width; }
    std::uint64_t total() const;
};

/// Histogram of t_s - t_i over +-window/2 with bins centered on multiples of
/// bin_width. Two-pointer sweep, O(n + m + pairs). Throws std::invalid_argument
/// for unsorted streams or mismatched resolutions.
CoincidenceHistogram correlate(const TimestampStream& signal, const TimestampStream& idler, double bin_width,
                               double window);
CoincidenceHistogram correlate(const RunResult& run, double bin_width, double window);

/// All signal/idler pairs with |t_s - t_i| <= window/2, in signal order.
std::vector<CoincidenceEvent> coincidence_events(const TimestampStream& signal, const TimestampStream& idler,
                                                 double window);

struct TimeFilter {
    double center = 0.0;
    double width = 88e-12;
};

/// Counts in bins whose centers fall in [center - width/2, center + width/2).
std::uint64_t filtered_counts(const CoincidenceHistogram& h, const TimeFilter& f);

struct CarEstimate {
    double value = 0.0;
    double error = 0.0;
    bool infinite = false;
    std::uint64_t signal_counts = 0;
    double mean_background = 0.0;
};

/// Coincidence-to-accidental ratio: counts in `signal_filter` over the mean
/// of the same filter shifted by each of `background_offsets`. Shifted windows
/// must stay clear of the peaks at 0 and +-tau (relative to the filter center).
CarEstimate estimate_car(const CoincidenceHistogram& h, const TimeFilter& signal_filter,
                         std::span<const double> background_offsets, double tau);

/// Expected detection rates for one detector hookup.
struct ExpectedRates {
    double singles_signal = 0.0;
    double singles_idler = 0.0;
    std::array<double, 3> coincidence{};  // true pairs per second, indexed by Slot
};

ExpectedRates expected_rates(const TwoPhotonState& state, const SourceModel& source, const DetectorModel& det_signal,
                             const DetectorModel& det_idler, PortPair ports, double transmission);

/// Fraction of a Gaussian coincidence peak (mean `mu`, combined jitter
/// `sigma`) that lands in the filter after quantization to `resolution`.
/// Differences of quantized timestamps smear the peak with a unit triangle.
double peak_window_fraction(double mu, double sigma, double resolution, double bin_width, const TimeFilter& f);

struct ExpectedWindowCounts {
    double true_counts = 0.0;
    double accidental_counts = 0.0;
    double total() const { return true_counts + accidental_counts; }
    /// Expectation of the estimate_car() ratio, (true + accidental) / accidental.
    double car() const;
};

ExpectedWindowCounts expected_filtered_counts(const ExpectedRates& rates, const DetectorModel& det_signal,
                                              const DetectorModel& det_idler, double tau, const Acquisition& acq,
                                              const TimeFilter& f, double duration);

/// Everything needed to run one measurement.
struct Apparatus {
    SourceModel source;
    UmziConfig umzi;
    DetectorModel det_signal;
    DetectorModel det_idler;
    Acquisition acq;

    RunOptions run_options(PortPair ports, double duration, std::uint64_t seed) const;
};

struct FringePoint {
    double phi = 0.0;
    std::uint64_t coincidences = 0;
    std::uint64_t singles_signal = 0;
    std::uint64_t singles_idler = 0;
    std::uint64_t side_minus = 0;  // counts in the -tau peak window
    std::uint64_t side_plus = 0;
};

struct FringeScan {
    PortPair ports = PortPair::EF;
    double duration_per_point = 0.0;
    std::vector<FringePoint> points;
};

/// Phase sweep with the central filter. Point i uses seed derive_seed(seed, i).
FringeScan phase_sweep(const Apparatus& app, PortPair ports, std::span<const double> phases,
                       double duration_per_point, std::uint64_t seed);

/// Independent stream seed for item `index` of a seeded family.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

void write_histogram_csv(std::ostream& out, const CoincidenceHistogram& h);
void write_fringe_csv(std::ostream& out, const FringeScan& scan);

void to_json(nlohmann::json& j, const DetectorModel& d);
void from_json(const nlohmann::json& j, DetectorModel& d);
void to_json(nlohmann::json& j, const Acquisition& a);
void from_json(const nlohmann::json& j, Acquisition& a);

}  // namespace umzi
