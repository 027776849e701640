#include "umzi/coincidence.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace umzi {

namespace {

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

std::int64_t ticks_of(double t, double resolution, const char* what) {
    const double q = t / resolution;
    const auto n = std::llround(q);
    if (n <= 0 || std::abs(q - static_cast<double>(n)) > 1e-6 * std::max(1.0, q))
        throw std::invalid_argument(std::string(what) + " must be a positive integer multiple of the resolution");
    return n;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

struct DetectionEntry {
    Slot slot;
    bool signal_seen;
    bool idler_seen;
};

void check_sorted(const TimestampStream& s, const char* which) {
    if (!std::is_sorted(s.ticks.begin(), s.ticks.end()))
        throw std::invalid_argument(std::string(which) + " stream is not sorted");
}

// G(x) = x Phi(x) + phi(x) is the second antiderivative of the normal pdf.
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi); }
double ramp_integral(double x) { return x * normal_cdf(x) + normal_pdf(x); }

// P(floor(x_s) - floor(x_i) = k) for x_s - x_i ~ N(mean, sd^2), in ticks.
double tick_probability(std::int64_t k, double mean, double sd) {
    const double kd = static_cast<double>(k);
    if (sd <= 0.0)
        return std::max(0.0, 1.0 - std::abs(mean - kd));
    const double p = sd * (ramp_integral((kd + 1.0 - mean) / sd) - 2.0 * ramp_integral((kd - mean) / sd) +
                           ramp_integral((kd - 1.0 - mean) / sd));
    return std::max(0.0, p);
}

// Half-open selection of histogram bins by center, with a small tolerance so
// that centers sitting exactly on an edge are classified consistently.
std::pair<std::int64_t, std::int64_t> filter_bin_range(double bin_width, const TimeFilter& f) {
    const double eps = 1e-6;
    const double lo = (f.center - 0.5 * f.width) / bin_width;
    const double hi = (f.center + 0.5 * f.width) / bin_width;
    const auto first = static_cast<std::int64_t>(std::ceil(lo - eps));
    const auto last = static_cast<std::int64_t>(std::ceil(hi - eps)) - 1;
    return {first, last};
}

}  // namespace

double DetectorModel::jitter_sigma() const { return jitter_fwhm / kFwhmPerSigma; }

void DetectorModel::validate() const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
        throw std::domain_error("detector " + id + ": efficiency must lie in [0, 1]");
    if (!(dark_count_rate >= 0.0) || !std::isfinite(dark_count_rate))
        throw std::domain_error("detector " + id + ": dark_count_rate must be non-negative");
    if (!(jitter_fwhm >= 0.0) || !std::isfinite(jitter_fwhm))
        throw std::domain_error("detector " + id + ": jitter_fwhm must be non-negative");
}

void Acquisition::validate() const {
    if (!(resolution > 0.0))
        throw std::domain_error("acquisition.resolution_s must be positive");
    ticks_of(bin_width, resolution, "acquisition.bin_width_s");
    ticks_of(block_duration, resolution, "acquisition.block_duration_s");
    if (!(window >= 2.0 * bin_width))
        throw std::domain_error("acquisition.window_s must span at least two bins");
    if (!(filter_width > 0.0))
        throw std::domain_error("acquisition.filter_width_s must be positive");
    if (chunks < 1)
        throw std::domain_error("acquisition.chunks must be >= 1");
}

DetectorPorts ports_for(PortPair pair) {
    switch (pair) {
    case PortPair::DE: return {Port::c, Port::c};
    case PortPair::FG: return {Port::d, Port::d};
    case PortPair::EF: return {Port::d, Port::c};
    case PortPair::DG: return {Port::c, Port::d};
    }
    throw std::invalid_argument("bad port pair");
}

VirtualPort virtual_port_of(PortPair pair) {
    const auto p = ports_for(pair);
    return p.signal == p.idler ? VirtualPort::bunched : VirtualPort::antibunched;
}

std::string_view to_string(PortPair pair) {
    switch (pair) {
    case PortPair::DE: return "DE";
    case PortPair::FG: return "FG";
    case PortPair::EF: return "EF";
    case PortPair::DG: return "DG";
    }
    return "?";
}

PortPair parse_port_pair(std::string_view text) {
    std::string letters;
    for (char ch : text)
        if (std::isalpha(static_cast<unsigned char>(ch)))
            letters.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (letters.size() == 2)
        std::sort(letters.begin(), letters.end());
    if (letters == "DE")
        return PortPair::DE;
    if (letters == "FG")
        return PortPair::FG;
    if (letters == "EF")
        return PortPair::EF;
    if (letters == "DG")
        return PortPair::DG;
    throw std::invalid_argument("unknown port pair '" + std::string(text) + "' (expected DE, FG, EF or DG)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over a mixed key
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RunResult simulate_run(const TwoPhotonState& state, const SourceModel& source, const DetectorModel& det_signal,
                       const DetectorModel& det_idler, const RunOptions& opts) {
    if (state.empty())
        throw std::domain_error("simulate_run: state has no amplitude");
    if (!(opts.duration > 0.0))
        throw std::domain_error("simulate_run: duration must be positive");
    if (!(opts.transmission >= 0.0 && opts.transmission <= 1.0))
        throw std::domain_error("simulate_run: transmission must lie in [0, 1]");
    det_signal.validate();
    det_idler.validate();

    const double res = opts.resolution;
    const std::int64_t block_ticks = ticks_of(opts.block_duration, res, "block_duration");
    const std::int64_t total_ticks = std::max<std::int64_t>(1, std::llround(opts.duration / res));
    const std::int64_t n_blocks = (total_ticks + block_ticks - 1) / block_ticks;

    // Thinned table of pair outcomes that leave at least one click.
    const DetectorPorts ports = ports_for(opts.ports);
    const double ds = det_signal.efficiency * opts.transmission;
    const double di = det_idler.efficiency * opts.transmission;
    std::vector<DetectionEntry> entries;
    std::vector<double> cumulative;
    double p_detect = 0.0;
    for (std::size_t i = 0; i < kBasisSize; ++i) {
        const BasisLabel b = BasisLabel::from_index(i);
        const double p = state.probability(b);
        if (p <= 0.0)
            continue;
        const double ps = b.signal == ports.signal ? ds : 0.0;
        const double pi = b.idler == ports.idler ? di : 0.0;
        const std::array<std::pair<double, DetectionEntry>, 3> outcomes{{
            {p * ps * pi, {b.slot, true, true}},
            {p * ps * (1.0 - pi), {b.slot, true, false}},
            {p * (1.0 - ps) * pi, {b.slot, false, true}},
        }};
        for (const auto& [w, e] : outcomes) {
            if (w <= 0.0)
                continue;
            p_detect += w;
            entries.push_back(e);
            cumulative.push_back(p_detect);
        }
    }

    const double detected_pair_rate = source.pair_rate * p_detect;
    const double background_s = det_signal.dark_count_rate + source.accidental_singles_rate.signal;
    const double background_i = det_idler.dark_count_rate + source.accidental_singles_rate.idler;
    const double sigma_s = det_signal.jitter_sigma();
    const double sigma_i = det_idler.jitter_sigma();
    const double tau = opts.tau;

    struct Partial {
        std::vector<std::int64_t> signal;
        std::vector<std::int64_t> idler;
    };

    auto run_block = [&](std::int64_t block, Partial& out) {
        std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(block)));
        const std::int64_t start = block * block_ticks;
        const std::int64_t len_ticks = std::min(block_ticks, total_ticks - start);
        const double len = static_cast<double>(len_ticks) * res;
        std::uniform_real_distribution<double> when(0.0, len);
        std::uniform_real_distribution<double> pick(0.0, p_detect);
        std::normal_distribution<double> gauss(0.0, 1.0);

        auto stamp = [&](double t, double sigma) {
            if (sigma > 0.0)
                t += sigma * gauss(rng);
            return start + static_cast<std::int64_t>(std::floor(t / res));
        };

        if (detected_pair_rate > 0.0) {
            std::poisson_distribution<std::int64_t> npairs(detected_pair_rate * len);
            const std::int64_t n = npairs(rng);
            for (std::int64_t k = 0; k < n; ++k) {
                const double t0 = when(rng);
                const double u = pick(rng);
                auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
                if (it == cumulative.end())
                    --it;
                const DetectionEntry& e = entries[static_cast<std::size_t>(it - cumulative.begin())];
                const double ts = t0 + (e.slot == Slot::plus_tau ? tau : 0.0);
                const double ti = t0 + (e.slot == Slot::minus_tau ? tau : 0.0);
                if (e.signal_seen)
                    out.signal.push_back(stamp(ts, sigma_s));
                if (e.idler_seen)
                    out.idler.push_back(stamp(ti, sigma_i));
            }
        }
        for (int channel = 0; channel < 2; ++channel) {
            const double rate = channel == 0 ? background_s : background_i;
            if (rate <= 0.0)
                continue;
            std::poisson_distribution<std::int64_t> ndark(rate * len);
            const std::int64_t n = ndark(rng);
            auto& dst = channel == 0 ? out.signal : out.idler;
            for (std::int64_t k = 0; k < n; ++k)
                dst.push_back(start + static_cast<std::int64_t>(std::floor(when(rng) / res)));
        }
    };

    const unsigned chunks = std::max(1u, std::min<unsigned>(opts.chunks, static_cast<unsigned>(n_blocks)));
    std::vector<Partial> partials(chunks);
    auto run_chunk = [&](unsigned c) {
        const std::int64_t b0 = n_blocks * c / chunks;
        const std::int64_t b1 = n_blocks * (c + 1) / chunks;
        for (std::int64_t b = b0; b < b1; ++b)
            run_block(b, partials[c]);
    };
    if (chunks == 1) {
        run_chunk(0);
    } else {
        std::vector<std::thread> workers;
        workers.reserve(chunks);
        for (unsigned c = 0; c < chunks; ++c)
            workers.emplace_back(run_chunk, c);
        for (auto& w : workers)
            w.join();
    }

    RunResult result;
    result.duration = static_cast<double>(total_ticks) * res;
    result.signal.resolution = res;
    result.idler.resolution = res;
    for (auto& p : partials) {
        result.signal.ticks.insert(result.signal.ticks.end(), p.signal.begin(), p.signal.end());
        result.idler.ticks.insert(result.idler.ticks.end(), p.idler.begin(), p.idler.end());
    }
    std::sort(result.signal.ticks.begin(), result.signal.ticks.end());
    std::sort(result.idler.ticks.begin(), result.idler.ticks.end());
    return result;
}

std::uint64_t CoincidenceHistogram::total() const {
    std::uint64_t s = 0;
    for (auto c : counts)
        s += c;
    return s;
}

CoincidenceHistogram correlate(const TimestampStream& signal, const TimestampStream& idler, double bin_width,
                               double window) {
    if (signal.resolution != idler.resolution)
        throw std::invalid_argument("correlate: streams have different resolutions");
    check_sorted(signal, "signal");
    check_sorted(idler, "idler");
    if (!(window > 0.0))
        throw std::invalid_argument("correlate: window must be positive");
    const std::int64_t m = ticks_of(bin_width, signal.resolution, "bin_width");
    const auto half = static_cast<std::int64_t>(std::floor(0.5 * window / bin_width + 1e-9));

    CoincidenceHistogram h;
    h.bin_width = bin_width;
    h.origin = -static_cast<double>(half) * bin_width;
    h.counts.assign(static_cast<std::size_t>(2 * half + 1), 0);
    h.singles_signal = signal.ticks.size();
    h.singles_idler = idler.ticks.size();

    const std::int64_t reach = (half + 1) * m;
    const auto& is = idler.ticks;
    std::size_t lo = 0;
    for (std::int64_t ts : signal.ticks) {
        while (lo < is.size() && is[lo] < ts - reach)
            ++lo;
        for (std::size_t j = lo; j < is.size() && is[j] <= ts + reach; ++j) {
            const std::int64_t delta = ts - is[j];
            const std::int64_t bin = floor_div(2 * delta + m, 2 * m);
            if (bin < -half || bin > half)
                continue;
            ++h.counts[static_cast<std::size_t>(bin + half)];
        }
    }
    return h;
}

CoincidenceHistogram correlate(const RunResult& run, double bin_width, double window) {
    CoincidenceHistogram h = correlate(run.signal, run.idler, bin_width, window);
    h.acquisition_time = run.duration;
    return h;
}

std::vector<CoincidenceEvent> coincidence_events(const TimestampStream& signal, const TimestampStream& idler,
                                                 double window) {
    check_sorted(signal, "signal");
    check_sorted(idler, "idler");
    const double res = signal.resolution;
    const auto reach = static_cast<std::int64_t>(std::floor(0.5 * window / res + 1e-9));
    std::vector<CoincidenceEvent> events;
    std::size_t lo = 0;
    const auto& is = idler.ticks;
    for (std::int64_t ts : signal.ticks) {
        while (lo < is.size() && is[lo] < ts - reach)
            ++lo;
        for (std::size_t j = lo; j < is.size() && is[j] <= ts + reach; ++j) {
            const double a = static_cast<double>(ts) * res;
            const double b = static_cast<double>(is[j]) * idler.resolution;
            events.push_back({a, b, static_cast<double>(ts - is[j]) * res});
        }
    }
    return events;
}

std::uint64_t filtered_counts(const CoincidenceHistogram& h, const TimeFilter& f) {
    if (!(f.width > 0.0))
        throw std::invalid_argument("time filter width must be positive");
    const double tol = 1e-6 * h.bin_width;
    if (f.center - 0.5 * f.width < h.lower_edge() - tol || f.center + 0.5 * f.width > h.upper_edge() + tol)
        throw std::out_of_range("time filter lies outside the histogram range");
    const auto [first, last] = filter_bin_range(h.bin_width, f);
    const std::int64_t offset = std::llround(-h.origin / h.bin_width);
    std::uint64_t sum = 0;
    for (std::int64_t k = first; k <= last; ++k) {
        const std::int64_t idx = k + offset;
        if (idx >= 0 && idx < static_cast<std::int64_t>(h.counts.size()))
            sum += h.counts[static_cast<std::size_t>(idx)];
    }
    return sum;
}

CarEstimate estimate_car(const CoincidenceHistogram& h, const TimeFilter& signal_filter,
                         std::span<const double> background_offsets, double tau) {
    if (background_offsets.empty())
        throw std::invalid_argument("estimate_car: no background offsets");
    for (double o : background_offsets) {
        for (double peak : {-tau, 0.0, tau}) {
            if (std::abs(o - peak) < signal_filter.width)
                throw std::invalid_argument(fmt::format(
                    "estimate_car: background window at {:+.1f} ps overlaps the peak at {:+.1f} ps", o * 1e12,
                    peak * 1e12));
        }
    }
    CarEstimate est;
    est.signal_counts = filtered_counts(h, signal_filter);
    std::uint64_t background_total = 0;
    for (double o : background_offsets)
        background_total += filtered_counts(h, {signal_filter.center + o, signal_filter.width});
    est.mean_background = static_cast<double>(background_total) / static_cast<double>(background_offsets.size());
    if (background_total == 0) {
        est.infinite = true;
        est.value = std::numeric_limits<double>::infinity();
        est.error = std::numeric_limits<double>::infinity();
        return est;
    }
    const auto s = static_cast<double>(est.signal_counts);
    est.value = s / est.mean_background;
    if (est.signal_counts > 0)
        est.error = est.value * std::sqrt(1.0 / s + 1.0 / static_cast<double>(background_total));
    else
        est.error = 1.0 / est.mean_background;
    return est;
}

ExpectedRates expected_rates(const TwoPhotonState& state, const SourceModel& source, const DetectorModel& det_signal,
                             const DetectorModel& det_idler, PortPair pair, double transmission) {
    const DetectorPorts ports = ports_for(pair);
    const double es = det_signal.efficiency * transmission;
    const double ei = det_idler.efficiency * transmission;
    ExpectedRates r;
    r.singles_signal = source.pair_rate * es * state.signal_marginal(ports.signal) + det_signal.dark_count_rate +
                       source.accidental_singles_rate.signal;
    r.singles_idler = source.pair_rate * ei * state.idler_marginal(ports.idler) + det_idler.dark_count_rate +
                      source.accidental_singles_rate.idler;
    for (Slot s : {Slot::minus_tau, Slot::zero, Slot::plus_tau})
        r.coincidence[static_cast<std::size_t>(s)] =
            source.pair_rate * es * ei * state.probability({ports.signal, ports.idler, s});
    return r;
}

double peak_window_fraction(double mu, double sigma, double resolution, double bin_width, const TimeFilter& f) {
    const std::int64_t m = ticks_of(bin_width, resolution, "bin_width");
    const auto [first, last] = filter_bin_range(bin_width, f);
    const double mean = mu / resolution;
    const double sd = sigma / resolution;
    double total = 0.0;
    for (std::int64_t bin = first; bin <= last; ++bin) {
        // ticks d with floor_div(2d + m, 2m) == bin
        const std::int64_t d_lo = bin * m - m / 2;
        const std::int64_t d_hi = d_lo + m - 1;
        for (std::int64_t d = d_lo; d <= d_hi; ++d)
            total += tick_probability(d, mean, sd);
    }
    return total;
}

double ExpectedWindowCounts::car() const {
    if (accidental_counts <= 0.0)
        return std::numeric_limits<double>::infinity();
    return total() / accidental_counts;
}

ExpectedWindowCounts expected_filtered_counts(const ExpectedRates& rates, const DetectorModel& det_signal,
                                              const DetectorModel& det_idler, double tau, const Acquisition& acq,
                                              const TimeFilter& f, double duration) {
    const double sigma = std::hypot(det_signal.jitter_sigma(), det_idler.jitter_sigma());
    ExpectedWindowCounts out;
    const std::array<double, 3> centers{-tau, 0.0, tau};
    for (std::size_t s = 0; s < 3; ++s)
        out.true_counts += rates.coincidence[s] * duration *
                           peak_window_fraction(centers[s], sigma, acq.resolution, acq.bin_width, f);
    const auto [first, last] = filter_bin_range(acq.bin_width, f);
    const double window = static_cast<double>(last - first + 1) * acq.bin_width;
    out.accidental_counts = rates.singles_signal * rates.singles_idler * window * duration;
    return out;
}

RunOptions Apparatus::run_options(PortPair ports, double duration, std::uint64_t seed) const {
    RunOptions o;
    o.ports = ports;
    o.transmission = umzi.transmission();
    o.tau = umzi.tau;
    o.duration = duration;
    o.seed = seed;
    o.resolution = acq.resolution;
    o.block_duration = acq.block_duration;
    o.chunks = acq.chunks;
    return o;
}

FringeScan phase_sweep(const Apparatus& app, PortPair ports, std::span<const double> phases,
                       double duration_per_point, std::uint64_t seed) {
    if (phases.empty())
        throw std::invalid_argument("phase_sweep: empty phase list");
    FringeScan scan;
    scan.ports = ports;
    scan.duration_per_point = duration_per_point;
    scan.points.reserve(phases.size());
    for (std::size_t i = 0; i < phases.size(); ++i) {
        UmziConfig cfg = app.umzi;
        cfg.phi = phases[i];
        const TwoPhotonState state = evolve_umzi(cfg, app.source);
        const RunResult run = simulate_run(state, app.source, app.det_signal, app.det_idler,
                                           app.run_options(ports, duration_per_point, derive_seed(seed, i)));
        const CoincidenceHistogram h = correlate(run, app.acq.bin_width, app.acq.window);
        FringePoint pt;
        pt.phi = phases[i];
        pt.coincidences = filtered_counts(h, {0.0, app.acq.filter_width});
        pt.side_minus = filtered_counts(h, {-cfg.tau, app.acq.filter_width});
        pt.side_plus = filtered_counts(h, {cfg.tau, app.acq.filter_width});
        pt.singles_signal = h.singles_signal;
        pt.singles_idler = h.singles_idler;
        scan.points.push_back(pt);
    }
    return scan;
}

void write_histogram_csv(std::ostream& out, const CoincidenceHistogram& h) {
    out << "delta_t_ps,counts\n";
    for (std::size_t i = 0; i < h.size(); ++i)
        out << fmt::format("{:.3f},{}\n", h.center(i) * 1e12, h.counts[i]);
}

void write_fringe_csv(std::ostream& out, const FringeScan& scan) {
    out << "phi_rad,coincidences,singles_s,singles_i\n";
    for (const auto& p : scan.points)
        out << fmt::format("{:.9f},{},{},{}\n", p.phi, p.coincidences, p.singles_signal, p.singles_idler);
}

void to_json(nlohmann::json& j, const DetectorModel& d) {
    j = nlohmann::json{{"id", d.id},
                       {"efficiency", d.efficiency},
                       {"dark_count_rate_hz", d.dark_count_rate},
                       {"jitter_fwhm_s", d.jitter_fwhm}};
}

void from_json(const nlohmann::json& j, DetectorModel& d) {
    d.id = j.at("id").get<std::string>();
    d.efficiency = j.at("efficiency").get<double>();
    d.dark_count_rate = j.at("dark_count_rate_hz").get<double>();
    d.jitter_fwhm = j.at("jitter_fwhm_s").get<double>();
}

void to_json(nlohmann::json& j, const Acquisition& a) {
    j = nlohmann::json{{"resolution_s", a.resolution},
                       {"bin_width_s", a.bin_width},
                       {"window_s", a.window},
                       {"filter_width_s", a.filter_width},
                       {"block_duration_s", a.block_duration},
                       {"chunks", a.chunks},
                       {"background_offsets_s", a.background_offsets}};
}

void from_json(const nlohmann::json& j, Acquisition& a) {
    a.resolution = j.at("resolution_s").get<double>();
    a.bin_width = j.at("bin_width_s").get<double>();
    a.window = j.at("window_s").get<double>();
    a.filter_width = j.at("filter_width_s").get<double>();
    a.block_duration = j.at("block_duration_s").get<double>();
    a.chunks = j.at("chunks").get<unsigned>();
    a.background_offsets = j.at("background_offsets_s").get<std::vector<double>>();
}

}  // namespace umzi
