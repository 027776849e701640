#include "umzi/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fmt/format.h>

#include "umzi/fit.hpp"
#include "umzi/spatial_beating.hpp"

namespace umzi {

namespace {

using nlohmann::json;

template <class Writer, class Data>
std::string render(Writer write, const Data& data) {
    std::ostringstream out;
    write(out, data);
    return out.str();
}

double wrap_pm_pi(double a) {
    a = std::remainder(a, kTwoPi);
    return a <= -kPi ? a + kTwoPi : a;
}

json car_json(const CarEstimate& c) {
    json j{{"signal_counts", c.signal_counts}, {"mean_background", c.mean_background}, {"infinite", c.infinite}};
    if (c.infinite) {
        j["value"] = nullptr;
        j["error"] = nullptr;
    } else {
        j["value"] = c.value;
        j["error"] = c.error;
    }
    return j;
}

std::vector<double> column(const FringeScan& scan, std::uint64_t FringePoint::*field) {
    std::vector<double> v;
    v.reserve(scan.points.size());
    for (const auto& p : scan.points)
        v.push_back(static_cast<double>(p.*field));
    return v;
}

std::vector<double> side_counts(const FringeScan& scan) {
    std::vector<double> v;
    for (const auto& p : scan.points)
        v.push_back(static_cast<double>(p.side_minus + p.side_plus));
    return v;
}

std::vector<double> uniform_grid(double lo, double hi, int n, bool include_end) {
    std::vector<double> g(static_cast<std::size_t>(n));
    const double step = (hi - lo) / (include_end && n > 1 ? n - 1 : n);
    for (int i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i)] = lo + step * i;
    return g;
}

json fringe_report(const FringeScan& scan) {
    const std::vector<double> phis = [&] {
        std::vector<double> v;
        for (const auto& p : scan.points)
            v.push_back(p.phi);
        return v;
    }();
    const std::vector<double> coinc = column(scan, &FringePoint::coincidences);
    json j;
    j["port_pair"] = std::string(to_string(scan.ports));
    j["virtual_port"] = virtual_port_of(scan.ports) == VirtualPort::bunched ? "bunched" : "antibunched";
    j["points"] = scan.points.size();
    j["duration_per_point_s"] = scan.duration_per_point;
    try {
        j["fit"] = fit_fringe(phis, coinc);
    } catch (const std::exception& e) {
        j["fit_error"] = e.what();
    }
    try {
        j["fit_free_period"] = fit_fringe_free_period(phis, coinc, kPi);
        j["fitted_period_rad"] = kTwoPi / j["fit_free_period"]["params"]["wavenumber"].get<double>();
    } catch (const std::exception& e) {
        j["fit_free_period_error"] = e.what();
    }
    const auto [lo, hi] = std::minmax_element(coinc.begin(), coinc.end());
    const OffRatio off = off_ratio_db(*hi, *lo);
    j["off_ratio_db"] = off.infinite ? json(nullptr) : json(off.db);
    j["off_ratio_error_db"] = off.infinite ? json(nullptr) : json(off.error_db);
    j["off_ratio_infinite"] = off.infinite;
    if (scan.points.size() >= 2) {
        j["singles_signal_flatness"] = chi_square_constant(column(scan, &FringePoint::singles_signal));
        j["singles_idler_flatness"] = chi_square_constant(column(scan, &FringePoint::singles_idler));
        j["side_peak_flatness"] = chi_square_constant(side_counts(scan));
    }
    return j;
}

}  // namespace

ScenarioResult run_fig3(const ExperimentConfig& cfg) {
    Apparatus app = cfg.apparatus();
    ScenarioResult out;
    out.scenario = Scenario::fig3;
    json& rep = out.report;
    rep["scenario"] = "fig3";
    rep["port_pair"] = std::string(to_string(cfg.fig3.ports));
    rep["duration_s"] = cfg.fig3.duration;

    const double sigma = std::hypot(app.det_signal.jitter_sigma(), app.det_idler.jitter_sigma());
    const double quant = app.acq.resolution / std::sqrt(6.0);
    const double expected_fwhm = kFwhmPerSigma * std::hypot(sigma, quant);
    rep["expected_fwhm_ps"] = expected_fwhm * 1e12;
    const TimeFilter central{0.0, app.acq.filter_width};

    json runs = json::array();
    for (std::size_t i = 0; i < cfg.fig3.phases.size(); ++i) {
        app.umzi.phi = cfg.fig3.phases[i];
        const TwoPhotonState state = evolve_umzi(app.umzi, app.source);
        const RunResult run = simulate_run(state, app.source, app.det_signal, app.det_idler,
                                           app.run_options(cfg.fig3.ports, cfg.fig3.duration, derive_seed(cfg.seed, i)));
        const CoincidenceHistogram h = correlate(run, app.acq.bin_width, app.acq.window);
        const std::string name = fmt::format("fig3_hist_{}.csv", i);
        out.files.emplace_back(name, render(write_histogram_csv, h));

        const ExpectedRates rates = expected_rates(state, app.source, app.det_signal, app.det_idler, cfg.fig3.ports,
                                                   app.umzi.transmission());
        const ExpectedWindowCounts expect =
            expected_filtered_counts(rates, app.det_signal, app.det_idler, app.umzi.tau, app.acq, central,
                                     cfg.fig3.duration);
        const std::uint64_t c0 = filtered_counts(h, central);
        const CarEstimate car = estimate_car(h, central, app.acq.background_offsets, app.umzi.tau);

        json r;
        r["phi_rad"] = app.umzi.phi;
        r["file"] = name;
        r["singles_signal"] = h.singles_signal;
        r["singles_idler"] = h.singles_idler;
        r["coincidences_total"] = h.total();
        r["central_counts"] = c0;
        r["side_minus_counts"] = filtered_counts(h, {-app.umzi.tau, app.acq.filter_width});
        r["side_plus_counts"] = filtered_counts(h, {app.umzi.tau, app.acq.filter_width});
        r["expected_central_true"] = expect.true_counts;
        r["expected_central_accidental"] = expect.accidental_counts;
        // Excess of the central window over the accidental floor, in Poisson sigmas.
        const double acc = expect.accidental_counts;
        r["central_excess_sigma"] = acc > 0.0 ? (static_cast<double>(c0) - acc) / std::sqrt(acc) : 0.0;
        r["car"] = car_json(car);
        r["car_analytic"] = std::isfinite(expect.car()) ? json(expect.car()) : json(nullptr);
        if (!car.infinite && std::isfinite(expect.car()) && car.error > 0.0)
            r["car_deviation_sigma"] = (car.value - expect.car()) / car.error;

        if (i == 0) {
            try {
                const FitResult fit = fit_gaussian_peaks(h, 3);
                json f = fit;
                json centers = json::array(), fwhms = json::array();
                for (int k = 0; k < 3; ++k) {
                    centers.push_back(fitted_center(fit, k) * 1e12);
                    fwhms.push_back(fitted_fwhm(fit, k) * 1e12);
                }
                f["centers_ps"] = centers;
                f["fwhm_ps"] = fwhms;
                f["spacing_ps"] = 0.5 * (centers[2].get<double>() - centers[0].get<double>());
                double mean_fwhm = 0.0;
                for (const auto& w : fwhms)
                    mean_fwhm += w.get<double>() / 3.0;
                f["mean_fwhm_ps"] = mean_fwhm;
                f["fwhm_relative_deviation"] = mean_fwhm / (expected_fwhm * 1e12) - 1.0;
                r["peak_fit"] = f;
            } catch (const std::exception& e) {
                r["peak_fit_error"] = e.what();
            }
        }
        runs.push_back(r);
    }
    rep["runs"] = runs;
    return out;
}

ScenarioResult run_fig4(const ExperimentConfig& cfg) {
    const Apparatus app = cfg.apparatus();
    ScenarioResult out;
    out.scenario = Scenario::fig4;
    const std::vector<double> phases = uniform_grid(0.0, kTwoPi, cfg.fig4.phase_points, false);
    const FringeScan anti = phase_sweep(app, cfg.fig4.antibunched, phases, cfg.fig4.duration_per_point,
                                        derive_seed(cfg.seed, 0));
    const FringeScan bunch = phase_sweep(app, cfg.fig4.bunched, phases, cfg.fig4.duration_per_point,
                                         derive_seed(cfg.seed, 1));
    out.files.emplace_back("fig4_antibunched.csv", render(write_fringe_csv, anti));
    out.files.emplace_back("fig4_bunched.csv", render(write_fringe_csv, bunch));

    json& rep = out.report;
    rep["scenario"] = "fig4";
    rep["phase_step_rad"] = kTwoPi / cfg.fig4.phase_points;
    rep["antibunched"] = fringe_report(anti);
    rep["bunched"] = fringe_report(bunch);
    const json& fa = rep["antibunched"];
    const json& fb = rep["bunched"];
    if (fa.contains("fit") && fb.contains("fit")) {
        const double da = fa["fit"]["params"]["phase"].get<double>();
        const double db = fb["fit"]["params"]["phase"].get<double>();
        const double diff = wrap_pm_pi(da - db);
        rep["phase_offset_rad"] = diff;
        rep["anti_phase_deviation_rad"] = kPi - std::abs(diff);
        const double va = fa["fit"]["visibility"].get<double>();
        const double vb = fb["fit"]["visibility"].get<double>();
        const double ea = fa["fit"]["visibility_error"].get<double>();
        const double eb = fb["fit"]["visibility_error"].get<double>();
        const double joint = std::hypot(ea, eb);
        rep["visibility_difference"] = va - vb;
        rep["visibility_difference_sigma"] = joint > 0.0 ? (va - vb) / joint : 0.0;
    }
    return out;
}

ScenarioResult run_fig5(const ExperimentConfig& cfg) {
    Apparatus app = cfg.apparatus();
    app.umzi.phi = pure_state_phase(VirtualPort::antibunched, cfg.fig5.k, app.umzi.theta0);
    ScenarioResult out;
    out.scenario = Scenario::fig5;

    BeatingConfig bc = beating_config_for(app.source, BeatingMode::antibunched, cfg.fig5.v0);
    bc.delay_grid = uniform_grid(cfg.fig5.delay_min, cfg.fig5.delay_max, cfg.fig5.delay_points, true);
    const BeatingRates rates = beating_rates(app);
    const std::vector<BeatingPoint> scan = simulate_beating_scan(bc, rates, cfg.fig5.duration_per_point, cfg.seed);
    out.files.emplace_back("fig5_beating.csv", render(write_beating_csv, scan));

    json& rep = out.report;
    rep["scenario"] = "fig5";
    rep["phi_rad"] = app.umzi.phi;
    rep["configured_v0"] = cfg.fig5.v0;
    rep["base_rate_hz"] = rates.base_rate;
    rep["accidental_rate_hz"] = rates.accidental_rate;
    const BeatingPeriod expected = beating_period(bc);
    rep["expected_period_ps"] = expected.time * 1e12;
    rep["expected_period_um"] = expected.length * 1e6;
    rep["envelope_first_zero_ps"] = envelope_first_zero(bc.sigma) * 1e12;

    BeatingConfig bunched = bc;
    bunched.mode = BeatingMode::bunched;
    const BeatingPeriod bp = beating_period(bunched);
    rep["bunched_period_fs"] = bp.time * 1e15;
    rep["bunched_period_nm"] = bp.length * 1e9;

    std::vector<double> taus, counts;
    for (const auto& p : scan) {
        taus.push_back(p.delta_tau);
        counts.push_back(static_cast<double>(p.counts));
    }
    try {
        const FitResult fit = fit_beating(taus, counts, bc);
        rep["fit"] = fit;
        const double v0 = fit.param("visibility");
        const double f = fit.param("frequency_thz") * 1e12;
        rep["v0"] = v0;
        rep["v0_error"] = fit.error("visibility");
        rep["fitted_period_ps"] = 1e12 / f;
        rep["fitted_period_um"] = kSpeedOfLight / f * 1e6;
        rep["fidelity"] = fidelity_from_visibility(std::clamp(v0, 0.0, 1.0));
        rep["fidelity_error"] = 0.5 * fit.error("visibility");
    } catch (const std::exception& e) {
        rep["fit_error"] = e.what();
    }
    return out;
}

ScenarioResult run_sweep(const ExperimentConfig& cfg) {
    const Apparatus app = cfg.apparatus();
    ScenarioResult out;
    out.scenario = Scenario::sweep;
    const std::vector<double> phases =
        uniform_grid(cfg.sweep.phase_min, cfg.sweep.phase_max, cfg.sweep.phase_points, false);
    const FringeScan scan = phase_sweep(app, cfg.sweep.ports, phases, cfg.sweep.duration_per_point, cfg.seed);
    out.files.emplace_back("sweep.csv", render(write_fringe_csv, scan));
    out.report = fringe_report(scan);
    out.report["scenario"] = "sweep";
    json analytic = json::array();
    for (double phi : phases) {
        UmziConfig u = app.umzi;
        u.phi = phi;
        const RoutingProbabilities p = routing_probabilities(u);
        analytic.push_back({{"phi_rad", phi}, {"p_bunched", p.bunched}, {"p_antibunched", p.antibunched}});
    }
    out.report["analytic_routing"] = analytic;
    return out;
}

ScenarioResult run_simulate(const ExperimentConfig& cfg) {
    const Apparatus app = cfg.apparatus();
    ScenarioResult out;
    out.scenario = Scenario::simulate;
    const TwoPhotonState state = evolve_umzi(app.umzi, app.source);
    const RunResult run = simulate_run(state, app.source, app.det_signal, app.det_idler,
                                       app.run_options(cfg.simulate.ports, cfg.simulate.duration, cfg.seed));
    const CoincidenceHistogram h = correlate(run, app.acq.bin_width, app.acq.window);
    out.files.emplace_back("histogram.csv", render(write_histogram_csv, h));

    const TimeFilter central{0.0, app.acq.filter_width};
    const ExpectedRates rates = expected_rates(state, app.source, app.det_signal, app.det_idler, cfg.simulate.ports,
                                               app.umzi.transmission());
    const ExpectedWindowCounts expect = expected_filtered_counts(rates, app.det_signal, app.det_idler, app.umzi.tau,
                                                                 app.acq, central, cfg.simulate.duration);
    const RoutingProbabilities p = routing_probabilities(app.umzi);
    json& rep = out.report;
    rep["scenario"] = "simulate";
    rep["port_pair"] = std::string(to_string(cfg.simulate.ports));
    rep["phi_rad"] = app.umzi.phi;
    rep["coherence_factor"] = app.umzi.coherence_factor;
    rep["p_bunched"] = p.bunched;
    rep["p_antibunched"] = p.antibunched;
    rep["singles_signal"] = h.singles_signal;
    rep["singles_idler"] = h.singles_idler;
    rep["central_counts"] = filtered_counts(h, central);
    rep["expected_central_counts"] = expect.total();
    rep["car"] = car_json(estimate_car(h, central, app.acq.background_offsets, app.umzi.tau));
    rep["car_analytic"] = std::isfinite(expect.car()) ? json(expect.car()) : json(nullptr);
    return out;
}

ScenarioResult run_scenario(const ExperimentConfig& cfg) {
    switch (cfg.scenario) {
    case Scenario::fig3: return run_fig3(cfg);
    case Scenario::fig4: return run_fig4(cfg);
    case Scenario::fig5: return run_fig5(cfg);
    case Scenario::sweep: return run_sweep(cfg);
    case Scenario::simulate: return run_simulate(cfg);
    }
    throw std::logic_error("unhandled scenario");
}

json build_versions() {
    return json{
        {"umzi", UMZI_VERSION},
        {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
        {"boost", fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100)},
        {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                      NLOHMANN_JSON_VERSION_PATCH)},
    };
}

std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result, const ExperimentConfig& cfg,
                                                 const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error(fmt::format("{}: cannot create output directory: {}", dir.string(), ec.message()));

    std::vector<std::filesystem::path> written;
    auto put = [&](const std::string& name, const std::string& body) {
        const std::filesystem::path p = dir / name;
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error(fmt::format("{}: cannot open for writing", p.string()));
        f << body;
        f.close();
        if (!f)
            throw std::runtime_error(fmt::format("{}: write failed", p.string()));
        written.push_back(p);
    };

    json outputs = json::array();
    for (const auto& [name, body] : result.files) {
        put(name, body);
        outputs.push_back(name);
    }
    put("report.json", result.report.dump(2) + "\n");
    put("config.json", to_json(cfg).dump(2) + "\n");
    outputs.push_back("report.json");
    outputs.push_back("config.json");

    const json manifest{{"scenario", std::string(to_string(result.scenario))},
                        {"seed", cfg.seed},
                        {"config_hash", config_hash(cfg)},
                        {"chunks", cfg.acq.chunks},
                        {"versions", build_versions()},
                        {"outputs", outputs}};
    put("manifest.json", manifest.dump(2) + "\n");
    return written;
}

}  // namespace umzi
