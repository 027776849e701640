#include "umzi/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace umzi {

namespace {

using nlohmann::json;

// Fields that may legitimately be null.
bool nullable(const std::string& path) { return path == "umzi.coherence_factor"; }

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string nearest_key(const std::string& key, const json& schema) {
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& [k, _] : schema.items()) {
        const std::size_t d = edit_distance(key, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

void find_unknown_keys(const json& doc, const json& schema, const std::string& prefix,
                       std::vector<std::string>& issues) {
    if (!doc.is_object() || !schema.is_object())
        return;
    for (const auto& [k, v] : doc.items()) {
        const std::string path = join(prefix, k);
        if (!schema.contains(k)) {
            const std::string hint = nearest_key(k, schema);
            issues.push_back(hint.empty() ? fmt::format("{}: unknown key", path)
                                          : fmt::format("{}: unknown key (did you mean '{}'?)", path,
                                                        join(prefix, hint)));
            continue;
        }
        find_unknown_keys(v, schema.at(k), path, issues);
    }
}

// Layers `patch` over `base`; unlike RFC 7386 a null in the patch is kept.
void overlay(json& base, const json& patch) {
    if (!patch.is_object() || !base.is_object()) {
        base = patch;
        return;
    }
    for (const auto& [k, v] : patch.items()) {
        if (base.contains(k))
            overlay(base[k], v);
        else
            base[k] = v;
    }
}

std::string type_name(const json& v) {
    if (v.is_number_integer())
        return "integer";
    return v.type_name();
}

void check_types(const json& value, const json& schema, const std::string& path, std::vector<std::string>& issues) {
    if (value.is_null()) {
        if (!nullable(path))
            issues.push_back(fmt::format("{}: missing value", path));
        return;
    }
    if (schema.is_null()) {
        // nullable numeric field
        if (!value.is_number())
            issues.push_back(fmt::format("{}: expected number or null, got {}", path, type_name(value)));
        return;
    }
    if (schema.is_object()) {
        if (!value.is_object()) {
            issues.push_back(fmt::format("{}: expected object, got {}", path, type_name(value)));
            return;
        }
        for (const auto& [k, v] : schema.items()) {
            if (value.contains(k))
                check_types(value.at(k), v, join(path, k), issues);
        }
        return;
    }
    if (schema.is_array()) {
        if (!value.is_array()) {
            issues.push_back(fmt::format("{}: expected array, got {}", path, type_name(value)));
            return;
        }
        for (std::size_t i = 0; i < value.size(); ++i)
            if (!value[i].is_number())
                issues.push_back(fmt::format("{}[{}]: expected number, got {}", path, i, type_name(value[i])));
        return;
    }
    if (schema.is_number_integer()) {
        const bool integral = value.is_number_integer() ||
                              (value.is_number_float() && std::floor(value.get<double>()) == value.get<double>());
        if (!integral)
            issues.push_back(fmt::format("{}: expected integer, got {}", path, type_name(value)));
        else if (schema.is_number_unsigned() && value.get<double>() < 0)
            issues.push_back(fmt::format("{}: must be non-negative", path));
        return;
    }
    if (schema.is_number() && !value.is_number()) {
        issues.push_back(fmt::format("{}: expected number, got {}", path, type_name(value)));
        return;
    }
    if (schema.is_string() && !value.is_string())
        issues.push_back(fmt::format("{}: expected string, got {}", path, type_name(value)));
    if (schema.is_boolean() && !value.is_boolean())
        issues.push_back(fmt::format("{}: expected boolean, got {}", path, type_name(value)));
}

json::json_pointer pointer_of(const std::string& dotted) {
    std::string p;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.'))
        p += "/" + part;
    return json::json_pointer(p);
}

// Reads typed fields out of the merged document and records invariant
// violations against their dotted paths.
class FieldReader {
public:
    FieldReader(const json& doc, std::vector<std::string>& issues) : doc_(doc), issues_(issues) {}

    double num(const std::string& path) const { return doc_.at(pointer_of(path)).get<double>(); }
    long long integer(const std::string& path) const {
        return static_cast<long long>(doc_.at(pointer_of(path)).get<double>());
    }
    std::string str(const std::string& path) const { return doc_.at(pointer_of(path)).get<std::string>(); }
    const json& raw(const std::string& path) const { return doc_.at(pointer_of(path)); }

    void require(bool ok, const std::string& path, const std::string& what) {
        if (!ok)
            issues_.push_back(fmt::format("{}: {}", path, what));
    }
    double positive(const std::string& path) {
        const double v = num(path);
        require(v > 0.0 && std::isfinite(v), path, "must be positive");
        return v;
    }
    double non_negative(const std::string& path) {
        const double v = num(path);
        require(v >= 0.0 && std::isfinite(v), path, "must be non-negative");
        return v;
    }
    double unit_interval(const std::string& path) {
        const double v = num(path);
        require(v >= 0.0 && v <= 1.0, path, "must lie in [0, 1]");
        return v;
    }
    PortPair port_pair(const std::string& path) {
        try {
            return parse_port_pair(str(path));
        } catch (const std::invalid_argument&) {
            issues_.push_back(fmt::format("{}: expected one of DE, FG, EF, DG", path));
            return PortPair::EF;
        }
    }

private:
    const json& doc_;
    std::vector<std::string>& issues_;
};

SpectralMode read_mode(FieldReader& r, const std::string& prefix) {
    const double wl = r.positive(prefix + ".center_wavelength_nm");
    const double bw = r.positive(prefix + ".bandwidth_3db_hz");
    const long long order = r.integer(prefix + ".filter_order");
    r.require(order >= 1, prefix + ".filter_order", "must be >= 1");
    if (wl > 0.0 && bw > 0.0 && order >= 1 && std::isfinite(wl) && std::isfinite(bw))
        return SpectralMode(wl, bw, static_cast<int>(order));
    return {};
}

DetectorModel read_detector(FieldReader& r, const std::string& prefix) {
    DetectorModel d;
    d.id = r.str(prefix + ".id");
    d.efficiency = r.unit_interval(prefix + ".efficiency");
    d.dark_count_rate = r.non_negative(prefix + ".dark_count_rate_hz");
    d.jitter_fwhm = r.non_negative(prefix + ".jitter_fwhm_s");
    return d;
}

bool is_tick_multiple(double t, double res) {
    const double q = t / res;
    return q >= 0.5 && std::abs(q - std::round(q)) <= 1e-6 * std::max(1.0, q);
}

ExperimentConfig read_config(const json& doc, std::vector<std::string>& issues) {
    FieldReader r(doc, issues);
    ExperimentConfig cfg;

    try {
        cfg.scenario = parse_scenario(r.str("scenario"));
    } catch (const std::invalid_argument&) {
        issues.push_back("scenario: expected one of fig3, fig4, fig5, sweep, simulate");
    }
    cfg.seed = static_cast<std::uint64_t>(r.raw("seed").get<double>());
    if (r.raw("seed").is_number_unsigned())
        cfg.seed = r.raw("seed").get<std::uint64_t>();
    cfg.output_path = r.str("output_path");
    r.require(!cfg.output_path.empty(), "output_path", "must not be empty");

    SourceModel& s = cfg.source;
    s.pump_wavelength_nm = r.positive("source.pump_wavelength_nm");
    s.signal = read_mode(r, "source.signal");
    s.idler = read_mode(r, "source.idler");
    s.two_photon_coherence_time = r.positive("source.two_photon_coherence_time_s");
    s.pair_rate = r.non_negative("source.pair_rate_hz");
    s.accidental_singles_rate.signal = r.non_negative("source.accidental_singles_rate_hz.signal");
    s.accidental_singles_rate.idler = r.non_negative("source.accidental_singles_rate_hz.idler");
    if (s.pump_wavelength_nm > 0.0) {
        const double mismatch =
            std::abs(2.0 * s.pump_angular_frequency() - s.signal.angular_frequency() - s.idler.angular_frequency());
        r.require(mismatch < kEnergyConservationTolerance, "source.pump_wavelength_nm",
                  fmt::format("energy conservation violated by {:.3f} GHz (tolerance 1 GHz); an energy-conserving "
                              "pump for these channels sits at {:.4f} nm",
                              mismatch / kTwoPi / 1e9, energy_conserving_pump_nm(s.signal, s.idler)));
    }
    const double tau_coh = std::max(s.signal.single_photon_coherence_time(), s.idler.single_photon_coherence_time());
    r.require(s.two_photon_coherence_time > 100.0 * tau_coh, "source.two_photon_coherence_time_s",
              "must greatly exceed the single-photon coherence time");

    UmziConfig& u = cfg.umzi;
    u.tau = r.positive("umzi.tau");
    u.phi = r.num("umzi.phi");
    r.require(std::isfinite(u.phi), "umzi.phi", "must be finite");
    u.theta0 = r.num("umzi.theta0");
    r.require(std::isfinite(u.theta0), "umzi.theta0", "must be finite");
    u.coupler_ratio = r.num("umzi.coupler_ratio");
    r.require(u.coupler_ratio > 0.0 && u.coupler_ratio < 1.0, "umzi.coupler_ratio", "must lie in (0, 1)");
    u.insertion_loss_db = r.non_negative("umzi.insertion_loss_db");
    r.require(u.tau > tau_coh, "umzi.tau", "must exceed the single-photon coherence time");
    if (r.raw("umzi.coherence_factor").is_null()) {
        cfg.derived_coherence = true;
        if (u.tau > 0.0 && s.two_photon_coherence_time > 0.0)
            u.coherence_factor = coherence_factor(s.two_photon_coherence_time, u.tau);
    } else {
        cfg.derived_coherence = false;
        u.coherence_factor = r.unit_interval("umzi.coherence_factor");
    }

    cfg.det_signal = read_detector(r, "detectors.signal");
    cfg.det_idler = read_detector(r, "detectors.idler");

    Acquisition& a = cfg.acq;
    a.resolution = r.positive("acquisition.resolution_s");
    a.bin_width = r.positive("acquisition.bin_width_s");
    a.window = r.positive("acquisition.window_s");
    a.filter_width = r.positive("acquisition.filter_width_s");
    a.block_duration = r.positive("acquisition.block_duration_s");
    const long long chunks = r.integer("acquisition.chunks");
    r.require(chunks >= 1 && chunks <= 256, "acquisition.chunks", "must lie in [1, 256]");
    a.chunks = static_cast<unsigned>(std::clamp<long long>(chunks, 1, 256));
    a.background_offsets = r.raw("acquisition.background_offsets_s").get<std::vector<double>>();
    if (a.resolution > 0.0) {
        r.require(is_tick_multiple(a.bin_width, a.resolution), "acquisition.bin_width_s",
                  "must be an integer multiple of resolution_s");
        r.require(is_tick_multiple(a.block_duration, a.resolution), "acquisition.block_duration_s",
                  "must be an integer multiple of resolution_s");
    }
    r.require(a.window >= 4.0 * u.tau, "acquisition.window_s", "must span at least +-2 tau");
    r.require(!a.background_offsets.empty(), "acquisition.background_offsets_s", "must not be empty");
    for (std::size_t i = 0; i < a.background_offsets.size(); ++i) {
        const double o = a.background_offsets[i];
        const std::string path = fmt::format("acquisition.background_offsets_s[{}]", i);
        bool clear = true;
        for (double peak : {-u.tau, 0.0, u.tau})
            clear = clear && std::abs(o - peak) >= a.filter_width;
        r.require(clear, path, "background window overlaps a coincidence peak");
        r.require(std::abs(o) + 0.5 * a.filter_width <= 0.5 * a.window, path,
                  "background window falls outside the coincidence window");
    }

    cfg.fig3.ports = r.port_pair("fig3.port_pair");
    cfg.fig3.phases = r.raw("fig3.phases_rad").get<std::vector<double>>();
    r.require(!cfg.fig3.phases.empty(), "fig3.phases_rad", "must not be empty");
    cfg.fig3.duration = r.positive("fig3.duration_s");

    cfg.fig4.antibunched = r.port_pair("fig4.antibunched_port_pair");
    cfg.fig4.bunched = r.port_pair("fig4.bunched_port_pair");
    r.require(virtual_port_of(cfg.fig4.antibunched) == VirtualPort::antibunched, "fig4.antibunched_port_pair",
              "must be EF or DG");
    r.require(virtual_port_of(cfg.fig4.bunched) == VirtualPort::bunched, "fig4.bunched_port_pair",
              "must be DE or FG");
    cfg.fig4.phase_points = static_cast<int>(r.integer("fig4.phase_points"));
    r.require(cfg.fig4.phase_points >= 6, "fig4.phase_points", "must be >= 6");
    cfg.fig4.duration_per_point = r.positive("fig4.duration_per_point_s");

    cfg.fig5.v0 = r.unit_interval("fig5.v0");
    cfg.fig5.delay_points = static_cast<int>(r.integer("fig5.delay_points"));
    r.require(cfg.fig5.delay_points >= 8, "fig5.delay_points", "must be >= 8");
    cfg.fig5.delay_min = r.num("fig5.delay_min_s");
    cfg.fig5.delay_max = r.num("fig5.delay_max_s");
    r.require(cfg.fig5.delay_max > cfg.fig5.delay_min, "fig5.delay_max_s", "must exceed fig5.delay_min_s");
    cfg.fig5.duration_per_point = r.positive("fig5.duration_per_point_s");
    cfg.fig5.k = static_cast<int>(r.integer("fig5.k"));

    cfg.sweep.ports = r.port_pair("sweep.port_pair");
    cfg.sweep.phase_points = static_cast<int>(r.integer("sweep.phase_points"));
    r.require(cfg.sweep.phase_points >= 1, "sweep.phase_points", "must be >= 1");
    cfg.sweep.phase_min = r.num("sweep.phase_min_rad");
    cfg.sweep.phase_max = r.num("sweep.phase_max_rad");
    r.require(cfg.sweep.phase_max > cfg.sweep.phase_min, "sweep.phase_max_rad", "must exceed sweep.phase_min_rad");
    cfg.sweep.duration_per_point = r.positive("sweep.duration_per_point_s");

    cfg.simulate.ports = r.port_pair("simulate.port_pair");
    cfg.simulate.duration = r.positive("simulate.duration_s");
    return cfg;
}

void set_path(json& doc, const std::string& dotted, const json& value) {
    json* node = &doc;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.'))
        parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].empty())
            throw ConfigError({fmt::format("--set {}: empty path component", dotted)});
        if (!node->is_object())
            *node = json::object();
        if (i + 1 == parts.size())
            (*node)[parts[i]] = value;
        else
            node = &(*node)[parts[i]];
    }
}

}  // namespace

std::string_view to_string(Scenario s) {
    switch (s) {
    case Scenario::fig3: return "fig3";
    case Scenario::fig4: return "fig4";
    case Scenario::fig5: return "fig5";
    case Scenario::sweep: return "sweep";
    case Scenario::simulate: return "simulate";
    }
    return "?";
}

Scenario parse_scenario(std::string_view text) {
    for (Scenario s : {Scenario::fig3, Scenario::fig4, Scenario::fig5, Scenario::sweep, Scenario::simulate})
        if (to_string(s) == text)
            return s;
    throw std::invalid_argument("unknown scenario '" + std::string(text) + "'");
}

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& i : issues)
              msg += "\n  " + i;
          return msg;
      }()),
      issues_(std::move(issues)) {}

Apparatus ExperimentConfig::apparatus() const { return {source, umzi, det_signal, det_idler, acq}; }

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.source = default_source();
    cfg.source.accidental_singles_rate = {2.3e5, 2.3e5};
    cfg.umzi.coherence_factor = coherence_factor(cfg.source.two_photon_coherence_time, cfg.umzi.tau);
    cfg.derived_coherence = true;
    cfg.det_signal = {"SNSPD1", 0.06, 10.0, 25e-12};
    cfg.det_idler = {"SNSPD2", 0.04, 10.0, 44e-12};
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    json umzi = cfg.umzi;
    if (cfg.derived_coherence)
        umzi["coherence_factor"] = nullptr;
    return json{
        {"scenario", std::string(to_string(cfg.scenario))},
        {"seed", cfg.seed},
        {"output_path", cfg.output_path},
        {"source", cfg.source},
        {"umzi", umzi},
        {"detectors", {{"signal", cfg.det_signal}, {"idler", cfg.det_idler}}},
        {"acquisition", cfg.acq},
        {"fig3",
         {{"port_pair", std::string(to_string(cfg.fig3.ports))},
          {"phases_rad", cfg.fig3.phases},
          {"duration_s", cfg.fig3.duration}}},
        {"fig4",
         {{"antibunched_port_pair", std::string(to_string(cfg.fig4.antibunched))},
          {"bunched_port_pair", std::string(to_string(cfg.fig4.bunched))},
          {"phase_points", cfg.fig4.phase_points},
          {"duration_per_point_s", cfg.fig4.duration_per_point}}},
        {"fig5",
         {{"v0", cfg.fig5.v0},
          {"delay_points", cfg.fig5.delay_points},
          {"delay_min_s", cfg.fig5.delay_min},
          {"delay_max_s", cfg.fig5.delay_max},
          {"duration_per_point_s", cfg.fig5.duration_per_point},
          {"k", cfg.fig5.k}}},
        {"sweep",
         {{"port_pair", std::string(to_string(cfg.sweep.ports))},
          {"phase_points", cfg.sweep.phase_points},
          {"phase_min_rad", cfg.sweep.phase_min},
          {"phase_max_rad", cfg.sweep.phase_max},
          {"duration_per_point_s", cfg.sweep.duration_per_point}}},
        {"simulate",
         {{"port_pair", std::string(to_string(cfg.simulate.ports))}, {"duration_s", cfg.simulate.duration}}},
    };
}

std::pair<std::string, json> parse_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ConfigError({fmt::format("--set '{}': expected path=value", assignment)});
    std::string path(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded())
        value = text;
    return {std::move(path), std::move(value)};
}

ExperimentConfig resolve_config(const json& doc, const std::vector<std::pair<std::string, json>>& overrides) {
    const json schema = to_json(default_config());
    std::vector<std::string> issues;
    if (!doc.is_object())
        throw ConfigError({"<root>: expected a JSON object"});

    json patched = doc;
    for (const auto& [path, value] : overrides)
        set_path(patched, path, value);

    find_unknown_keys(patched, schema, "", issues);
    json merged = schema;
    overlay(merged, patched);
    std::vector<std::string> type_issues;
    check_types(merged, schema, "", type_issues);
    // Type errors make the typed read below meaningless.
    if (!type_issues.empty()) {
        issues.insert(issues.end(), type_issues.begin(), type_issues.end());
        throw ConfigError(std::move(issues));
    }

    ExperimentConfig cfg = read_config(merged, issues);
    if (!issues.empty())
        throw ConfigError(std::move(issues));
    return cfg;
}

ExperimentConfig validate_and_load(const std::filesystem::path& path,
                                   const std::vector<std::pair<std::string, json>>& overrides) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError({fmt::format("{}: cannot open file", path.string())});
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({fmt::format("{}: malformed JSON at byte {}: {}", path.string(), e.byte, e.what())});
    }
    return resolve_config(doc, overrides);
}

std::string config_hash(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j.erase("output_path");  // where results go does not change them
    const std::string canon = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace umzi
