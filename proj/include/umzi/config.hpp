#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "umzi/coincidence.hpp"

namespace umzi {

enum class Scenario { fig3, fig4, fig5, sweep, simulate };

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view text);

struct Fig3Params {
    PortPair ports = PortPair::EF;
    std::vector<double> phases{kPi / 2.0, kPi};
    double duration = 100.0;
};

struct Fig4Params {
    PortPair antibunched = PortPair::EF;
    PortPair bunched = PortPair::DE;
    int phase_points = 24;
    double duration_per_point = 2.0;
};

struct Fig5Params {
    double v0 = 0.99;
    int delay_points = 64;
    double delay_min = 0.0;
    double delay_max = 5e-12;
    double duration_per_point = 10.0;
    int k = 1;  // pure antibunched phase index
};

struct SweepParams {
    PortPair ports = PortPair::EF;
    int phase_points = 24;
    double phase_min = 0.0;
    double phase_max = kTwoPi;  // exclusive
    double duration_per_point = 2.0;
};

struct SimulateParams {
    PortPair ports = PortPair::EF;
    double duration = 10.0;
};

/// Fully resolved experiment description.
struct ExperimentConfig {
    Scenario scenario = Scenario::fig3;
    std::uint64_t seed = 1;
    std::string output_path = "out";
    SourceModel source;
    UmziConfig umzi;
    /// True when umzi.coherence_factor was left null and derived from T_c and tau.
    bool derived_coherence = true;
    DetectorModel det_signal;
    DetectorModel det_idler;
    Acquisition acq;
    Fig3Params fig3;
    Fig4Params fig4;
    Fig5Params fig5;
    SweepParams sweep;
    SimulateParams simulate;

    Apparatus apparatus() const;
};

/// Every problem found while loading a config, one line each, prefixed by the
/// dotted field path.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// Shipped defaults: the experiment's source, UMZI, and detectors, with noise
/// rates giving a coincidence-to-accidental ratio near 32.
ExperimentConfig default_config();

nlohmann::json to_json(const ExperimentConfig& cfg);

/// Parses a `path=value` override. The value is read as JSON when it parses,
/// otherwise as a bare string.
std::pair<std::string, nlohmann::json> parse_override(std::string_view assignment);

/// Layers `doc` and then `overrides` over the defaults, rejects unknown keys
/// (suggesting the nearest known one), type-checks every field and validates
/// all invariants. Throws ConfigError listing every violation.
ExperimentConfig resolve_config(const nlohmann::json& doc,
                                const std::vector<std::pair<std::string, nlohmann::json>>& overrides = {});

/// Reads and resolves a JSON config file. I/O and syntax errors are reported
/// as ConfigError with the path (and byte offset for syntax errors).
ExperimentConfig validate_and_load(const std::filesystem::path& path,
                                   const std::vector<std::pair<std::string, nlohmann::json>>& overrides = {});

/// FNV-1a 64 of the canonical JSON dump without output_path, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace umzi
