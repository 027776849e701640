#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "umzi/config.hpp"

namespace umzi {

/// In-memory result of one scenario: a JSON report plus named output files
/// (CSV bodies), in the order they are written.
struct ScenarioResult {
    Scenario scenario = Scenario::fig3;
    nlohmann::json report;
    std::vector<std::pair<std::string, std::string>> files;
};

ScenarioResult run_fig3(const ExperimentConfig& cfg);
ScenarioResult run_fig4(const ExperimentConfig& cfg);
ScenarioResult run_fig5(const ExperimentConfig& cfg);
ScenarioResult run_sweep(const ExperimentConfig& cfg);
ScenarioResult run_simulate(const ExperimentConfig& cfg);

/// Dispatches on cfg.scenario.
ScenarioResult run_scenario(const ExperimentConfig& cfg);

/// Versions of the program and the libraries it was built against.
nlohmann::json build_versions();

/// Writes the CSVs, `report.json`, `config.json` (resolved) and
/// `manifest.json` into `dir`, creating it if needed. Returns written paths.
/// Throws std::runtime_error naming the offending path on I/O failure.
std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result, const ExperimentConfig& cfg,
                                                 const std::filesystem::path& dir);

}  // namespace umzi
