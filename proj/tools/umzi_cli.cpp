#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "umzi/config.hpp"
#include "umzi/scenarios.hpp"

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> sets;
};

umzi::ExperimentConfig load(const GlobalOptions& g, std::optional<umzi::Scenario> scenario) {
    std::vector<std::pair<std::string, nlohmann::json>> overrides;
    if (scenario)
        overrides.emplace_back("scenario", std::string(umzi::to_string(*scenario)));
    for (const auto& s : g.sets)
        overrides.push_back(umzi::parse_override(s));
    if (g.seed)
        overrides.emplace_back("seed", *g.seed);
    if (!g.out.empty())
        overrides.emplace_back("output_path", g.out);
    // Flags win over the file, which wins over the defaults.
    if (g.config_path.empty())
        return umzi::resolve_config(nlohmann::json::object(), overrides);
    return umzi::validate_and_load(g.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulate path-entangled photon routing through an unbalanced Mach-Zehnder interferometer"};
    app.set_version_flag("--version", std::string(UMZI_VERSION));
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("-c,--config", g.config_path, "JSON experiment config (defaults are used for absent fields)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Monte Carlo seed (overrides the config)");
    app.add_option("-o,--out", g.out, "Output directory (overrides output_path)");
    app.add_option("--set", g.sets, "Override a config field by dotted path, e.g. --set umzi.phi=1.5708 (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

    struct Sub {
        const char* name;
        const char* help;
        std::optional<umzi::Scenario> scenario;
    };
    const Sub subs[] = {
        {"fig3", "Time-resolved coincidence histograms at the configured phases, with peak fit and CAR",
         umzi::Scenario::fig3},
        {"fig4", "Phase sweeps of an antibunched and a bunched port pair, with fringe fits", umzi::Scenario::fig4},
        {"fig5", "Spatial beating scan of the antibunched state versus relative delay", umzi::Scenario::fig5},
        {"sweep", "Phase sweep of one port pair", umzi::Scenario::sweep},
        {"simulate", "Single run at the configured phase", umzi::Scenario::simulate},
        {"validate", "Load and check the config, print the resolved JSON, write nothing", std::nullopt},
    };
    std::vector<CLI::App*> commands;
    for (const auto& s : subs)
        commands.push_back(app.add_subcommand(s.name, s.help));

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t i = 0; i < commands.size(); ++i) {
            if (!commands[i]->parsed())
                continue;
            const umzi::ExperimentConfig cfg = load(g, subs[i].scenario);
            if (!subs[i].scenario) {
                std::cout << umzi::to_json(cfg).dump(2) << "\n";
                std::cerr << "config OK (hash " << umzi::config_hash(cfg) << ")\n";
                return 0;
            }
            const umzi::ScenarioResult result = umzi::run_scenario(cfg);
            for (const auto& p : umzi::write_outputs(result, cfg, cfg.output_path))
                std::cerr << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const umzi::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
