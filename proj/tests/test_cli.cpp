#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
    int code;
    std::string output;
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "umzi_cli_test" / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

CliRun run(const std::string& args) {
    const fs::path log = scratch("last.log");
    const std::string cmd = std::string("\"") + UMZI_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

// short settings so each scenario finishes in about a second
const std::map<std::string, std::string> kQuick = {
    {"fig3", "--set fig3.duration_s=1"},
    {"fig4", "--set fig4.duration_per_point_s=0.05 --set fig4.phase_points=8"},
    {"fig5", "--set fig5.duration_per_point_s=1"},
    {"sweep", "--set sweep.duration_per_point_s=0.05 --set sweep.phase_points=8"},
    {"simulate", "--set simulate.duration_s=0.5"},
};

std::map<std::string, std::string> csvs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv")
            out[e.path().filename().string()] = slurp(e.path());
    return out;
}

}  // namespace

TEST(Cli, HelpListsEveryFlagAndExitsZero) {
    const CliRun r = run("--help");
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--config", "--seed", "--out", "--set", "--help"})
        EXPECT_NE(r.output.find(flag), std::string::npos) << flag;
    for (const char* sub : {"fig3", "fig4", "fig5", "sweep", "simulate", "validate"})
        EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST(Cli, ErrorsExitNonzero) {
    EXPECT_NE(run("").code, 0);
    EXPECT_NE(run("nonsense").code, 0);
    EXPECT_NE(run("validate --config /nonexistent/umzi.json").code, 0);
    const CliRun bad = run("validate --set umzi.coupler_ratio=1.2");
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.output.find("umzi.coupler_ratio"), std::string::npos);
    const CliRun typo = run("validate --set umzi.phse=1");
    EXPECT_NE(typo.code, 0);
    EXPECT_NE(typo.output.find("did you mean 'umzi.phi'"), std::string::npos);
}

TEST(Cli, ValidateShippedConfig) {
    const CliRun r = run(std::string("validate --config \"") + UMZI_SOURCE_DIR + "/configs/default.json\"");
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("config OK"), std::string::npos);
}

TEST(Cli, SetFlagOverridesConfigFile) {
    const fs::path cfg = scratch("cfg.json");
    std::ofstream(cfg) << R"({"umzi": {"phi": 0.25}, "seed": 9})";
    const fs::path out = scratch("prec");
    const CliRun r = run("validate -c \"" + cfg.string() + "\" --set umzi.phi=1.5708 --seed 11");
    ASSERT_EQ(r.code, 0) << r.output;
    const json j = json::parse(r.output.substr(0, r.output.rfind('}') + 1));
    EXPECT_DOUBLE_EQ(j["umzi"]["phi"].get<double>(), 1.5708);
    EXPECT_EQ(j["seed"], 11);
}

TEST(Cli, EveryScenarioIsDeterministicAndWritesManifest) {
    for (const auto& [name, quick] : kQuick) {
        const fs::path a = scratch(name + "_a"), b = scratch(name + "_b");
        ASSERT_EQ(run(name + " --seed 3 -o \"" + a.string() + "\" " + quick).code, 0) << name;
        ASSERT_EQ(run(name + " --seed 3 -o \"" + b.string() + "\" " + quick).code, 0) << name;
        const auto ca = csvs(a), cb = csvs(b);
        ASSERT_FALSE(ca.empty()) << name;
        EXPECT_EQ(ca, cb) << name;

        const json m = json::parse(slurp(a / "manifest.json"));
        EXPECT_EQ(m["scenario"], name);
        EXPECT_EQ(m["seed"], 3);
        EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
        EXPECT_TRUE(m["versions"].contains("umzi"));
        EXPECT_TRUE(fs::exists(a / "report.json"));
        EXPECT_TRUE(fs::exists(a / "config.json"));
        EXPECT_EQ(m["config_hash"], json::parse(slurp(b / "manifest.json"))["config_hash"]);
    }
}

TEST(Cli, ChunkCountDoesNotChangeOutputs) {
    for (const std::string name : {"fig3", "sweep"}) {
        const fs::path a = scratch(name + "_c1"), b = scratch(name + "_c3");
        const std::string quick = kQuick.at(name);
        ASSERT_EQ(run(name + " -o \"" + a.string() + "\" --set acquisition.chunks=1 " + quick).code, 0);
        ASSERT_EQ(run(name + " -o \"" + b.string() + "\" --set acquisition.chunks=3 " + quick).code, 0);
        EXPECT_EQ(csvs(a), csvs(b)) << name;
    }
}

TEST(Cli, DifferentSeedChangesOutputs) {
    const fs::path a = scratch("seed_a"), b = scratch("seed_b");
    ASSERT_EQ(run("simulate --seed 1 -o \"" + a.string() + "\" " + kQuick.at("simulate")).code, 0);
    ASSERT_EQ(run("simulate --seed 2 -o \"" + b.string() + "\" " + kQuick.at("simulate")).code, 0);
    EXPECT_NE(csvs(a), csvs(b));
}

TEST(Cli, UnwritableOutputReportsPath) {
    const fs::path blocker = scratch("blocker");
    std::ofstream(blocker) << "file";
    const CliRun r = run("simulate -o \"" + (blocker / "sub").string() + "\" " + kQuick.at("simulate"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("blocker"), std::string::npos) << r.output;
}
