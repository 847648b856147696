#include "support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

using namespace epioc;
using namespace epioc::testing;
namespace fs = std::filesystem;

namespace {

using Table = std::vector<std::vector<std::string>>;

fs::path scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("epioc_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(EPIOC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Table read_csv(const fs::path& p) {
    Table t;
    std::istringstream in(read_file(p.string()));
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> row;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        if (!line.empty() && line.back() == ',') row.emplace_back();
        t.push_back(std::move(row));
    }
    return t;
}

std::size_t column(const Table& t, const std::string& name) {
    for (std::size_t j = 0; j < t.at(0).size(); ++j)
        if (t[0][j] == name) return j;
    throw std::runtime_error("no column " + name);
}

fs::path write_json(const fs::path& dir, const nlohmann::json& doc) {
    const fs::path p = dir / "scenario.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

}  // namespace

TEST(Cli, SimulateWritesTrajectoryAndMetrics) {
    const fs::path out = scratch("sim");
    ASSERT_EQ(run("simulate " + preset_path("capeverde-seirasei") + " --out " + out.string()), 0);
    const Table tr = read_csv(out / "trajectory.csv");
    EXPECT_EQ(tr[0].front(), "t");
    EXPECT_EQ(tr[0].size(), 1u + 8u + 1u);
    EXPECT_EQ(tr.size(), 1u + 337u);
    const Table m = read_csv(out / "metrics.csv");
    ASSERT_EQ(m.size(), 2u);
    const auto direct = simulate(preset("capeverde-seirasei")).second;
    EXPECT_LT(rel_err(std::stod(m[1][column(m, "cumulative_infected")]), direct.cumulative_infected), 1e-12);
}

TEST(Cli, SingleStepGridGivesTwoRows) {
    const fs::path out = scratch("one");
    auto doc = nlohmann::json::parse(read_file(preset_path("capeverde-seirasei")));
    doc["grid"]["n_steps"] = 1;
    ASSERT_EQ(run("simulate " + write_json(out, doc).string() + " --out " + out.string()), 0);
    EXPECT_EQ(read_csv(out / "trajectory.csv").size(), 3u);
}

TEST(Cli, ExitCodes) {
    const fs::path out = scratch("codes");
    EXPECT_EQ(run("simulate /nonexistent/scenario.json --out " + out.string()), 2);
    EXPECT_EQ(run("simulate"), 2);
    auto doc = nlohmann::json::parse(read_file(preset_path("capeverde-seirasei")));
    doc["params"]["beta_mh"] = 1.5;
    EXPECT_EQ(run("simulate " + write_json(out, doc).string() + " --out " + out.string()), 2);
}

TEST(Cli, OutputIsDeterministic) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    ASSERT_EQ(run("simulate " + preset_path("vaccine-epidemic") + " --out " + a.string()), 0);
    ASSERT_EQ(run("simulate " + preset_path("vaccine-epidemic") + " --out " + b.string()), 0);
    for (const char* f : {"trajectory.csv", "metrics.csv"})
        EXPECT_EQ(read_file((a / f).string()), read_file((b / f).string())) << f;
}

TEST(Cli, AnalyzeEveryPreset) {
    for (const auto& entry : fs::directory_iterator(EPIOC_PRESET_DIR)) {
        const fs::path out = scratch("analyze");
        EXPECT_EQ(run("analyze " + entry.path().string() + " --out " + out.string()), 0) << entry.path();
        EXPECT_TRUE(fs::exists(out / "analysis.csv")) << entry.path();
    }
}

TEST(Cli, AnalyzeCapeVerdeReportsR0AndCriticalLevel) {
    const fs::path out = scratch("r0");
    ASSERT_EQ(run("analyze " + preset_path("capeverde-seirasei") + " --critical c --out " + out.string()), 0);
    const Table t = read_csv(out / "analysis.csv");
    const std::size_t value = column(t, "value");
    bool seen_r0 = false, seen_critical = false;
    for (const auto& row : t) {
        if (row[0] == "R0" && row[1] == "closed_form") {
            seen_r0 = true;
            EXPECT_NEAR(std::stod(row[value]), 2.396, 5e-4);
        }
        if (row[0] == "critical") {
            seen_critical = true;
            // R0 of the scenario with that adulticide level is one
            Scenario s = preset("capeverde-seirasei");
            s.control.levels["c"] = std::stod(row[value]);
            EXPECT_NEAR(closed_form_r0(AnalysisInput::from(s)).value, 1.0, 1e-6);
        }
    }
    EXPECT_TRUE(seen_r0);
    EXPECT_TRUE(seen_critical);
}

TEST(Cli, OptimizeZeroInfectionWeight) {
    const fs::path out = scratch("zero");
    auto doc = nlohmann::json::parse(read_file(preset_path("capeverde-seirasei-oc")));
    doc["weights"]["gamma_D"] = 0.0;
    ASSERT_EQ(run("optimize " + write_json(out, doc).string() + " --out " + out.string()), 0);
    EXPECT_EQ(std::stod(read_file((out / "objective.txt").string())), 0.0);
}

TEST(Cli, OptimizeCapeVerdeSweep) {
    const fs::path out = scratch("sweep");
    ASSERT_EQ(run("optimize " + preset_path("capeverde-seirasei-oc") + " --solver sweep --out " + out.string()), 0);
    const double j = std::stod(read_file((out / "objective.txt").string()));
    EXPECT_GE(j, 0.040);
    EXPECT_LE(j, 0.055);
    for (const char* f : {"control.csv", "costate.csv", "trajectory.csv", "convergence.csv", "metrics.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(Cli, NonConvergenceExitsFourAndStillWrites) {
    const fs::path out = scratch("nc");
    auto doc = nlohmann::json::parse(read_file(preset_path("capeverde-seirasei-oc")));
    doc["solver"]["max_iter"] = 1;
    doc["solver"]["tol"] = 1e-14;
    ASSERT_EQ(run("optimize " + write_json(out, doc).string() + " --solver sweep --out " + out.string()), 4);
    const Table m = read_csv(out / "metrics.csv");
    EXPECT_EQ(m[1][column(m, "converged")], "false");
    EXPECT_TRUE(fs::exists(out / "control.csv"));
}

TEST(Cli, StrategyAmountsAndRanking) {
    const fs::path out = scratch("strategy");
    ASSERT_EQ(run("strategy " + preset_path("capeverde-seirasei") +
                  " --schedule pulse:7:1:1 --schedule c=pulse:30:1:1 --schedule constant:0 --out " + out.string()),
              0);
    const Table m = read_csv(out / "metrics.csv");
    ASSERT_EQ(m.size(), 4u);
    const std::size_t amount = column(m, "amount_c");
    EXPECT_NEAR(std::stod(m[1][amount]), 12.0, 1e-12);
    EXPECT_NEAR(std::stod(m[2][amount]), 3.0, 1e-12);
    EXPECT_EQ(read_csv(out / "ranking.csv").size(), 4u);

    // a zero constant schedule is the uncontrolled run
    const fs::path sim = scratch("strategy_sim");
    ASSERT_EQ(run("simulate " + preset_path("capeverde-seirasei") + " --out " + sim.string()), 0);
    const Table s = read_csv(sim / "metrics.csv");
    for (const char* col : {"peak_infected_humans", "cumulative_infected"})
        EXPECT_EQ(m[3][column(m, col)], s[1][column(s, col)]) << col;
}

TEST(Cli, StrategyRejectsUnknownControl) {
    const fs::path out = scratch("badctl");
    EXPECT_EQ(run("strategy " + preset_path("capeverde-seirasei") + " --schedule u=constant:0.1 --out " + out.string()),
              2);
}
