// Command line front end: train policies under strategic response, rebuild
// reports from stored runs, run the verification suites, and generate the
// loan-style surrogate dataset.
//
// Exit codes: 0 success, 1 failure (including failed checks),
// 2 configuration errors, 3 numeric aborts during training.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spg/checks.hpp"
#include "spg/config.hpp"
#include "spg/learner.hpp"
#include "spg/loan_env.hpp"
#include "spg/report.hpp"
#include "spg/runner.hpp"

namespace {

int cmd_run(const std::string& cfg_path, const std::string& scenario, const std::string& out_dir,
            const std::vector<std::string>& sets) {
    std::vector<std::string> overrides;
    if (!scenario.empty()) overrides.push_back("scenario=" + scenario);
    if (!out_dir.empty()) overrides.push_back("out_dir=" + out_dir);
    overrides.insert(overrides.end(), sets.begin(), sets.end());
    spg::harness::ExperimentConfig cfg = spg::harness::load(cfg_path, overrides);
    spg::harness::run_experiment(cfg, std::cout);
    return 0;
}

int cmd_report(const std::vector<std::string>& dirs) {
    for (const auto& d : dirs) spg::harness::report::write_report(d, std::cout);
    return 0;
}

int cmd_check(const std::string& group) {
    auto results = spg::harness::checks::run_group(group);
    if (results.empty())
        throw spg::harness::ConfigError("unknown check group: " + group);
    return spg::harness::checks::print_results(results, std::cout);
}

int cmd_surrogate(const std::string& path, std::size_t rows, std::size_t dim,
                  std::uint64_t seed) {
    if (rows == 0 || dim == 0)
        throw spg::harness::ConfigError("surrogate: rows and dim must be positive");
    spg::loan::write_surrogate_csv(path, rows, dim, seed);
    std::cout << "wrote " << rows << " rows to " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"policy learning under strategic feature response"};
    app.require_subcommand(1);

    std::string cfg_path, scenario, out_dir;
    std::vector<std::string> sets;
    auto* run = app.add_subcommand("run", "train policies and write run artifacts");
    run->add_option("config", cfg_path, "JSON config file; omit to use scenario defaults");
    run->add_option("--scenario", scenario,
                    "preset: synthetic, synthetic_noisy, synthetic_softmax, synthetic_coarse, "
                    "loan");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--set", sets, "override by dotted path, e.g. --set env.cost_c=0.05")
        ->type_size(1)
        ->allow_extra_args(false);

    std::vector<std::string> dirs;
    auto* rep = app.add_subcommand("report", "rebuild summary table and plots from run output");
    rep->add_option("dir", dirs, "run directories containing metrics.csv")->required();

    std::string group = "all";
    auto* chk = app.add_subcommand("check", "run verification suites, print PASS/FAIL per item");
    chk->add_option("group", group,
                    "all, gradients, smoothness, movement, counts, identity, trend");

    std::string spath;
    std::size_t srows = 300000, sdim = 55;
    std::uint64_t sseed = 99;
    auto* sur = app.add_subcommand("surrogate", "write a loan-style synthetic CSV dataset");
    sur->add_option("--out", spath, "output CSV path")->required();
    sur->add_option("--rows", srows, "row count");
    sur->add_option("--dim", sdim, "feature dimension");
    sur->add_option("--seed", sseed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(cfg_path, scenario, out_dir, sets);
        if (rep->parsed()) return cmd_report(dirs);
        if (chk->parsed()) return cmd_check(group);
        if (sur->parsed()) return cmd_surrogate(spath, srows, sdim, sseed);
    } catch (const spg::harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const spg::learner::NumericAbort& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
