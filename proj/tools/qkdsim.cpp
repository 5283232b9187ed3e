// qkdsim: scenario runner for the QKD sub-network simulator.
//
//   qkdsim run <scenario-file> --seed N --out DIR [--transcripts]
//   qkdsim stats <report-file>
//
// Set QKDSIM_LOG=info (or debug) to echo the run's event log to stderr.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qkdsim/scenario.hpp"

using namespace qkdsim;

int main(int argc, char** argv) {
    CLI::App app{"deterministic QKD sub-network and secure-channel simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string report_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    bool transcripts = false;

    auto* run = app.add_subcommand("run", "execute a scenario script");
    run->add_option("scenario", scenario_path, "scenario file")->required();
    run->add_option("--seed", seed, "run seed (overrides the scenario's seed line)")
        ->each([&](const std::string&) { seed_set = true; });
    run->add_option("--out", out_dir, "output directory for report.txt and transcripts");
    run->add_flag("--transcripts", transcripts, "write per-session classical-channel transcripts");

    auto* stats = app.add_subcommand("stats", "summarize a written report");
    stats->add_option("report", report_path, "report file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            auto sc = scenario::Scenario::parse_file(scenario_path);
            scenario::RunOptions opts;
            if (seed_set) opts.seed = seed;
            opts.out_dir = out_dir;
            opts.transcripts = transcripts;
            auto res = scenario::run_scenario(std::move(sc), opts);

            const char* log_env = std::getenv("QKDSIM_LOG");
            if (log_env && *log_env) std::cerr << res.report;

            std::cout << "steps=" << res.steps << " failed=" << res.failed_steps
                      << " status=" << (res.exit_status == 0 ? "ok" : "failed") << "\n";
            if (!res.out_dir.empty())
                std::cout << "report: " << res.out_dir << "/report.txt\n";
            else
                std::cout << res.report;
            return res.exit_status;
        }
        if (stats->parsed()) {
            std::ifstream f(report_path);
            if (!f) {
                std::cerr << "cannot open report " << report_path << "\n";
                return 2;
            }
            std::cout << scenario::summarize_report(f);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::parse ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
