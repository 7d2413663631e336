// qfclink <subcommand> --scenario <file> --out <dir> [--seed N] [--noise-rate-convention cw|in-gate]
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qfclink/app.hpp"
#include "qfclink/scenario.hpp"

int main(int argc, char** argv) {
    using namespace qfclink;

    CLI::App app{"Link-budget, Monte Carlo and fitting toolkit for frequency-converted photon links"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::string convention;

    for (auto name : kSubcommands) {
        auto* sub = app.add_subcommand(std::string(name));
        sub->add_option("--scenario", scenario_path, "Scenario file (.scn)")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Random seed (overrides [run] seed)");
        sub->add_option("--noise-rate-convention", convention, "Background rate convention for timetags")
            ->check(CLI::IsMember({"cw", "in-gate"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    RunOptions opt;
    opt.out_dir = out_dir;
    opt.seed = seed;
    if (convention == "cw") opt.convention = NoiseRateConvention::cw;
    if (convention == "in-gate") opt.convention = NoiseRateConvention::in_gate;

    std::optional<Scenario> scenario;
    if (!scenario_path.empty()) {
        try {
            scenario = parse_scenario(read_file(scenario_path));
        } catch (const IoError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitIo;
        } catch (const std::exception& e) {
            std::cerr << "error: " << scenario_path << ": " << e.what() << '\n';
            return kExitUsage;
        }
        opt.scenario_dir = std::filesystem::path(scenario_path).parent_path();
    }
    return run_subcommand(cmd, scenario, opt, std::cout, std::cerr);
}
