// Command-line front end: one subcommand per scenario kind.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sfdvi/errors.hpp"
#include "sfdvi/scenario.hpp"

namespace {

constexpr int kConfigRejected = 2;
constexpr int kNumericFailure = 3;

struct Options {
    std::string config;
    std::string out_csv;
    std::string out_json;
    std::int64_t seed = -1;
    int paths = -1;
    int threads = 1;
};

int run(const std::string& kind, const Options& o) {
    std::ifstream f(o.config, std::ios::binary);
    if (!f) {
        std::cerr << "error: cannot read config '" << o.config << "'\n";
        return kConfigRejected;
    }
    std::stringstream ss;
    ss << f.rdbuf();

    sfdvi::Overrides ov;
    if (o.seed >= 0) ov.seed = static_cast<std::uint64_t>(o.seed);
    if (o.paths >= 0) ov.paths = o.paths;

    sfdvi::ScenarioConfig cfg;
    try {
        cfg = sfdvi::parse_scenario(ss.str(), ov);
    } catch (const sfdvi::ConfigError& e) {
        std::cerr << o.config << ": " << e.what() << "\n";
        return kConfigRejected;
    }
    if (cfg.kind != kind) {
        std::cerr << o.config << ": kind is '" << cfg.kind << "' but the subcommand is '" << kind << "'\n";
        return kConfigRejected;
    }
    const std::string csv = o.out_csv.empty() ? cfg.out_csv : o.out_csv;
    const std::string js = o.out_json.empty() ? cfg.out_json : o.out_json;

    try {
        const sfdvi::ResultTable table = sfdvi::run_scenario(cfg, o.threads);
        if (csv.empty() && js.empty())
            std::cout << sfdvi::to_csv(table);
        else
            sfdvi::write_results(table, csv, js);
    } catch (const sfdvi::ScenarioFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumericFailure;
    } catch (const sfdvi::NumericError& e) {
        std::cerr << "numeric failure: " << kind << ": " << e.what() << "\n";
        return kNumericFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "rejected: " << kind << ": " << e.what() << "\n";
        return kConfigRejected;
    } catch (const std::exception& e) {
        std::cerr << "error: " << kind << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic fractional differential variational inequality toolkit"};
    app.require_subcommand(1);

    Options opts;
    std::string chosen;
    const std::pair<const char*, const char*> kinds[] = {
        {"simulate", "Integrate sample paths of a coupled system"},
        {"stability", "(m, n) error grid of a perturbation family"},
        {"projection", "Projection gaps of a nested set family"},
        {"spep", "Stochastic spatial price equilibrium with equilibrium checks"},
        {"game", "Multi-agent game with Nash certificates"},
        {"sanity", "Monte Carlo checks of the noise generators"},
    };
    for (const auto& [name, help] : kinds) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out-csv", opts.out_csv, "CSV output path (overrides output.csv)");
        sub->add_option("--out-json", opts.out_json, "JSON sidecar path (overrides output.json)");
        sub->add_option("--seed", opts.seed, "Base seed (overrides noise.seed)")->check(CLI::NonNegativeNumber);
        sub->add_option("--paths", opts.paths, "Monte Carlo paths (overrides mc.paths)")->check(CLI::PositiveNumber);
        sub->add_option("--threads", opts.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
        sub->callback([&chosen, name = std::string(name)] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigRejected;
    }
    return run(chosen, opts);
}
