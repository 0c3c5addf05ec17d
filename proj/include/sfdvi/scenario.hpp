#pragma once

// Scenario files, dispatch and result emission. The configuration grammar is
// documented in docs/FORMAT.md.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfdvi/applications.hpp"
#include "sfdvi/coefficient_registry.hpp"
#include "sfdvi/convex_sets.hpp"
#include "sfdvi/sfde_engine.hpp"

namespace sfdvi {

/// Every problem found in a configuration, each prefixed by its key path.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

struct ViSettings {
    std::optional<double> c_bar;  // declared constants; default: analytic ones
    std::optional<double> l_f;
    double rho = 0.0;  // always filled after parsing
    double tol = 1e-10;
    int max_iter = 10000;
};

struct PerturbationSettings {
    std::vector<int> m_list;
    std::vector<int> n_list;
    // lambda_m = 1/m shifts the drift, fractional and field offsets by lambda * these.
    double drift = 0.0;
    double frac = 0.0;
    double field = 0.0;
    std::string set_family = "scaled";  // mu_n = 1/n: (1 + mu) K, or "constant"
};

struct ProjectionSettings {
    std::string family = "nested_box";  // nested_box, nested_ball, dyadic_ball, scaled
    std::size_t dim = 1;
    double hi = 1.0;
    std::vector<int> n_list;
    std::vector<Vec> probes;
};

struct SanitySettings {
    std::string check = "ito";      // ito, doob
    std::string integrand = "one";  // ito only: one, t
};

struct GameSettings {
    QuadraticGame game;
    std::vector<AgentDynamics> dynamics;
    int deviations = 64;
    double tol = 1e-8;
};

struct ScenarioConfig {
    std::string kind;  // simulate, stability, projection, spep, game, sanity
    TimeGrid grid;
    int l = 1;
    JumpMeasure jumps;
    std::uint64_t seed = 1;
    ViSettings vi;
    std::optional<ConvexSet> set;
    std::size_t p = 1;
    Vec x0;
    NamedRef coefficients{"zero", {}};
    NamedRef field{"affine_field", {1.0}};
    PerturbationSettings perturbation;
    int paths = 1;
    std::string out_csv;
    std::string out_json;
    ProjectionSettings projection;
    SpatialMarketSpec spep;
    double spep_tol = 1e-8;
    GameSettings game;
    SanitySettings sanity;
    /// Effective configuration (defaults filled, overrides applied) as
    /// canonical JSON; echoed into result metadata.
    std::string canonical;

    std::size_t q() const { return set ? set->dim() : 0; }
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> paths;
};

/// Parses and validates a JSON scenario. Throws ConfigError listing every
/// violation found.
ScenarioConfig parse_scenario(const std::string& text, const Overrides& overrides = {});

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::map<std::string, std::string> metadata;
};

/// Raised for numeric failures while running a scenario (VI non-convergence,
/// non-finite state); the message carries the scenario context.
class ScenarioFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// `threads` <= 0 uses the hardware concurrency; the table does not depend on it.
ResultTable run_scenario(const ScenarioConfig& config, int threads = 1);

/// Shortest text that parses back to the same double ("inf", "-inf", "nan"
/// for non-finite values).
std::string format_double(double v);

/// CSV with one header row and a JSON sidecar holding the metadata. Either
/// path may be empty to skip that file. Throws std::runtime_error naming the
/// path on I/O failure.
void write_results(const ResultTable& table, const std::string& csv_path, const std::string& json_path);

/// CSV text exactly as write_results produces it.
std::string to_csv(const ResultTable& table);

/// Reads a CSV written by write_results (metadata is not restored).
ResultTable read_csv(const std::string& path);

/// FNV-1a 64-bit hash as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace sfdvi
