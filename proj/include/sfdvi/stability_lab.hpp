#pragma once

// Multi-parameter perturbation harness. Systems MPS(lambda_m, mu_n) are
// integrated against the limit system MPS(lambda, mu) on identical noise
// (common random numbers), and their differences measured in the discrete
// H[0,T] norm (E int_0^T |.|^2 dt)^{1/2}.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfdvi/convex_sets.hpp"
#include "sfdvi/sfde_engine.hpp"
#include "sfdvi/svi_solver.hpp"

namespace sfdvi {

/// Coefficients and VI field at one parameter point lambda.
struct ParametrizedSystem {
    CoefficientSet coeffs;
    FieldFn field;
    double c_bar = 1.0;
    double l_f = 1.0;
};

struct PerturbationFamily {
    std::function<ParametrizedSystem(const Vec& lambda)> lambda_to_system;
    std::function<ConvexSet(const Vec& mu)> mu_to_set;
    Vec lambda_limit;
    Vec mu_limit;
    std::function<Vec(int m)> lambda_seq;
    std::function<Vec(int n)> mu_seq;
    JumpMeasure jumps;
    Vec p0;
    std::string name;
};

/// The set part of a perturbation family as a SetFamily.
SetFamily set_family(const PerturbationFamily& family);

/// Index standing for the limit parameter in (m, n) tables.
inline constexpr int kLimitIndex = std::numeric_limits<int>::max();

struct BoundConstants {
    double M_bar = 0.0;
    double N_bar = 0.0;
    double M_hat = 0.0;
    double N_hat = 0.0;
    double Z_bar = 0.0;
    double B0 = 0.0;
};

struct HNormDiff {
    double err_x = 0.0;
    double err_u = 0.0;
};

/// ((1/P) sum_paths sum_{k<N} |a_k - b_k|^2 dt)^{1/2} for states and controls.
HNormDiff h_norm_diff(std::span<const PathSolution> a, std::span<const PathSolution> b, const TimeGrid& grid);

/// Closed-form bound constants of the stability estimate. Throws
/// std::invalid_argument for rho outside (0, 2 c_bar / l_f^2) or alpha
/// outside (1/2, 1).
BoundConstants theory_constants(double c_bar, double l_f, double rho, double alpha, double T, double L_b,
                                double L_sigma, double L_sigma1, double L_G);

struct StabilityCell {
    int m = kLimitIndex;
    int n = kLimitIndex;
    double err_x = 0.0;
    double err_u = 0.0;
    double mc_stderr = 0.0;
};

struct StabilityReport {
    std::vector<StabilityCell> cells;  // m-major over (m_list + limit) x (n_list + limit)
    int paths = 0;
    std::uint64_t seed = 0;
    TimeGrid grid;
    double rho = 0.0;
    BoundConstants constants;

    const StabilityCell& at(int m, int n) const;
};

/// Failure while integrating cell (m, n) on a given path.
class StabilityAbort : public NumericError {
public:
    StabilityAbort(const std::string& what, int m, int n, int path, int step)
        : NumericError(what, std::numeric_limits<double>::quiet_NaN()), m_(m), n_(n), path_(path), step_(step) {}
    int m() const noexcept { return m_; }
    int n() const noexcept { return n_; }
    int path() const noexcept { return path_; }
    int step() const noexcept { return step_; }

private:
    int m_, n_, path_, step_;
};

/// `threads` <= 0 uses the hardware concurrency. Results do not depend on it.
StabilityReport run_stability(const PerturbationFamily& family, std::span<const int> m_list,
                              std::span<const int> n_list, const TimeGrid& grid, int paths, std::uint64_t seed,
                              const SolverConfig& cfg, int threads = 1);

/// n -> mosco_probe(K_{mu_n}, probes) for each n.
std::vector<std::pair<int, double>> projection_convergence_report(const PerturbationFamily& family,
                                                                  std::span<const int> n_list,
                                                                  std::span<const Vec> probes);

}  // namespace sfdvi
