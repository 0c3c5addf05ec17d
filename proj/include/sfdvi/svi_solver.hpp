#pragma once

// Pointwise variational inequality VI(K, F(t, x, .)): find u in K with
// <F(t, x, u), v - u> >= 0 for all v in K, solved by iterating the projection
// map u <- P_K(u - rho F(t, x, u)). For F strongly monotone in u with modulus
// c_bar (in the squared form <F(u1)-F(u2), u1-u2> >= c_bar |u1-u2|^2) and
// Lipschitz with constant l_f, the map contracts with factor
// sqrt(1 - 2 rho c_bar + rho^2 l_f^2) whenever 0 < rho < 2 c_bar / l_f^2.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sfdvi/convex_sets.hpp"

namespace sfdvi {

/// F(t, x, u) written into `out` (size q).
using FieldFn = std::function<void(double t, std::span<const double> x, std::span<const double> u, std::span<double> out)>;

struct VIProblem {
    ConvexSet set;
    FieldFn field;
    double c_bar = 1.0;
    double l_f = 1.0;

    /// Throws std::invalid_argument unless 0 < c_bar <= l_f and the field is set.
    void validate() const;
    Vec eval(double t, std::span<const double> x, std::span<const double> u) const;
};

struct SolverConfig {
    double rho = 0.0;  // 0 selects optimal_rho
    double tol = 1e-10;
    int max_iter = 10000;
    std::optional<Vec> u_init;  // default: projection of the origin
    DykstraOptions projection{};
};

double contraction_factor(double rho, double c_bar, double l_f);
double optimal_rho(double c_bar, double l_f);

/// Open interval (0, 2 c_bar / l_f^2).
bool rho_admissible(double rho, double c_bar, double l_f);

struct ViSolution {
    Vec u;
    int iters = 0;
    double final_residual = 0.0;  // last successive-iterate distance
};

/// Per-iteration record of |u_{k+1} - u_k|, for contraction bookkeeping.
struct ViTrace {
    std::vector<double> step_norms;
};

/// Throws NumericError when the budget runs out above tolerance or F is
/// non-finite, std::invalid_argument for an inadmissible rho.
/// `warm_start`, when given, overrides cfg.u_init.
ViSolution solve_vi(const VIProblem& problem, const SolverConfig& cfg, double t, std::span<const double> x,
                    std::optional<std::span<const double>> warm_start = std::nullopt, ViTrace* trace = nullptr);

/// Natural-map residual |u - P_K(u - rho F(t, x, u))|.
double vi_residual(const VIProblem& problem, std::span<const double> u, double rho, double t,
                   std::span<const double> x, const DykstraOptions& opts = {});

struct ConstantEstimate {
    double c_bar_hat = 0.0;
    double l_f_hat = 0.0;
};

/// Empirical monotonicity and Lipschitz ratios over random pairs in `domain`.
/// Sampling overestimates c_bar and underestimates l_f; diagnostics only.
ConstantEstimate estimate_constants(const FieldFn& field, const ConvexSet& domain, std::span<const Vec> x_samples,
                                    int n_pairs, std::uint64_t seed, double t = 0.0);

/// Random point of `set` (exactly feasible). Bounded boxes and balls are
/// sampled uniformly, flows of transport sets uniformly in [0, min(cap, scale)],
/// anything else as the projection of a Gaussian draw of the given scale.
Vec sample_point(const ConvexSet& set, std::mt19937_64& rng, double scale = 2.0);

}  // namespace sfdvi
