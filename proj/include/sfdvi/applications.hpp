#pragma once

// The two worked models reduced to systems the engine can integrate:
//
//  * stochastic spatial price equilibrium: supply prices p (m markets) and
//    demand prices q (n markets) follow jump-diffusions with a fractional
//    term; shipments a_ij solve the equilibrium VI pointwise in time;
//  * a P-agent differential game whose Nash equilibria are the solutions of
//    the VI with the stacked gradients F = (grad_{u^1} theta^1, ...).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfdvi/convex_sets.hpp"
#include "sfdvi/sfde_engine.hpp"
#include "sfdvi/svi_solver.hpp"

namespace sfdvi {

struct CoupledSystem {
    CoefficientSet coeffs;
    VIProblem vi;
    TimeGrid grid;
    Vec p0;
    JumpMeasure jumps;
};

// ---------------------------------------------------------------------------
// Spatial price equilibrium

/// Mean-reverting price dynamics for one side of the market:
///   d price_k = (kappa (level - price_k) + sign * eta * volume_k) dt
///             + frac (dt)^alpha + vol dB_k + jump * y_k Ntilde(dt, dy)
/// with sign = +1 for supply (volume = S_i) and -1 for demand (volume = D_j).
struct PriceDynamics {
    double kappa = 0.0;
    double level = 0.0;
    double eta = 0.0;
    double frac = 0.0;
    double vol = 0.0;
    double jump = 0.0;
};

struct SpatialMarketSpec {
    std::size_t m = 1;
    std::size_t n = 1;
    Vec gamma;  // m x n slopes of c_ij(a) = gamma_ij a + c0_ij, gamma_ij > 0
    Vec c0;     // m x n, c0_ij >= 0
    Vec p0;     // initial supply prices (m)
    Vec q0;     // initial demand prices (n)
    PriceDynamics supply;
    PriceDynamics demand;
    JumpMeasure jumps;  // marks in R^{m+n}
    TimeGrid grid;
    /// Reduced: control a in R^{mn}_+. Full: control (S, D, a) in the transport set.
    bool reduced = true;

    void validate() const;
    double cost(std::size_t i, std::size_t j, double a) const { return gamma[i * n + j] * a + c0[i * n + j]; }
};

CoupledSystem build_spep(const SpatialMarketSpec& spec);

/// Flows a_ij read from a control vector in either formulation.
Vec spep_flows(const SpatialMarketSpec& spec, std::span<const double> u);

struct SpepViolation {
    double amount = 0.0;  // how far the condition fails beyond eps_k (0 if it holds)
    int step = -1;
    int i = -1;
    int j = -1;
};

struct SpepReport {
    SpepViolation worst_equality;    // |p_i + c_ij(a_ij) - q_j| where a_ij > tol
    SpepViolation worst_inequality;  // q_j - p_i - c_ij(a_ij)
    std::vector<double> step_worst;  // per step: largest excess over eps_k (0 = satisfied)
    std::size_t violations = 0;
    bool ok() const { return violations == 0; }
};

/// Two-branch equilibrium conditions at every step, with slack
/// eps_k = tol + gamma_max c/(1-c) r_k from the solver's residual r_k.
SpepReport check_spep_equilibrium(const PathSolution& sol, const SpatialMarketSpec& spec, double tol,
                                  double rho = 0.0);

// ---------------------------------------------------------------------------
// Multi-agent game

/// Per-agent scalar state dynamics
///   dx^i = (drift_x x^i + drift_u ubar^i) dt + frac (dt)^alpha + vol dB^i + jump y^i Ntilde
/// where ubar^i is the mean of agent i's strategy components.
struct AgentDynamics {
    double drift_x = 0.0;
    double drift_u = 0.0;
    double frac = 0.0;
    double vol = 0.0;
    double jump = 0.0;
};

/// grad_{u^i} theta^i(x, u) written into `out` (size dim K^i).
using AgentGradient = std::function<void(std::size_t agent, std::span<const double> x, std::span<const double> u,
                                         std::span<double> out)>;

struct GameSpec {
    std::vector<ConvexSet> strategy_sets;  // K^i
    AgentGradient gradient;
    double c_bar = 0.0;  // declared monotonicity modulus of the stacked gradient
    double l_f = 0.0;
    std::vector<AgentDynamics> dynamics;  // one per agent; empty = frozen states
    Vec p0;                               // one scalar state per agent
    JumpMeasure jumps;                    // marks in R^P
    TimeGrid grid;

    std::size_t agents() const { return strategy_sets.size(); }
    std::size_t offset(std::size_t agent) const;
    void validate() const;
};

/// Quadratic costs with scalar strategies on K^i = [box_lo_i, box_hi_i] and
///   grad_{u^i} theta^i = w_i (u^i - target_i) + sum_j coupling_ij u^j - s_i x^i.
/// c_bar is the smallest eigenvalue of the symmetric part of
/// A = diag(w) + coupling, l_f = max(|A|_2, max_i |s_i|).
struct QuadraticGame {
    Vec target;
    Vec weight;
    std::vector<std::pair<double, double>> box;
    std::vector<Vec> coupling;  // P x P, may be empty (no coupling)
    Vec state_coupling;         // s_i, may be empty
};

GameSpec quadratic_game(const QuadraticGame& g, std::vector<AgentDynamics> dynamics = {}, Vec p0 = {},
                        JumpMeasure jumps = {}, TimeGrid grid = {});

/// Thrown by build_game when sampled pairs violate the declared monotonicity.
class MonotonicityError : public std::invalid_argument {
public:
    MonotonicityError(const std::string& what, Vec u1, Vec u2)
        : std::invalid_argument(what), u1_(std::move(u1)), u2_(std::move(u2)) {}
    const Vec& u1() const { return u1_; }
    const Vec& u2() const { return u2_; }

private:
    Vec u1_, u2_;
};

CoupledSystem build_game(const GameSpec& spec, int screen_pairs = 2000, std::uint64_t seed = 7);

/// grad_{u^i} theta^i evaluated directly (no stacking).
Vec agent_gradient(const GameSpec& spec, std::size_t agent, std::span<const double> x, std::span<const double> u);

struct NashReport {
    Vec worst;               // per agent: min over steps and deviations of <grad_i, v - u^i>
    std::vector<int> step;   // per agent: step attaining it
    bool certified = false;  // all worst >= -tol
};

/// First-order Nash certificate: samples `deviations` points of each K^i (box
/// endpoints are always included) at every step.
NashReport verify_nash(const PathSolution& sol, const GameSpec& spec, int deviations, double tol,
                       std::uint64_t seed = 11);

// ---------------------------------------------------------------------------
// Complementarity form on cones

struct ComplementarityResult {
    double primal_res = 0.0;  // dist(u, K)
    double dual_res = 0.0;    // max over unit generators g of (-<g, F>)_+
    double orth_res = 0.0;    // |<u, F>|
    bool ok(double tol) const { return primal_res <= tol && dual_res <= tol && orth_res <= tol; }
};

/// Throws std::invalid_argument when `cone` is not a cone of the catalog.
ComplementarityResult complementarity_check(std::span<const double> u, std::span<const double> f, const ConvexSet& cone);

/// Unit extreme rays of a catalog cone.
std::vector<Vec> cone_generators(const ConvexSet& cone);

}  // namespace sfdvi
