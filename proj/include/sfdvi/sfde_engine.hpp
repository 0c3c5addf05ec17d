#pragma once

// Driving noise and time stepping for the state equation
//
//   x(t) = x0 + int b dt + int sigma1 (ds)^alpha + int sigma dB
//             + int_{|y|<c} G(s, x(s-), u(s-), y) Ntilde(ds, dy)
//
// coupled to the pointwise VI for u(t). The fractional term is the
// Riemann-Liouville form alpha int_0^t (t-s)^{alpha-1} sigma1(s) ds; its
// quadrature integrates the kernel exactly on each subinterval, so constant
// integrands are reproduced to rounding.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sfdvi/errors.hpp"
#include "sfdvi/svi_solver.hpp"

namespace sfdvi {

struct TimeGrid {
    double T = 1.0;
    int N = 1;
    double alpha = 0.75;

    /// Throws std::invalid_argument unless T > 0, N >= 1, alpha in (1/2, 1).
    void validate() const;
    double dt() const { return T / N; }
    double t(int k) const { return T * static_cast<double>(k) / N; }
};

struct JumpAtom {
    Vec mark;
    double weight = 0.0;
};

/// Finite discrete Levy measure on the ball |y| < c.
struct JumpMeasure {
    std::vector<JumpAtom> atoms;
    double c = 0.0;

    void validate(std::size_t p) const;
    double intensity() const;
};

struct JumpEvent {
    int step = 0;  // grid interval [t_step, t_{step+1}) containing the jump time
    int atom = 0;
};

struct NoiseBundle {
    int N = 0;
    int l = 0;
    std::vector<double> brownian;  // N x l row-major, increments with variance dt
    std::vector<JumpEvent> jumps;  // sorted by step
    JumpMeasure measure;
    std::uint64_t seed = 0;

    std::span<const double> increment(int k) const {
        return {brownian.data() + static_cast<std::size_t>(k) * l, static_cast<std::size_t>(l)};
    }

    /// Copy with every Brownian increment and jump at step >= n removed.
    NoiseBundle truncated(int n) const;
};

/// Per-path seed from a base seed and a path index (splitmix64 finalizer), so
/// results do not depend on which worker integrates which path.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Exact subinterval weights w_{n,k} = (t_n - t_k)^alpha - (t_n - t_{k+1})^alpha, k < n.
Vec frac_weights(const TimeGrid& grid, int n);

/// Deterministic in seed: Gaussian increments first, then exponential
/// inter-arrival jump times at rate Lambda with marks drawn proportional to weight.
NoiseBundle gen_noise(const TimeGrid& grid, int l, const JumpMeasure& jm, std::uint64_t seed);

/// (t, x, u) -> R^p (or R^{p x l} row-major for the diffusion).
using CoefficientFn = std::function<void(double t, std::span<const double> x, std::span<const double> u, std::span<double> out)>;
/// (t, x, u, y) -> R^p.
using JumpFn = std::function<void(double t, std::span<const double> x, std::span<const double> u,
                                  std::span<const double> y, std::span<double> out)>;

struct CoefficientConstants {
    double K_b = 1.0, K_sigma = 1.0, K_sigma1 = 1.0, K_G = 1.0;
    double L_b = 1.0, L_sigma = 1.0, L_sigma1 = 1.0, L_G = 1.0;
};

/// Drift b, fractional coefficient sigma1, diffusion sigma and jump
/// amplitude G. An empty function stands for the zero coefficient.
struct CoefficientSet {
    std::size_t p = 1;
    std::size_t q = 1;
    std::size_t l = 1;
    CoefficientFn drift;
    CoefficientFn frac;
    CoefficientFn diffusion;
    JumpFn jump;
    CoefficientConstants constants;

    void validate() const;
};

/// sum_i w_i G(t, x, u, y_i): the compensator integral for a discrete measure.
Vec compensator_integral(const JumpFn& jump, const JumpMeasure& jm, double t, std::span<const double> x,
                         std::span<const double> u, std::size_t p);

struct PathSolution {
    std::size_t p = 0;
    std::size_t q = 0;
    int N = 0;
    std::vector<double> x;  // (N+1) x p
    std::vector<double> u;  // (N+1) x q
    std::vector<int> vi_iters;
    std::vector<double> vi_residuals;  // solver's final successive-iterate distance per step
    std::uint64_t seed = 0;

    std::span<const double> x_at(int k) const { return {x.data() + static_cast<std::size_t>(k) * p, p}; }
    std::span<const double> u_at(int k) const { return {u.data() + static_cast<std::size_t>(k) * q, q}; }
    std::span<double> x_at(int k) { return {x.data() + static_cast<std::size_t>(k) * p, p}; }
    std::span<double> u_at(int k) { return {u.data() + static_cast<std::size_t>(k) * q, q}; }
};

/// Raised when a path cannot be completed; `step` is the grid index.
class PathAbort : public NumericError {
public:
    PathAbort(const std::string& what, int step, double residual)
        : NumericError(what + " at step " + std::to_string(step), residual), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

/// Left-point scheme: coefficients at (t_k, x[k], u[k]) drive x[n] for k < n;
/// u[n] solves the VI at (t_n, x[n]), warm-started from u[n-1].
PathSolution integrate_path(const CoefficientSet& coeffs, const VIProblem& vi, const SolverConfig& cfg,
                            const TimeGrid& grid, const NoiseBundle& noise, std::span<const double> p0);

struct IsometryCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_err = 0.0;
};

/// E (sum_k f(t_k) dB_k)^2 against sum_k f(t_k)^2 dt. rel_err is +inf when
/// rhs = 0 but lhs is not.
IsometryCheck ito_isometry_check(const std::function<double(double)>& f, const TimeGrid& grid, int paths,
                                 std::uint64_t seed);

struct DoobCheck {
    double empirical = 0.0;  // mean of max_k |B(t_k)|^2
    double bound = 0.0;      // 4 E|B(T)|^2 = 4T
    double std_error = 0.0;  // standard error of `empirical`
};

DoobCheck doob_bound_check(const TimeGrid& grid, int paths, std::uint64_t seed);

}  // namespace sfdvi
