#include "sfdvi/sfde_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "sfdvi/kernels.hpp"

namespace sfdvi {

void TimeGrid::validate() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("TimeGrid: T must be positive and finite");
    if (N < 1) throw std::invalid_argument("TimeGrid: N must be >= 1");
    if (!(alpha > 0.5 && alpha < 1.0)) throw std::invalid_argument("TimeGrid: alpha must lie in (0.5, 1)");
}

void JumpMeasure::validate(std::size_t p) const {
    if (!(c >= 0.0)) throw std::invalid_argument("JumpMeasure: c must be >= 0");
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const auto& a = atoms[i];
        require_dim("JumpMeasure: atom mark", p, a.mark.size());
        if (!(a.weight > 0.0) || !std::isfinite(a.weight))
            throw std::invalid_argument("JumpMeasure: atom " + std::to_string(i) + " weight must be positive and finite");
        const double size = std::sqrt(kernels::dot(a.mark, a.mark));
        if (!(size < c))
            throw std::invalid_argument("JumpMeasure: atom " + std::to_string(i) + " has |y| >= c");
    }
}

double JumpMeasure::intensity() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.weight;
    return s;
}

NoiseBundle NoiseBundle::truncated(int n) const {
    NoiseBundle out = *this;
    for (std::size_t i = static_cast<std::size_t>(std::max(n, 0)) * l; i < out.brownian.size(); ++i) out.brownian[i] = 0.0;
    std::erase_if(out.jumps, [n](const JumpEvent& e) { return e.step >= n; });
    return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Vec frac_weights(const TimeGrid& grid, int n) {
    grid.validate();
    if (n < 1 || n > grid.N) throw std::out_of_range("frac_weights: n must lie in [1, N]");
    const double dt = grid.dt();
    Vec w(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        w[k] = std::pow((n - k) * dt, grid.alpha) - std::pow((n - k - 1) * dt, grid.alpha);
    }
    return w;
}

NoiseBundle gen_noise(const TimeGrid& grid, int l, const JumpMeasure& jm, std::uint64_t seed) {
    grid.validate();
    if (l < 0) throw std::invalid_argument("gen_noise: l must be >= 0");
    NoiseBundle nb;
    nb.N = grid.N;
    nb.l = l;
    nb.measure = jm;
    nb.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sdt = std::sqrt(grid.dt());
    nb.brownian.resize(static_cast<std::size_t>(grid.N) * l);
    for (auto& b : nb.brownian) b = sdt * gauss(rng);

    const double lambda = jm.intensity();
    if (lambda > 0.0) {
        std::exponential_distribution<double> wait(lambda);
        std::vector<double> weights;
        for (const auto& a : jm.atoms) weights.push_back(a.weight);
        std::discrete_distribution<int> mark(weights.begin(), weights.end());
        double tau = 0.0;
        for (;;) {
            tau += wait(rng);
            if (tau >= grid.T) break;
            const int step = std::min(static_cast<int>(tau / grid.dt()), grid.N - 1);
            nb.jumps.push_back(JumpEvent{step, mark(rng)});
        }
    }
    return nb;
}

void CoefficientSet::validate() const {
    if (p == 0 || q == 0) throw std::invalid_argument("CoefficientSet: p and q must be >= 1");
    const auto& c = constants;
    for (double v : {c.K_b, c.K_sigma, c.K_sigma1, c.K_G, c.L_b, c.L_sigma, c.L_sigma1, c.L_G}) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("CoefficientSet: growth and Lipschitz constants must be positive");
    }
}

Vec compensator_integral(const JumpFn& jump, const JumpMeasure& jm, double t, std::span<const double> x,
                         std::span<const double> u, std::size_t p) {
    Vec total(p, 0.0), g(p);
    if (!jump) return total;
    for (const auto& a : jm.atoms) {
        std::fill(g.begin(), g.end(), 0.0);
        jump(t, x, u, a.mark, g);
        kernels::axpy(a.weight, g, total);
    }
    return total;
}

PathSolution integrate_path(const CoefficientSet& coeffs, const VIProblem& vi, const SolverConfig& cfg,
                            const TimeGrid& grid, const NoiseBundle& noise, std::span<const double> p0) {
    grid.validate();
    coeffs.validate();
    vi.validate();
    const std::size_t p = coeffs.p, q = coeffs.q, l = coeffs.l;
    const int N = grid.N;
    require_dim("integrate_path: VI set vs control dimension", q, vi.set.dim());
    require_dim("integrate_path: initial state", p, p0.size());
    require_dim("integrate_path: noise steps", static_cast<std::size_t>(N), static_cast<std::size_t>(noise.N));
    require_dim("integrate_path: Brownian dimension", l, static_cast<std::size_t>(noise.l));
    noise.measure.validate(p);

    const double dt = grid.dt();
    // rev[i] = d[N - i] with d[j] = (j dt)^alpha - ((j-1) dt)^alpha, so the
    // weights of step n are the contiguous tail rev[N-n .. N).
    Vec rev(static_cast<std::size_t>(N));
    {
        double prev = 0.0;
        for (int j = 1; j <= N; ++j) {
            const double g = std::pow(j * dt, grid.alpha);
            rev[N - j] = g - prev;
            prev = g;
        }
    }

    PathSolution sol;
    sol.p = p;
    sol.q = q;
    sol.N = N;
    sol.seed = noise.seed;
    sol.x.assign(static_cast<std::size_t>(N + 1) * p, 0.0);
    sol.u.assign(static_cast<std::size_t>(N + 1) * q, 0.0);
    sol.vi_iters.assign(static_cast<std::size_t>(N + 1), 0);
    sol.vi_residuals.assign(static_cast<std::size_t>(N + 1), 0.0);

    std::copy(p0.begin(), p0.end(), sol.x_at(0).begin());
    try {
        ViSolution s0 = solve_vi(vi, cfg, 0.0, sol.x_at(0));
        std::copy(s0.u.begin(), s0.u.end(), sol.u_at(0).begin());
        sol.vi_iters[0] = s0.iters;
        sol.vi_residuals[0] = s0.final_residual;
    } catch (const NumericError& e) {
        throw PathAbort(std::string("VI solve failed: ") + e.what(), 0, e.residual());
    }

    std::vector<double> hist(p * static_cast<std::size_t>(N), 0.0);  // sigma1 history, component-major
    Vec acc(p, 0.0), buf(p), sig(p * l);
    std::size_t next_jump = 0;

    for (int k = 0; k < N; ++k) {
        const double tk = grid.t(k);
        const auto xk = sol.x_at(k);
        const auto uk = std::span<const double>(sol.u_at(k));

        if (coeffs.drift) {
            std::fill(buf.begin(), buf.end(), 0.0);
            coeffs.drift(tk, xk, uk, buf);
            kernels::axpy(dt, buf, acc);
        }
        if (coeffs.frac) {
            std::fill(buf.begin(), buf.end(), 0.0);
            coeffs.frac(tk, xk, uk, buf);
            for (std::size_t c = 0; c < p; ++c) hist[c * N + k] = buf[c];
        }
        if (coeffs.diffusion && l > 0) {
            std::fill(sig.begin(), sig.end(), 0.0);
            coeffs.diffusion(tk, xk, uk, sig);
            const auto db = noise.increment(k);
            for (std::size_t c = 0; c < p; ++c) acc[c] += kernels::dot(std::span<const double>(sig).subspan(c * l, l), db);
        }
        if (coeffs.jump) {
            while (next_jump < noise.jumps.size() && noise.jumps[next_jump].step == k) {
                std::fill(buf.begin(), buf.end(), 0.0);
                coeffs.jump(tk, xk, uk, noise.measure.atoms[noise.jumps[next_jump].atom].mark, buf);
                kernels::axpy(1.0, buf, acc);
                ++next_jump;
            }
            const Vec comp = compensator_integral(coeffs.jump, noise.measure, tk, xk, uk, p);
            kernels::axpy(-dt, comp, acc);
        }

        const int n = k + 1;
        auto xn = sol.x_at(n);
        const std::span<const double> weights(rev.data() + (N - n), static_cast<std::size_t>(n));
        for (std::size_t c = 0; c < p; ++c) {
            const double frac = coeffs.frac ? kernels::dot(std::span<const double>(hist).subspan(c * N, n), weights) : 0.0;
            xn[c] = p0[c] + acc[c] + frac;
            if (!std::isfinite(xn[c])) throw PathAbort("non-finite state", n, xn[c]);
        }

        try {
            ViSolution s = solve_vi(vi, cfg, grid.t(n), xn, std::span<const double>(sol.u_at(k)));
            std::copy(s.u.begin(), s.u.end(), sol.u_at(n).begin());
            sol.vi_iters[n] = s.iters;
            sol.vi_residuals[n] = s.final_residual;
        } catch (const NumericError& e) {
            throw PathAbort(std::string("VI solve failed: ") + e.what(), n, e.residual());
        }
    }
    return sol;
}

IsometryCheck ito_isometry_check(const std::function<double(double)>& f, const TimeGrid& grid, int paths,
                                 std::uint64_t seed) {
    if (paths < 100) throw std::invalid_argument("ito_isometry_check: need at least 100 paths");
    grid.validate();
    Vec fv(static_cast<std::size_t>(grid.N));
    double rhs = 0.0;
    for (int k = 0; k < grid.N; ++k) {
        fv[k] = f(grid.t(k));
        rhs += fv[k] * fv[k] * grid.dt();
    }
    double lhs = 0.0;
    for (int i = 0; i < paths; ++i) {
        const NoiseBundle nb = gen_noise(grid, 1, {}, derive_seed(seed, static_cast<std::uint64_t>(i)));
        const double s = kernels::dot(fv, nb.brownian);
        lhs += s * s;
    }
    lhs /= paths;
    IsometryCheck r{lhs, rhs, 0.0};
    if (rhs == 0.0)
        r.rel_err = lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    else
        r.rel_err = std::abs(lhs - rhs) / rhs;
    return r;
}

DoobCheck doob_bound_check(const TimeGrid& grid, int paths, std::uint64_t seed) {
    if (paths < 100) throw std::invalid_argument("doob_bound_check: need at least 100 paths");
    grid.validate();
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < paths; ++i) {
        const NoiseBundle nb = gen_noise(grid, 1, {}, derive_seed(seed, static_cast<std::uint64_t>(i)));
        double b = 0.0, sup = 0.0;
        for (double db : nb.brownian) {
            b += db;
            sup = std::max(sup, b * b);
        }
        sum += sup;
        sum_sq += sup * sup;
    }
    const double mean = sum / paths;
    const double var = std::max(0.0, (sum_sq - paths * mean * mean) / (paths - 1));
    return DoobCheck{mean, 4.0 * grid.T, std::sqrt(var / paths)};
}

}  // namespace sfdvi
