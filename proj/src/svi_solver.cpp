#include "sfdvi/svi_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "sfdvi/kernels.hpp"

namespace sfdvi {

void VIProblem::validate() const {
    if (!field) throw std::invalid_argument("VIProblem: field is not set");
    if (!(c_bar > 0.0) || !(l_f > 0.0) || !std::isfinite(c_bar) || !std::isfinite(l_f))
        throw std::invalid_argument("VIProblem: c_bar and l_f must be positive and finite");
    if (c_bar > l_f) throw std::invalid_argument("VIProblem: require c_bar <= l_f");
}

Vec VIProblem::eval(double t, std::span<const double> x, std::span<const double> u) const {
    Vec out(set.dim(), 0.0);
    field(t, x, u, out);
    return out;
}

double contraction_factor(double rho, double c_bar, double l_f) {
    const double radicand = 1.0 - 2.0 * rho * c_bar + rho * rho * l_f * l_f;
    if (radicand < 0.0) {
        // Rounding can push an exact zero slightly negative when c_bar == l_f.
        if (radicand > -1e-14) return 0.0;
        throw std::invalid_argument("contraction_factor: negative radicand " + std::to_string(radicand) +
                                    " (inconsistent constants, need c_bar <= l_f)");
    }
    return std::sqrt(radicand);
}

double optimal_rho(double c_bar, double l_f) {
    if (!(c_bar > 0.0) || !(l_f > 0.0)) throw std::invalid_argument("optimal_rho: constants must be positive");
    if (c_bar > l_f) throw std::invalid_argument("optimal_rho: require c_bar <= l_f");
    return c_bar / (l_f * l_f);
}

bool rho_admissible(double rho, double c_bar, double l_f) {
    return rho > 0.0 && rho < 2.0 * c_bar / (l_f * l_f);
}

ViSolution solve_vi(const VIProblem& problem, const SolverConfig& cfg, double t, std::span<const double> x,
                    std::optional<std::span<const double>> warm_start, ViTrace* trace) {
    problem.validate();
    const double rho = cfg.rho == 0.0 ? optimal_rho(problem.c_bar, problem.l_f) : cfg.rho;
    if (!rho_admissible(rho, problem.c_bar, problem.l_f))
        throw std::invalid_argument("solve_vi: rho " + std::to_string(rho) + " outside (0, 2 c_bar / l_f^2)");
    const std::size_t q = problem.set.dim();

    Vec u;
    if (warm_start) {
        require_dim("solve_vi: warm start", q, warm_start->size());
        u = project(problem.set, *warm_start, cfg.projection);
    } else if (cfg.u_init) {
        require_dim("solve_vi: u_init", q, cfg.u_init->size());
        u = project(problem.set, *cfg.u_init, cfg.projection);
    } else {
        u = project(problem.set, Vec(q, 0.0), cfg.projection);
    }

    Vec f(q), y(q);
    double step = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.max_iter; ++k) {
        std::fill(f.begin(), f.end(), 0.0);
        problem.field(t, x, u, f);
        for (std::size_t i = 0; i < q; ++i) {
            if (!std::isfinite(f[i])) throw NumericError("solve_vi: non-finite field value", step, k);
            y[i] = u[i] - rho * f[i];
        }
        Vec next = project(problem.set, y, cfg.projection);
        step = std::sqrt(kernels::sum_sq_diff(next, u));
        if (trace) trace->step_norms.push_back(step);
        u = std::move(next);
        // `iters` counts the moves made before the map stopped moving u.
        if (step <= cfg.tol) return ViSolution{std::move(u), k, step};
    }
    throw NumericError("solve_vi: iteration budget " + std::to_string(cfg.max_iter) +
                           " exhausted with successive-iterate distance " + std::to_string(step),
                       step, cfg.max_iter);
}

double vi_residual(const VIProblem& problem, std::span<const double> u, double rho, double t,
                   std::span<const double> x, const DykstraOptions& opts) {
    const std::size_t q = problem.set.dim();
    require_dim("vi_residual", q, u.size());
    Vec f(q, 0.0), y(q);
    problem.field(t, x, u, f);
    for (std::size_t i = 0; i < q; ++i) y[i] = u[i] - rho * f[i];
    const Vec p = project(problem.set, y, opts);
    return std::sqrt(kernels::sum_sq_diff(u, p));
}

Vec sample_point(const ConvexSet& set, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto& d = set.descriptor();
    if (const auto* b = std::get_if<Box>(&d)) {
        Vec v(set.dim());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double lo = std::isfinite(b->lo[i]) ? b->lo[i] : (std::isfinite(b->hi[i]) ? b->hi[i] - scale : -scale);
            const double hi = std::isfinite(b->hi[i]) ? b->hi[i] : lo + 2.0 * scale;
            v[i] = lo + (hi - lo) * unif(rng);
        }
        return v;
    }
    if (const auto* b = std::get_if<Ball>(&d)) {
        const std::size_t q = set.dim();
        Vec dir(q);
        double nrm = 0.0;
        while (nrm == 0.0) {
            for (auto& c : dir) c = gauss(rng);
            nrm = std::sqrt(kernels::dot(dir, dir));
        }
        const double r = b->radius * std::pow(unif(rng), 1.0 / static_cast<double>(q));
        for (std::size_t i = 0; i < q; ++i) dir[i] = b->center[i] + r * dir[i] / nrm;
        return dir;
    }
    if (const auto* ts = std::get_if<TransportSet>(&d)) {
        Vec v(set.dim(), 0.0);
        const double hi = std::min(ts->cap, scale);
        for (std::size_t i = 0; i < ts->m; ++i) {
            for (std::size_t j = 0; j < ts->n; ++j) {
                const double c = hi * unif(rng);
                v[ts->flow_offset() + i * ts->n + j] = c;
                v[i] += c;
                v[ts->m + j] += c;
            }
        }
        return v;
    }
    if (const auto* p = std::get_if<Product>(&d)) {
        Vec v;
        v.reserve(set.dim());
        for (const auto& f : p->factors) {
            const Vec part = sample_point(f, rng, scale);
            v.insert(v.end(), part.begin(), part.end());
        }
        return v;
    }
    Vec v(set.dim());
    if (const auto* h = std::get_if<HalfspaceIntersection>(&d)) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = h->interior[i] + scale * gauss(rng);
    } else {
        for (auto& c : v) c = scale * gauss(rng);
    }
    return project(set, v);
}

ConstantEstimate estimate_constants(const FieldFn& field, const ConvexSet& domain, std::span<const Vec> x_samples,
                                    int n_pairs, std::uint64_t seed, double t) {
    if (n_pairs < 1) throw std::invalid_argument("estimate_constants: n_pairs must be >= 1");
    std::mt19937_64 rng(seed);
    const Vec empty;
    auto pick_x = [&]() -> const Vec& {
        if (x_samples.empty()) return empty;
        std::uniform_int_distribution<std::size_t> idx(0, x_samples.size() - 1);
        return x_samples[idx(rng)];
    };
    const std::size_t q = domain.dim();
    Vec f1(q), f2(q);
    ConstantEstimate est{std::numeric_limits<double>::infinity(), 0.0};
    for (int k = 0; k < n_pairs; ++k) {
        Vec u1 = sample_point(domain, rng), u2 = sample_point(domain, rng);
        double du2 = kernels::sum_sq_diff(u1, u2);
        for (int retry = 0; du2 == 0.0 && retry < 100; ++retry) {
            u2 = sample_point(domain, rng);
            du2 = kernels::sum_sq_diff(u1, u2);
        }
        if (du2 == 0.0) throw std::invalid_argument("estimate_constants: domain appears to be a single point");

        const Vec& x = pick_x();
        std::fill(f1.begin(), f1.end(), 0.0);
        std::fill(f2.begin(), f2.end(), 0.0);
        field(t, x, u1, f1);
        field(t, x, u2, f2);
        double inner = 0.0;
        for (std::size_t i = 0; i < q; ++i) inner += (f1[i] - f2[i]) * (u1[i] - u2[i]);
        est.c_bar_hat = std::min(est.c_bar_hat, inner / du2);

        const Vec& x1 = pick_x();
        const Vec& x2 = pick_x();
        std::fill(f1.begin(), f1.end(), 0.0);
        std::fill(f2.begin(), f2.end(), 0.0);
        field(t, x1, u1, f1);
        field(t, x2, u2, f2);
        const double num = std::sqrt(kernels::sum_sq_diff(f1, f2));
        const double den = std::sqrt(kernels::sum_sq_diff(x1, x2)) + std::sqrt(du2);
        est.l_f_hat = std::max(est.l_f_hat, num / den);
    }
    return est;
}

}  // namespace sfdvi
