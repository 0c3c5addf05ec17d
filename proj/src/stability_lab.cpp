#include "sfdvi/stability_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "sfdvi/kernels.hpp"

namespace sfdvi {

SetFamily set_family(const PerturbationFamily& family) {
    return SetFamily{family.mu_to_set, family.mu_to_set(family.mu_limit), family.mu_seq, family.name};
}

HNormDiff h_norm_diff(std::span<const PathSolution> a, std::span<const PathSolution> b, const TimeGrid& grid) {
    if (a.size() != b.size()) throw std::invalid_argument("h_norm_diff: path counts differ");
    if (a.empty()) throw std::invalid_argument("h_norm_diff: no paths");
    const double dt = grid.dt();
    double sx = 0.0, su = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& pa = a[i];
        const auto& pb = b[i];
        if (pa.N != grid.N || pb.N != grid.N) throw std::invalid_argument("h_norm_diff: path does not match the grid");
        require_dim("h_norm_diff: state dimension", pa.p, pb.p);
        require_dim("h_norm_diff: control dimension", pa.q, pb.q);
        // Left-point rule over k < N, consistent with the time stepping.
        const std::size_t nx = static_cast<std::size_t>(grid.N) * pa.p;
        const std::size_t nu = static_cast<std::size_t>(grid.N) * pa.q;
        sx += kernels::sum_sq_diff({pa.x.data(), nx}, {pb.x.data(), nx}) * dt;
        su += kernels::sum_sq_diff({pa.u.data(), nu}, {pb.u.data(), nu}) * dt;
    }
    const double P = static_cast<double>(a.size());
    return HNormDiff{std::sqrt(sx / P), std::sqrt(su / P)};
}

BoundConstants theory_constants(double c_bar, double l_f, double rho, double alpha, double T, double L_b,
                                double L_sigma, double L_sigma1, double L_G) {
    if (!(c_bar > 0.0) || !(l_f > 0.0)) throw std::invalid_argument("theory_constants: c_bar and l_f must be positive");
    if (!rho_admissible(rho, c_bar, l_f))
        throw std::invalid_argument("theory_constants: rho outside the open interval (0, 2 c_bar / l_f^2)");
    if (!(alpha > 0.5 && alpha < 1.0)) throw std::invalid_argument("theory_constants: alpha must lie in (0.5, 1)");
    if (!(T > 0.0)) throw std::invalid_argument("theory_constants: T must be positive");

    const double gap = 1.0 - contraction_factor(rho, c_bar, l_f);
    const double den = gap * gap;
    const double frac = alpha * alpha * std::pow(T, 2.0 * alpha - 1.0) / (2.0 * alpha - 1.0);

    BoundConstants bc;
    bc.M_bar = 2.0 * rho * rho * l_f * l_f / den;
    bc.N_bar = 2.0 * rho * rho / den;
    bc.M_hat = bc.M_bar;
    bc.N_hat = 2.0 / den;
    bc.Z_bar = 4.0 * T * L_b + 16.0 * L_sigma + 16.0 * L_G + 4.0 * frac * L_sigma1;
    bc.B0 = (8.0 * T * L_b + 32.0 * L_sigma + 32.0 * L_G + 8.0 * frac * L_sigma1) * (1.0 + bc.M_bar);
    return bc;
}

const StabilityCell& StabilityReport::at(int m, int n) const {
    for (const auto& c : cells)
        if (c.m == m && c.n == n) return c;
    throw std::out_of_range("StabilityReport: no cell (" + std::to_string(m) + ", " + std::to_string(n) + ")");
}

namespace {

struct CellSystem {
    int m;
    int n;
    const ParametrizedSystem* sys;
    VIProblem vi;
};

struct PathSample {
    double sx = 0.0;
    double su = 0.0;
};

void validate_index_list(std::span<const int> list, const char* what) {
    if (list.empty()) throw std::invalid_argument(std::string("run_stability: empty ") + what);
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i] < 1) throw std::invalid_argument(std::string("run_stability: ") + what + " entries must be >= 1");
        if (i > 0 && list[i] <= list[i - 1])
            throw std::invalid_argument(std::string("run_stability: ") + what + " must be strictly ascending");
    }
}

}  // namespace

StabilityReport run_stability(const PerturbationFamily& family, std::span<const int> m_list,
                              std::span<const int> n_list, const TimeGrid& grid, int paths, std::uint64_t seed,
                              const SolverConfig& cfg, int threads) {
    grid.validate();
    validate_index_list(m_list, "m_list");
    validate_index_list(n_list, "n_list");
    if (paths < 1) throw std::invalid_argument("run_stability: paths must be >= 1");

    std::vector<int> ms(m_list.begin(), m_list.end());
    std::vector<int> ns(n_list.begin(), n_list.end());
    ms.push_back(kLimitIndex);
    ns.push_back(kLimitIndex);

    // All parameter points are materialized up front and shared read-only.
    std::vector<ParametrizedSystem> systems;
    for (int m : ms) systems.push_back(family.lambda_to_system(m == kLimitIndex ? family.lambda_limit : family.lambda_seq(m)));
    std::vector<ConvexSet> sets;
    for (int n : ns) sets.push_back(family.mu_to_set(n == kLimitIndex ? family.mu_limit : family.mu_seq(n)));

    const ParametrizedSystem& limit_sys = systems.back();
    const std::size_t p = limit_sys.coeffs.p;
    const std::size_t l = limit_sys.coeffs.l;
    for (const auto& s : systems) {
        if (s.coeffs.p != p || s.coeffs.q != limit_sys.coeffs.q || s.coeffs.l != l)
            throw std::invalid_argument("run_stability: parameter points disagree on (p, q, l)");
    }

    std::vector<CellSystem> cells;
    for (std::size_t i = 0; i < ms.size(); ++i)
        for (std::size_t j = 0; j < ns.size(); ++j)
            cells.push_back(CellSystem{ms[i], ns[j], &systems[i], VIProblem{sets[j], systems[i].field, systems[i].c_bar, systems[i].l_f}});
    const VIProblem& limit_vi = cells.back().vi;

    const std::size_t ncell = cells.size();
    std::vector<PathSample> samples(static_cast<std::size_t>(paths) * ncell);

    std::atomic<int> next{0};
    std::mutex err_mutex;
    int err_path = paths;
    std::exception_ptr err;

    auto worker = [&]() {
        for (;;) {
            const int path = next.fetch_add(1);
            if (path >= paths) return;
            int m = kLimitIndex, n = kLimitIndex;
            try {
                const NoiseBundle noise = gen_noise(grid, static_cast<int>(l), family.jumps,
                                                    derive_seed(seed, static_cast<std::uint64_t>(path)));
                const PathSolution ref = integrate_path(limit_sys.coeffs, limit_vi, cfg, grid, noise, family.p0);
                for (std::size_t c = 0; c < ncell; ++c) {
                    m = cells[c].m;
                    n = cells[c].n;
                    const PathSolution sol = integrate_path(cells[c].sys->coeffs, cells[c].vi, cfg, grid, noise, family.p0);
                    const HNormDiff d = h_norm_diff(std::span(&sol, 1), std::span(&ref, 1), grid);
                    samples[static_cast<std::size_t>(path) * ncell + c] = PathSample{d.err_x * d.err_x, d.err_u * d.err_u};
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                // Keep the lowest failing path so the reported error does not depend on scheduling.
                if (path < err_path) {
                    err_path = path;
                    const auto* pa = dynamic_cast<const PathAbort*>(&e);
                    const auto idx = [](int v) { return v == kLimitIndex ? std::string("inf") : std::to_string(v); };
                    err = std::make_exception_ptr(StabilityAbort(
                        "run_stability: cell (" + idx(m) + ", " + idx(n) + ") path " + std::to_string(path) + ": " +
                            e.what(),
                        m, n, path, pa ? pa->step() : -1));
                }
                return;
            }
        }
    };

    int nthreads = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    nthreads = std::min(nthreads, paths);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (err) std::rethrow_exception(err);

    StabilityReport report;
    report.paths = paths;
    report.seed = seed;
    report.grid = grid;
    report.rho = cfg.rho == 0.0 ? optimal_rho(limit_sys.c_bar, limit_sys.l_f) : cfg.rho;
    const auto& k = limit_sys.coeffs.constants;
    report.constants = theory_constants(limit_sys.c_bar, limit_sys.l_f, report.rho, grid.alpha, grid.T, k.L_b, k.L_sigma,
                                        k.L_sigma1, k.L_G);

    const double P = paths;
    for (std::size_t c = 0; c < ncell; ++c) {
        // Sequential reduction in path order: identical for any thread count.
        double mx = 0.0, mu = 0.0, qx = 0.0, qu = 0.0;
        for (int path = 0; path < paths; ++path) {
            const PathSample& s = samples[static_cast<std::size_t>(path) * ncell + c];
            mx += s.sx;
            mu += s.su;
            qx += s.sx * s.sx;
            qu += s.su * s.su;
        }
        mx /= P;
        mu /= P;
        // Delta-method standard error of sqrt(mean) from per-path squared errors.
        auto se = [&](double mean, double sq) {
            if (paths < 2 || mean <= 0.0) return 0.0;
            const double var = std::max(0.0, (sq - P * mean * mean) / (P - 1.0));
            return std::sqrt(var / P) / (2.0 * std::sqrt(mean));
        };
        report.cells.push_back(
            StabilityCell{cells[c].m, cells[c].n, std::sqrt(mx), std::sqrt(mu), std::max(se(mx, qx), se(mu, qu))});
    }
    return report;
}

std::vector<std::pair<int, double>> projection_convergence_report(const PerturbationFamily& family,
                                                                  std::span<const int> n_list,
                                                                  std::span<const Vec> probes) {
    if (probes.empty()) throw std::invalid_argument("projection_convergence_report: empty probe list");
    const SetFamily sf = set_family(family);
    std::vector<std::pair<int, double>> out;
    for (int n : n_list) out.emplace_back(n, mosco_probe(sf, n, probes));
    return out;
}

}  // namespace sfdvi
