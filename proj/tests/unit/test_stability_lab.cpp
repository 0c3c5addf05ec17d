#include <doctest.h>

#include <cmath>
#include <random>

#include "sfdvi/stability_lab.hpp"

using namespace sfdvi;

namespace {

PathSolution constant_path(int N, Vec x, Vec u) {
    PathSolution s;
    s.p = x.size();
    s.q = u.size();
    s.N = N;
    for (int k = 0; k <= N; ++k) {
        s.x.insert(s.x.end(), x.begin(), x.end());
        s.u.insert(s.u.end(), u.begin(), u.end());
    }
    return s;
}

// Scalar family: drift b = lambda[0], VI field F(u) = u - 2 on [0, mu[0]].
// With noise kept (sigma = 0.3) the state paths differ per path while the
// drift shift stays deterministic.
PerturbationFamily scalar_family(bool perturb_drift, bool perturb_set) {
    PerturbationFamily f;
    f.lambda_to_system = [](const Vec& lambda) {
        ParametrizedSystem s;
        s.coeffs.p = 1;
        s.coeffs.q = 1;
        s.coeffs.l = 1;
        const double b = lambda[0];
        s.coeffs.drift = [b](double, std::span<const double>, std::span<const double>, std::span<double> out) {
            out[0] = b;
        };
        s.coeffs.diffusion = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
            out[0] = 0.3;
        };
        s.field = [](double, std::span<const double>, std::span<const double> u, std::span<double> out) {
            out[0] = u[0] - 2.0;
        };
        s.c_bar = 1.0;
        s.l_f = 1.0;
        return s;
    };
    f.mu_to_set = [](const Vec& mu) { return ConvexSet::box({0.0}, {mu[0]}); };
    f.lambda_limit = Vec{0.0};
    f.mu_limit = Vec{1.0};
    f.lambda_seq = [perturb_drift](int m) { return Vec{perturb_drift ? 1.0 / m : 0.0}; };
    f.mu_seq = [perturb_set](int n) { return Vec{perturb_set ? 1.0 + 1.0 / n : 1.0}; };
    f.p0 = Vec{0.0};
    f.name = "scalar";
    return f;
}

}  // namespace

TEST_CASE("H-norm differences") {
    const TimeGrid g{2.0, 8, 0.75};
    const std::vector<PathSolution> a{constant_path(8, {1.0, 2.0}, {0.5})};
    auto r = h_norm_diff(a, a, g);
    CHECK(r.err_x == 0.0);
    CHECK(r.err_u == 0.0);

    const std::vector<PathSolution> b{constant_path(8, {4.0, 6.0}, {0.5})};
    r = h_norm_diff(a, b, g);
    CHECK(r.err_x == doctest::Approx(5.0 * std::sqrt(2.0)).epsilon(1e-14));
    CHECK(r.err_u == 0.0);

    const std::vector<PathSolution> a2{constant_path(8, {1.0, 2.0}, {0.5}), constant_path(8, {0.0, 0.0}, {0.0})};
    const std::vector<PathSolution> b2{constant_path(8, {4.0, 6.0}, {0.5}), constant_path(8, {0.0, 0.0}, {0.0})};
    r = h_norm_diff(a2, b2, g);
    CHECK(r.err_x == doctest::Approx(5.0 * std::sqrt(1.0)).epsilon(1e-14));

    CHECK_THROWS_AS(h_norm_diff(a, a2, g), std::invalid_argument);
    CHECK_THROWS_AS(h_norm_diff(a, a, TimeGrid{2.0, 9, 0.75}), std::invalid_argument);
}

TEST_CASE("H-norm uses the left-point rule") {
    // Only the last node differs: it is outside the sum over k < N.
    const TimeGrid g{1.0, 4, 0.75};
    auto a = constant_path(4, {0.0}, {0.0});
    auto b = a;
    b.x_at(4)[0] = 10.0;
    const std::vector<PathSolution> va{a}, vb{b};
    CHECK(h_norm_diff(va, vb, g).err_x == 0.0);
}

TEST_CASE("theory constants") {
    auto c = theory_constants(1.0, 1.0, 1.0, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0);
    CHECK(c.M_bar == doctest::Approx(2.0));
    CHECK(c.N_bar == doctest::Approx(2.0));
    CHECK(c.N_hat == doctest::Approx(2.0));
    CHECK(c.M_hat == c.M_bar);
    CHECK(c.Z_bar == doctest::Approx(40.5).epsilon(1e-14));
    CHECK(c.B0 == doctest::Approx(81.0 * 3.0).epsilon(1e-14));

    c = theory_constants(1.0, 2.0, 0.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0);
    const double gap = 1.0 - std::sqrt(0.75);
    CHECK(c.M_bar == doctest::Approx(0.5 / (gap * gap)).epsilon(1e-13));
    CHECK(c.M_bar == doctest::Approx(27.85).epsilon(1e-3));
    CHECK(c.N_bar == doctest::Approx(0.125 / (gap * gap)).epsilon(1e-13));
    CHECK(c.N_hat == doctest::Approx(2.0 / (gap * gap)).epsilon(1e-13));

    CHECK_THROWS_AS(theory_constants(1.0, 1.0, 0.0, 0.75, 1.0, 1, 1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(theory_constants(1.0, 1.0, 2.0, 0.75, 1.0, 1, 1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(theory_constants(1.0, 1.0, 1.0, 0.5, 1.0, 1, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("theory constants are positive, symmetric and decrease in c_bar") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    for (int k = 0; k < 500; ++k) {
        const double l = 1.0 + u(rng), rho = 0.5 / (l * l), a = 0.5 + 0.49 * u(rng) / 2.0, T = u(rng);
        const double Ls = u(rng), Lg = u(rng);
        const auto c = theory_constants(0.5, l, rho, a, T, 1.0, Ls, 1.0, Lg);
        CHECK(c.M_bar > 0.0);
        CHECK(c.N_bar > 0.0);
        CHECK(c.N_hat > 0.0);
        CHECK(c.Z_bar > 0.0);
        CHECK(c.B0 > 0.0);
        const auto swapped = theory_constants(0.5, l, rho, a, T, 1.0, Lg, 1.0, Ls);
        CHECK(swapped.Z_bar == doctest::Approx(c.Z_bar).epsilon(1e-14));
        CHECK(swapped.B0 == doctest::Approx(c.B0).epsilon(1e-14));
        const auto tighter = theory_constants(0.5 + 0.5 * u(rng) / 2.0, l, rho, a, T, 1.0, Ls, 1.0, Lg);
        CHECK(tighter.M_bar < c.M_bar);
    }
}

TEST_CASE("limit parameters give exactly zero error") {
    const auto fam = scalar_family(false, false);
    const std::vector<int> ms{1, 2}, ns{1, 3};
    const auto rep = run_stability(fam, ms, ns, TimeGrid{1.0, 16, 0.75}, 20, 5, SolverConfig{});
    CHECK(rep.cells.size() == 9);
    for (const auto& c : rep.cells) {
        CHECK(c.err_x == 0.0);
        CHECK(c.err_u == 0.0);
        CHECK(c.mc_stderr == 0.0);
    }
    CHECK(rep.paths == 20);
    CHECK(rep.seed == 5);
    CHECK(rep.rho == 1.0);
}

TEST_CASE("pure set perturbation") {
    const auto fam = scalar_family(false, true);
    const std::vector<int> ms{1}, ns{1, 2, 4, 8};
    const TimeGrid g{2.0, 16, 0.75};
    const auto rep = run_stability(fam, ms, ns, g, 10, 99, SolverConfig{});
    for (int n : ns) {
        CAPTURE(n);
        CHECK(rep.at(1, n).err_u == doctest::Approx(std::sqrt(g.T) / n).epsilon(1e-9));
        CHECK(rep.at(kLimitIndex, n).err_u == doctest::Approx(std::sqrt(g.T) / n).epsilon(1e-9));
        CHECK(rep.at(1, n).err_x == 0.0);
    }
    CHECK(rep.at(1, kLimitIndex).err_u == 0.0);
    CHECK(rep.at(kLimitIndex, kLimitIndex).err_u == 0.0);
}

TEST_CASE("pure drift perturbation matches the explicit difference") {
    const auto fam = scalar_family(true, false);
    const std::vector<int> ms{1, 2, 4, 8, 16}, ns{1};
    const TimeGrid g{1.5, 32, 0.75};
    const auto rep = run_stability(fam, ms, ns, g, 12, 4, SolverConfig{});
    // x_m(t_k) - x(t_k) = t_k / m on every path.
    double s = 0.0;
    for (int k = 0; k < g.N; ++k) s += g.t(k) * g.t(k) * g.dt();
    double prev = INFINITY;
    for (int m : ms) {
        CAPTURE(m);
        const auto& c = rep.at(m, 1);
        CHECK(c.err_x == doctest::Approx(std::sqrt(s) / m).epsilon(1e-9));
        CHECK(c.err_x <= std::pow(g.T, 1.5) / m);
        CHECK(c.err_x <= prev + 3.0 * c.mc_stderr);
        CHECK(c.err_u == 0.0);
        prev = c.err_x;
    }
}

TEST_CASE("reports do not depend on the thread count") {
    auto fam = scalar_family(true, true);
    fam.jumps.c = 1.0;
    fam.jumps.atoms = {{Vec{0.2}, 1.5}};
    const std::vector<int> ms{1, 4}, ns{2, 8};
    const TimeGrid g{1.0, 16, 0.6};
    const auto a = run_stability(fam, ms, ns, g, 16, 7, SolverConfig{}, 1);
    const auto b = run_stability(fam, ms, ns, g, 16, 7, SolverConfig{}, 4);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        CHECK(a.cells[i].m == b.cells[i].m);
        CHECK(a.cells[i].n == b.cells[i].n);
        CHECK(a.cells[i].err_x == b.cells[i].err_x);
        CHECK(a.cells[i].err_u == b.cells[i].err_u);
        CHECK(a.cells[i].mc_stderr == b.cells[i].mc_stderr);
    }
}

TEST_CASE("run_stability input checks and abort context") {
    const auto fam = scalar_family(true, true);
    const TimeGrid g{1.0, 8, 0.75};
    const std::vector<int> empty, ms{1, 2}, bad{2, 1};
    CHECK_THROWS_AS(run_stability(fam, empty, ms, g, 4, 1, SolverConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(run_stability(fam, bad, ms, g, 4, 1, SolverConfig{}), std::invalid_argument);

    auto broken = fam;
    broken.lambda_seq = [](int m) { return Vec{m == 2 ? std::nan("") : 0.0}; };
    try {
        (void)run_stability(broken, ms, ms, g, 4, 1, SolverConfig{});
        FAIL("expected StabilityAbort");
    } catch (const StabilityAbort& e) {
        CHECK(e.m() == 2);
        CHECK(e.path() == 0);
        CHECK(e.step() >= 0);
    }
}

TEST_CASE("projection convergence report") {
    const auto fam = scalar_family(false, true);
    const std::vector<int> ns{1, 2, 4, 8};
    const std::vector<Vec> probes{Vec{2.0}};
    const auto rep = projection_convergence_report(fam, ns, probes);
    REQUIRE(rep.size() == 4);
    const double want[] = {1.0, 0.5, 0.25, 0.125};
    for (std::size_t i = 0; i < rep.size(); ++i) {
        CHECK(rep[i].first == ns[i]);
        CHECK(rep[i].second == doctest::Approx(want[i]).epsilon(1e-14));
    }
    const auto fixed = projection_convergence_report(scalar_family(false, false), ns, probes);
    for (const auto& [n, gap] : fixed) CHECK(gap == 0.0);

    PerturbationFamily balls = fam;
    balls.mu_to_set = [](const Vec& mu) { return ConvexSet::ball({0.0, 0.0}, mu[0]); };
    balls.mu_seq = [](int n) { return Vec{1.0 + std::ldexp(1.0, -n)}; };
    const std::vector<Vec> p2{Vec{2.0, 0.0}};
    const std::vector<int> ks{1, 2, 3, 5};
    for (const auto& [n, gap] : projection_convergence_report(balls, ks, p2))
        CHECK(gap == doctest::Approx(std::ldexp(1.0, -n)).epsilon(1e-12));
}
