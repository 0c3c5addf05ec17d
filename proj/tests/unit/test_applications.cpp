#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "sfdvi/applications.hpp"

using namespace sfdvi;

namespace {

SpatialMarketSpec frozen_market(double p, double q, bool reduced) {
    SpatialMarketSpec s;
    s.m = 1;
    s.n = 1;
    s.gamma = {1.0};
    s.c0 = {0.0};
    s.p0 = {p};
    s.q0 = {q};
    s.grid = TimeGrid{1.0, 8, 0.75};
    s.reduced = reduced;
    return s;
}

SpatialMarketSpec random_market(std::mt19937_64& rng, std::size_t m, std::size_t n, bool reduced) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SpatialMarketSpec s;
    s.m = m;
    s.n = n;
    for (std::size_t k = 0; k < m * n; ++k) {
        s.gamma.push_back(0.5 + u(rng));
        s.c0.push_back(0.3 * u(rng));
    }
    for (std::size_t i = 0; i < m; ++i) s.p0.push_back(1.0 + u(rng));
    for (std::size_t j = 0; j < n; ++j) s.q0.push_back(1.5 + 2.0 * u(rng));
    s.supply = {0.5, 1.2, 0.1, 0.05, 0.2, 0.5};
    s.demand = {0.5, 2.5, 0.1, 0.05, 0.2, 0.5};
    s.jumps.c = 1.0;
    Vec mark(m + n, 0.0);
    mark[0] = 0.3;
    s.jumps.atoms = {{mark, 1.0}};
    s.grid = TimeGrid{1.0, 16, 0.7};
    s.reduced = reduced;
    return s;
}

PathSolution run(const CoupledSystem& sys, std::uint64_t seed, SolverConfig cfg = {}) {
    const auto noise = gen_noise(sys.grid, static_cast<int>(sys.coeffs.l), sys.jumps, seed);
    return integrate_path(sys.coeffs, sys.vi, cfg, sys.grid, noise, sys.p0);
}

QuadraticGame separable(Vec target, std::vector<std::pair<double, double>> box) {
    QuadraticGame g;
    g.target = std::move(target);
    g.weight = Vec(g.target.size(), 1.0);
    g.box = std::move(box);
    return g;
}

}  // namespace

TEST_CASE("frozen-price market trades until prices meet") {
    for (bool reduced : {true, false}) {
        CAPTURE(reduced);
        const auto spec = frozen_market(1.0, 3.0, reduced);
        const auto sys = build_spep(spec);
        CHECK(sys.p0 == Vec{1.0, 3.0});
        CHECK(sys.vi.set.dim() == (reduced ? 1u : 3u));
        const auto sol = run(sys, 1);
        for (int k = 0; k <= sol.N; ++k) {
            CHECK(sol.x_at(k)[0] == 1.0);
            CHECK(sol.x_at(k)[1] == 3.0);
            CHECK(spep_flows(spec, sol.u_at(k))[0] == doctest::Approx(2.0).epsilon(1e-9));
            if (!reduced) {
                CHECK(sol.u_at(k)[0] == doctest::Approx(2.0).epsilon(1e-9));
                CHECK(sol.u_at(k)[1] == doctest::Approx(2.0).epsilon(1e-9));
            }
        }
        const auto rep = check_spep_equilibrium(sol, spec, 1e-6);
        CHECK(rep.ok());
        CHECK(rep.step_worst.size() == static_cast<std::size_t>(sol.N + 1));
    }
}

TEST_CASE("no trade when demand price does not exceed supply price") {
    const auto spec = frozen_market(3.0, 1.0, true);
    const auto sys = build_spep(spec);
    const auto sol = run(sys, 2);
    // Grid scan of the scalar VI residual: the minimiser is a = 0.
    double best = 0.0, best_res = INFINITY;
    for (int k = 0; k <= 1000; ++k) {
        const double a = k * 1e-3;
        const double r = vi_residual(sys.vi, Vec{a}, 1.0, 0.0, sys.p0);
        if (r < best_res) {
            best_res = r;
            best = a;
        }
    }
    CHECK(best == 0.0);
    for (int k = 0; k <= sol.N; ++k) CHECK(sol.u_at(k)[0] == 0.0);
    CHECK(check_spep_equilibrium(sol, spec, 1e-9).ok());
}

TEST_CASE("spep VI solution satisfies the variational inequality") {
    const auto spec = frozen_market(1.0, 3.0, false);
    const auto sys = build_spep(spec);
    const auto sol = run(sys, 3);
    const Vec u(sol.u_at(0).begin(), sol.u_at(0).end());
    const Vec f = sys.vi.eval(0.0, sys.p0, u);
    std::mt19937_64 rng(4);
    for (int k = 0; k < 1000; ++k) {
        const Vec v = sample_point(sys.vi.set, rng, 5.0);
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += f[i] * (v[i] - u[i]);
        CHECK(s >= -1e-8);
    }
}

TEST_CASE("negative control: missing trade is flagged") {
    const auto spec = frozen_market(1.0, 3.0, true);
    PathSolution sol;
    sol.p = 2;
    sol.q = 1;
    sol.N = 3;
    sol.x = {1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0};  // q > p + c(0) at step 2 only
    sol.u = {0.0, 0.0, 0.0, 0.0};
    sol.vi_residuals = {0.0, 0.0, 0.0, 0.0};
    const auto rep = check_spep_equilibrium(sol, spec, 1e-6);
    CHECK_FALSE(rep.ok());
    CHECK(rep.violations == 1);
    CHECK(rep.worst_inequality.step == 2);
    CHECK(rep.worst_inequality.i == 0);
    CHECK(rep.worst_inequality.j == 0);
    CHECK(rep.worst_inequality.amount == doctest::Approx(2.0 - 1e-6));
    CHECK(rep.step_worst[2] > 0.0);
    CHECK(rep.step_worst[0] == 0.0);

    sol.x = {3.0, 1.0, 3.0, 1.0, 3.0, 1.0, 3.0, 1.0};
    CHECK(check_spep_equilibrium(sol, frozen_market(3.0, 1.0, true), 1e-6).ok());
}

TEST_CASE("integrated markets satisfy the two-branch conditions at every step") {
    std::mt19937_64 rng(21);
    for (auto [m, n] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 3}, {3, 2}}) {
        for (bool reduced : {true, false}) {
            CAPTURE(m);
            CAPTURE(n);
            CAPTURE(reduced);
            const auto spec = random_market(rng, m, n, reduced);
            const auto sys = build_spep(spec);
            CHECK(sys.coeffs.p == m + n);
            CHECK(sys.vi.set.dim() == (reduced ? m * n : m + n + m * n));
            SolverConfig cfg;
            cfg.max_iter = 200000;
            const auto sol = run(sys, 5, cfg);
            const auto rep = check_spep_equilibrium(sol, spec, 1e-8);
            CHECK(rep.ok());
        }
    }
}

TEST_CASE("spep validation") {
    auto s = frozen_market(1.0, 2.0, true);
    s.gamma = {0.0};
    CHECK_THROWS_AS(build_spep(s), std::invalid_argument);
    s = frozen_market(1.0, 2.0, true);
    s.c0 = {-1.0};
    CHECK_THROWS_AS(build_spep(s), std::invalid_argument);
    s = frozen_market(1.0, 2.0, true);
    s.p0 = {1.0, 2.0};
    CHECK_THROWS(build_spep(s));
    s = frozen_market(1.0, 2.0, true);
    s.m = 0;
    CHECK_THROWS(build_spep(s));
}

TEST_CASE("separable game equilibria") {
    auto spec = quadratic_game(separable({1.0, 2.0}, {{0.0, 3.0}, {0.0, 3.0}}), {}, {}, {}, TimeGrid{1.0, 4, 0.75});
    CHECK(spec.c_bar == doctest::Approx(1.0));
    auto sys = build_game(spec);
    auto sol = run(sys, 1);
    for (int k = 0; k <= sol.N; ++k) {
        CHECK(sol.u_at(k)[0] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(sol.u_at(k)[1] == doctest::Approx(2.0).epsilon(1e-9));
    }
    auto rep = verify_nash(sol, spec, 32, 1e-8);
    CHECK(rep.certified);
    CHECK(rep.worst[0] >= -1e-8);

    // Agent 1 interior point moved by 0.1: gradient 0.1, deviation to the lower end costs 0.1.
    auto bad = sol;
    for (int k = 0; k <= bad.N; ++k) bad.u_at(k)[0] += 0.1;
    rep = verify_nash(bad, spec, 32, 1e-8);
    CHECK_FALSE(rep.certified);
    CHECK(rep.worst[0] == doctest::Approx(-0.11).epsilon(1e-6));
    CHECK(rep.worst[1] >= -1e-8);

    spec = quadratic_game(separable({3.0, 0.5}, {{0.0, 1.0}, {0.0, 1.0}}), {}, {}, {}, TimeGrid{1.0, 4, 0.75});
    sol = run(build_game(spec), 1);
    CHECK(sol.u_at(2)[0] == doctest::Approx(1.0).epsilon(1e-12));
    // Scalar scan of theta^1 = (u - 3)^2 / 2 on [0, 1].
    double best = 0.0, val = INFINITY;
    for (int k = 0; k <= 1000; ++k) {
        const double v = k * 1e-3;
        if ((v - 3.0) * (v - 3.0) < val) {
            val = (v - 3.0) * (v - 3.0);
            best = v;
        }
    }
    CHECK(sol.u_at(2)[0] == doctest::Approx(best));

    spec = quadratic_game(separable({-4.0}, {{-1.0, 1.0}}), {}, {}, {}, TimeGrid{1.0, 2, 0.75});
    sol = run(build_game(spec), 1);
    CHECK(sol.u_at(1)[0] == -1.0);
}

TEST_CASE("coupled game with dynamics") {
    QuadraticGame g;
    g.target = {1.0, -0.5, 0.25};
    g.weight = {2.0, 1.5, 1.0};
    g.box = {{-1.0, 1.0}, {-1.0, 0.5}, {0.0, 2.0}};
    g.coupling = {{0.0, 0.3, -0.2}, {-0.3, 0.0, 0.1}, {0.2, -0.1, 0.0}};
    g.state_coupling = {0.2, -0.1, 0.3};
    std::vector<AgentDynamics> dyn(3, AgentDynamics{-0.5, 0.2, 0.05, 0.2, 0.3});
    JumpMeasure jm;
    jm.c = 1.0;
    jm.atoms = {{Vec{0.2, -0.1, 0.3}, 1.0}};
    const auto spec = quadratic_game(g, dyn, {0.1, -0.2, 0.3}, jm, TimeGrid{1.0, 16, 0.7});
    // Skew coupling leaves the symmetric part diagonal.
    CHECK(spec.c_bar == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::Matrix3d A;
    A << 2.0, 0.3, -0.2, -0.3, 1.5, 0.1, 0.2, -0.1, 1.0;
    CHECK(spec.l_f == doctest::Approx(Eigen::JacobiSVD<Eigen::Matrix3d>(A).singularValues()(0)).epsilon(1e-12));

    const auto sys = build_game(spec);
    CHECK(sys.vi.set.dim() == 3);
    CHECK(sys.coeffs.p == 3);
    const auto sol = run(sys, 8);
    const auto rep = verify_nash(sol, spec, 64, 1e-8);
    CHECK(rep.certified);

    // Stacking consistency against direct evaluation.
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        const Vec x{nd(rng), nd(rng), nd(rng)}, u{nd(rng), nd(rng), nd(rng)};
        const Vec f = sys.vi.eval(0.0, x, u);
        for (std::size_t i = 0; i < 3; ++i) CHECK(f[i] == agent_gradient(spec, i, x, u)[0]);
    }

    // Random non-equilibrium interior points are rejected.
    std::uniform_real_distribution<double> un(0.0, 1.0);
    int rejected = 0, tried = 0;
    for (int k = 0; k < 50; ++k) {
        auto bad = sol;
        for (int s = 0; s <= bad.N; ++s)
            for (std::size_t i = 0; i < 3; ++i) {
                const auto [lo, hi] = g.box[i];
                bad.u_at(s)[i] = lo + (hi - lo) * (0.1 + 0.8 * un(rng));
            }
        bool strong = true;
        for (int s = 0; s <= bad.N && strong; ++s)
            for (std::size_t i = 0; i < 3; ++i)
                if (std::abs(agent_gradient(spec, i, bad.x_at(s), bad.u_at(s))[0]) < 10.0 * 1e-8) strong = false;
        if (!strong) continue;
        ++tried;
        if (!verify_nash(bad, spec, 16, 1e-8).certified) ++rejected;
    }
    CHECK(tried > 0);
    CHECK(rejected == tried);
}

TEST_CASE("single-point strategy sets are always certified") {
    const auto spec = quadratic_game(separable({5.0}, {{0.5, 0.5}}), {}, {}, {}, TimeGrid{1.0, 2, 0.75});
    const auto sol = run(build_game(spec), 3);
    CHECK(sol.u_at(0)[0] == 0.5);
    CHECK(verify_nash(sol, spec, 8, 1e-12).certified);
}

TEST_CASE("monotonicity screen rejects non-monotone games") {
    GameSpec spec = quadratic_game(separable({0.0, 0.0}, {{-1.0, 1.0}, {-1.0, 1.0}}));
    spec.gradient = [](std::size_t i, std::span<const double>, std::span<const double> u, std::span<double> out) {
        out[0] = i == 0 ? u[0] : -u[1];
    };
    try {
        (void)build_game(spec);
        FAIL("expected MonotonicityError");
    } catch (const MonotonicityError& e) {
        CHECK(e.u1().size() == 2);
        CHECK(e.u2().size() == 2);
    }
    QuadraticGame indefinite = separable({0.0, 0.0}, {{-1.0, 1.0}, {-1.0, 1.0}});
    indefinite.coupling = {{0.0, 3.0}, {3.0, 0.0}};
    CHECK_THROWS_AS(quadratic_game(indefinite), std::invalid_argument);
}

TEST_CASE("complementarity examples") {
    const auto K = ConvexSet::orthant(2);
    auto r = complementarity_check(Vec{0.0, 2.0}, Vec{3.0, 0.0}, K);
    CHECK(r.primal_res == 0.0);
    CHECK(r.dual_res == 0.0);
    CHECK(r.orth_res == 0.0);
    CHECK(r.ok(1e-12));
    r = complementarity_check(Vec{1.0, 0.0}, Vec{1.0, 0.0}, K);
    CHECK(r.orth_res == 1.0);
    CHECK_FALSE(r.ok(1e-6));
    r = complementarity_check(Vec{1.0, 0.0}, Vec{-1.0, 2.0}, K);
    CHECK(r.dual_res == 1.0);
    CHECK_FALSE(r.ok(1e-6));
    r = complementarity_check(Vec{-1.0, 0.0}, Vec{0.0, 0.0}, K);
    CHECK(r.primal_res == 1.0);
    CHECK_THROWS_AS(complementarity_check(Vec{0.0}, Vec{0.0}, ConvexSet::box({0.0}, {1.0})), std::invalid_argument);
    CHECK_THROWS_AS(complementarity_check(Vec{0.0}, Vec{0.0}, ConvexSet::transport(1, 1, 2.0)),
                    std::invalid_argument);
}

TEST_CASE("cone generators") {
    auto g = cone_generators(ConvexSet::orthant(3));
    CHECK(g.size() == 3);
    g = cone_generators(ConvexSet::transport(2, 2));
    CHECK(g.size() == 4);
    for (const auto& v : g) {
        double s = 0.0;
        for (double c : v) s += c * c;
        CHECK(s == doctest::Approx(1.0));
        CHECK(contains(ConvexSet::transport(2, 2), v, 1e-12));
    }
    g = cone_generators(ConvexSet::product({ConvexSet::orthant(1), ConvexSet::transport(1, 1)}));
    CHECK(g.size() == 2);
    CHECK(g[0].size() == 4);
}

TEST_CASE("VI solutions on cones pass the complementarity check") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nd(0.0, 1.0);
    const std::vector<ConvexSet> cones{ConvexSet::orthant(4), ConvexSet::transport(2, 2),
                                       ConvexSet::product({ConvexSet::orthant(2), ConvexSet::transport(1, 2)})};
    for (const auto& K : cones) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto q = static_cast<Eigen::Index>(K.dim());
            Eigen::MatrixXd S = Eigen::MatrixXd::NullaryExpr(q, q, [&]() { return nd(rng); });
            const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(q, q) * 2.0 + 0.5 * (S - S.transpose());
            const Eigen::VectorXd c = Eigen::VectorXd::NullaryExpr(q, [&]() { return 2.0 * nd(rng); });
            const double l_f = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
            const VIProblem vi{K,
                               [M, c](double, std::span<const double>, std::span<const double> u, std::span<double> out) {
                                   const Eigen::Map<const Eigen::VectorXd> uu(u.data(), static_cast<Eigen::Index>(u.size()));
                                   Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = M * uu + c;
                               },
                               2.0, l_f};
            SolverConfig cfg;
            cfg.max_iter = 100000;
            const auto sol = solve_vi(vi, cfg, 0.0, {});
            const Vec f = vi.eval(0.0, {}, sol.u);
            const auto r = complementarity_check(sol.u, f, K);
            CHECK(r.ok(10.0 * cfg.tol));
        }
    }
}
