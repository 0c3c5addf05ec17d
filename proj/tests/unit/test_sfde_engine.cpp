#include <doctest.h>

#include <cmath>
#include <random>

#include "sfdvi/sfde_engine.hpp"

using namespace sfdvi;

namespace {

VIProblem unit_box_vi(double shift = 0.0) {
    return VIProblem{ConvexSet::box({0.0}, {1.0}),
                     [shift](double, std::span<const double>, std::span<const double> u, std::span<double> out) {
                         out[0] = u[0] + shift;
                     },
                     1.0, 1.0};
}

CoefficientSet scalar_coeffs() {
    CoefficientSet c;
    c.p = 1;
    c.q = 1;
    c.l = 1;
    return c;
}

JumpMeasure single_atom(double mark, double weight) {
    JumpMeasure jm;
    jm.c = 2.0 * std::abs(mark) + 1.0;
    jm.atoms.push_back({Vec{mark}, weight});
    return jm;
}

}  // namespace

TEST_CASE("grid validation") {
    CHECK_NOTHROW(TimeGrid{1.0, 4, 0.75}.validate());
    CHECK_THROWS_AS(TimeGrid({1.0, 4, 0.5}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid({1.0, 4, 1.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid({0.0, 4, 0.75}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid({1.0, 0, 0.75}).validate(), std::invalid_argument);
}

TEST_CASE("fractional weights") {
    const auto w1 = frac_weights({1.0, 1, 0.75}, 1);
    REQUIRE(w1.size() == 1);
    CHECK(w1[0] == 1.0);

    const auto w2 = frac_weights({1.0, 2, 0.75}, 2);
    REQUIRE(w2.size() == 2);
    CHECK(w2[0] == doctest::Approx(1.0 - std::pow(0.5, 0.75)).epsilon(1e-15));
    CHECK(w2[1] == doctest::Approx(std::pow(0.5, 0.75)).epsilon(1e-15));
    CHECK(w2[0] == doctest::Approx(0.40539).epsilon(1e-4));

    CHECK_THROWS_AS(frac_weights({1.0, 2, 0.75}, 0), std::out_of_range);
    CHECK_THROWS_AS(frac_weights({1.0, 2, 0.75}, 3), std::out_of_range);
}

TEST_CASE("fractional weights telescope to t_n^alpha") {
    for (double alpha : {0.51, 0.6, 0.75, 0.99}) {
        const TimeGrid g{2.5, 37, alpha};
        for (int n = 1; n <= g.N; ++n) {
            const auto w = frac_weights(g, n);
            double s = 0.0;
            for (double v : w) {
                CHECK(v > 0.0);
                s += v;
            }
            CHECK(std::abs(s - std::pow(g.t(n), alpha)) <= 1e-12);
        }
    }
}

TEST_CASE("fractional quadrature is first order for sigma1(t) = t") {
    const double alpha = 0.75;
    std::vector<double> log_dt, log_err;
    for (int e = 4; e <= 8; ++e) {
        const TimeGrid g{1.0, 1 << e, alpha};
        const auto w = frac_weights(g, g.N);
        double s = 0.0;
        for (int k = 0; k < g.N; ++k) s += g.t(k) * w[k];
        const double exact = 1.0 / (alpha + 1.0);
        const double err = std::abs(s - exact);
        CHECK(err <= 1.0 * g.dt());
        log_dt.push_back(std::log(g.dt()));
        log_err.push_back(std::log(err));
    }
    const double n = static_cast<double>(log_dt.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        mx += log_dt[i] / n;
        my += log_err[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        sxy += (log_dt[i] - mx) * (log_err[i] - my);
        sxx += (log_dt[i] - mx) * (log_dt[i] - mx);
    }
    CHECK(sxy / sxx >= 1.0 - 1e-9);
}

TEST_CASE("noise generation") {
    const TimeGrid g{1.0, 8, 0.75};
    const auto none = gen_noise(g, 1, JumpMeasure{}, 5);
    CHECK(none.jumps.empty());
    CHECK(none.brownian.size() == 8);

    const auto jm = single_atom(0.5, 2.0);
    const auto a = gen_noise(g, 3, jm, 123), b = gen_noise(g, 3, jm, 123);
    CHECK(a.brownian == b.brownian);
    REQUIRE(a.jumps.size() == b.jumps.size());
    for (std::size_t i = 0; i < a.jumps.size(); ++i) {
        CHECK(a.jumps[i].step == b.jumps[i].step);
        CHECK(a.jumps[i].atom == b.jumps[i].atom);
    }
    const auto c = gen_noise(g, 3, jm, 124);
    CHECK(a.brownian != c.brownian);
    const auto zero_l = gen_noise(g, 0, jm, 1);
    CHECK(zero_l.brownian.empty());
}

TEST_CASE("Poisson jump counts have mean Lambda T") {
    const TimeGrid g{1.0, 4, 0.75};
    const auto jm = single_atom(0.5, 2.0);
    const int bundles = 100000;
    double total = 0.0;
    for (int i = 0; i < bundles; ++i) {
        const auto nb = gen_noise(g, 0, jm, derive_seed(77, static_cast<std::uint64_t>(i)));
        total += static_cast<double>(nb.jumps.size());
    }
    CHECK(std::abs(total / bundles - 2.0) <= 3.0 * std::sqrt(2.0) / std::sqrt(double(bundles)));
}

TEST_CASE("Brownian increments have variance dt") {
    const TimeGrid g{2.0, 64, 0.75};
    const auto nb = gen_noise(g, 4, JumpMeasure{}, 9);
    double s2 = 0.0;
    for (double v : nb.brownian) s2 += v * v;
    const double var = s2 / static_cast<double>(nb.brownian.size());
    // 256 samples: relative sd of the variance estimate is sqrt(2/256).
    CHECK(std::abs(var / g.dt() - 1.0) <= 4.0 * std::sqrt(2.0 / 256.0));
}

TEST_CASE("marks are drawn proportional to weight") {
    JumpMeasure jm;
    jm.c = 1.0;
    jm.atoms = {{Vec{0.1}, 1.0}, {Vec{-0.1}, 3.0}};
    const TimeGrid g{50.0, 10, 0.75};
    int counts[2] = {0, 0};
    for (int i = 0; i < 200; ++i)
        for (const auto& ev : gen_noise(g, 0, jm, derive_seed(3, i)).jumps) ++counts[ev.atom];
    const double n = counts[0] + counts[1];
    CHECK(std::abs(counts[1] / n - 0.75) <= 4.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST_CASE("seed derivation") {
    CHECK(derive_seed(1, 0) == derive_seed(1, 0));
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("jump measure validation") {
    JumpMeasure jm = single_atom(0.5, 1.0);
    CHECK_NOTHROW(jm.validate(1));
    CHECK_THROWS_AS(jm.validate(2), DimensionError);
    jm.c = 0.5;
    CHECK_THROWS_AS(jm.validate(1), std::invalid_argument);
    jm.c = 1.0;
    jm.atoms[0].weight = 0.0;
    CHECK_THROWS_AS(jm.validate(1), std::invalid_argument);
    CHECK(single_atom(0.5, 2.0).intensity() == 2.0);
}

TEST_CASE("compensator integral") {
    const JumpFn ident = [](double, std::span<const double>, std::span<const double>, std::span<const double> y,
                            std::span<double> out) { out[0] = y[0]; };
    const Vec x{0.0}, u{0.0};
    CHECK(compensator_integral(JumpFn{}, single_atom(1.0, 2.0), 0.0, x, u, 1) == Vec{0.0});
    CHECK(compensator_integral(ident, single_atom(1.0, 2.0), 0.0, x, u, 1) == Vec{2.0});
    JumpMeasure sym;
    sym.c = 2.0;
    sym.atoms = {{Vec{1.0}, 1.0}, {Vec{-1.0}, 1.0}};
    CHECK(compensator_integral(ident, sym, 0.0, x, u, 1) == Vec{0.0});
}

TEST_CASE("constant fractional coefficient reproduces t^alpha") {
    auto c = scalar_coeffs();
    c.frac = [](double, std::span<const double>, std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    const TimeGrid g{1.0, 50, 0.8};
    const auto noise = gen_noise(g, 1, JumpMeasure{}, 1);
    const auto path = integrate_path(c, unit_box_vi(-0.3), SolverConfig{}, g, noise, Vec{0.25});
    for (int n = 0; n <= g.N; ++n) CHECK(std::abs(path.x_at(n)[0] - (0.25 + std::pow(g.t(n), g.alpha))) <= 1e-12);
    for (int n = 0; n <= g.N; ++n) CHECK(path.u_at(n)[0] == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("frozen system keeps the initial state") {
    const TimeGrid g{1.0, 10, 0.75};
    const auto noise = gen_noise(g, 1, single_atom(0.5, 1.0), 2);
    const auto path = integrate_path(scalar_coeffs(), unit_box_vi(-0.6), SolverConfig{}, g, noise, Vec{-1.5});
    CHECK(path.vi_iters.size() == 11);
    for (int n = 0; n <= g.N; ++n) {
        CHECK(path.x_at(n)[0] == -1.5);
        CHECK(path.u_at(n)[0] == doctest::Approx(0.6).epsilon(1e-9));
    }
}

TEST_CASE("compensated jump term has zero mean") {
    auto c = scalar_coeffs();
    c.jump = [](double, std::span<const double>, std::span<const double>, std::span<const double> y,
                std::span<double> out) { out[0] = y[0]; };
    const auto jm = single_atom(1.0, 3.0);
    const TimeGrid g{1.0, 16, 0.75};
    const int paths = 10000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < paths; ++i) {
        const auto noise = gen_noise(g, 1, jm, derive_seed(2024, i));
        const auto path = integrate_path(c, unit_box_vi(), SolverConfig{}, g, noise, Vec{0.5});
        const double v = path.x_at(g.N)[0];
        s += v;
        s2 += v * v;
    }
    const double mean = s / paths;
    const double sd = std::sqrt((s2 - paths * mean * mean) / (paths - 1));
    CHECK(std::abs(mean - 0.5) <= 3.0 * sd / std::sqrt(double(paths)));
    // The variance of the compensated Poisson integral at T is Lambda T |y|^2.
    CHECK(sd * sd == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("paths are adapted and deterministic") {
    auto c = scalar_coeffs();
    c.p = 2;
    c.q = 2;
    c.l = 2;
    c.drift = [](double t, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        out[0] = -x[0] + u[1] + t;
        out[1] = 0.5 * x[1] - u[0];
    };
    c.frac = [](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
        out[0] = 0.2 * x[1];
        out[1] = 0.1;
    };
    c.diffusion = [](double, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        out[0] = 0.3;
        out[1] = 0.1 * x[0];
        out[2] = 0.0;
        out[3] = 0.2 + 0.1 * u[1];
    };
    c.jump = [](double, std::span<const double> x, std::span<const double>, std::span<const double> y,
                std::span<double> out) {
        out[0] = y[0] * (1.0 + 0.1 * x[0]);
        out[1] = y[1];
    };
    JumpMeasure jm;
    jm.c = 1.0;
    jm.atoms = {{Vec{0.3, -0.2}, 2.0}, {Vec{-0.1, 0.4}, 1.5}};
    const VIProblem vi{ConvexSet::ball({0.0, 0.0}, 1.0),
                       [](double, std::span<const double> x, std::span<const double> u, std::span<double> out) {
                           out[0] = 2.0 * u[0] + 0.5 * u[1] - x[0];
                           out[1] = -0.5 * u[0] + 2.0 * u[1] - x[1];
                       },
                       2.0, 2.1};
    const TimeGrid g{1.0, 24, 0.7};
    const auto noise = gen_noise(g, 2, jm, 31337);
    const Vec p0{0.4, -0.3};
    const auto full = integrate_path(c, vi, SolverConfig{}, g, noise, p0);
    const auto again = integrate_path(c, vi, SolverConfig{}, g, noise, p0);
    CHECK(full.x == again.x);
    CHECK(full.u == again.u);
    CHECK(full.vi_iters == again.vi_iters);
    CHECK(full.x_at(0)[0] == p0[0]);
    CHECK(full.x_at(0)[1] == p0[1]);
    for (int k = 0; k <= g.N; ++k) CHECK(contains(vi.set, full.u_at(k), 1e-9));

    for (int n : {1, 5, 12, 23}) {
        CAPTURE(n);
        const auto cut = integrate_path(c, vi, SolverConfig{}, g, noise.truncated(n), p0);
        for (int k = 0; k <= n; ++k) {
            CHECK(cut.x_at(k)[0] == full.x_at(k)[0]);
            CHECK(cut.x_at(k)[1] == full.x_at(k)[1]);
            CHECK(cut.u_at(k)[0] == full.u_at(k)[0]);
            CHECK(cut.u_at(k)[1] == full.u_at(k)[1]);
        }
    }
}

TEST_CASE("path aborts carry the step index") {
    auto c = scalar_coeffs();
    c.drift = [](double t, std::span<const double>, std::span<const double>, std::span<double> out) {
        out[0] = t > 0.5 ? std::nan("") : 1.0;
    };
    const TimeGrid g{1.0, 10, 0.75};
    const auto noise = gen_noise(g, 1, JumpMeasure{}, 4);
    try {
        (void)integrate_path(c, unit_box_vi(), SolverConfig{}, g, noise, Vec{0.0});
        FAIL("expected PathAbort");
    } catch (const PathAbort& e) {
        CHECK(e.step() == 7);
    }

    SolverConfig tight;
    tight.max_iter = 1;
    tight.rho = 0.01;
    try {
        (void)integrate_path(scalar_coeffs(), unit_box_vi(-0.5), tight, g, noise, Vec{0.0});
        FAIL("expected PathAbort");
    } catch (const PathAbort& e) {
        CHECK(e.step() == 0);
    }
}

TEST_CASE("integrate_path rejects mismatched inputs") {
    const TimeGrid g{1.0, 4, 0.75};
    const auto noise = gen_noise(g, 1, JumpMeasure{}, 4);
    CHECK_THROWS_AS(integrate_path(scalar_coeffs(), unit_box_vi(), SolverConfig{}, g, noise, Vec{0.0, 1.0}),
                    DimensionError);
    auto c = scalar_coeffs();
    c.q = 2;
    CHECK_THROWS(integrate_path(c, unit_box_vi(), SolverConfig{}, g, noise, Vec{0.0}));
}

TEST_CASE("Ito isometry") {
    const TimeGrid g{1.0, 32, 0.75};
    const int paths = 20000;
    const auto one = ito_isometry_check([](double) { return 1.0; }, g, paths, 8);
    CHECK(one.rhs == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(one.rel_err <= 3.0 * std::sqrt(2.0) / std::sqrt(double(paths)));

    const auto zero = ito_isometry_check([](double) { return 0.0; }, g, 100, 8);
    CHECK(zero.lhs == 0.0);
    CHECK(zero.rhs == 0.0);

    const TimeGrid fine{1.0, 4096, 0.75};
    const auto lin = ito_isometry_check([](double t) { return t; }, fine, 100, 8);
    CHECK(lin.rhs == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
    CHECK_THROWS_AS(ito_isometry_check([](double) { return 1.0; }, g, 99, 8), std::invalid_argument);
}

TEST_CASE("Doob maximal inequality") {
    const TimeGrid g{1.0, 64, 0.75};
    const auto d = doob_bound_check(g, 10000, 17);
    CHECK(d.bound == 4.0);
    CHECK(d.empirical >= 1.0);
    CHECK(d.empirical <= 4.0);
    const auto tiny = doob_bound_check({1e-12, 1, 0.75}, 100, 17);
    CHECK(tiny.empirical <= tiny.bound + 3.0 * tiny.std_error);
    CHECK(tiny.empirical < 1e-10);
}
