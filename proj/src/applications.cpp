#include "sfdvi/applications.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "sfdvi/kernels.hpp"

namespace sfdvi {
namespace {

constexpr double kFloor = 1e-12;

double floor_const(double v) { return std::max(v, kFloor); }

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double c : v) s += c;
    return s / static_cast<double>(v.size());
}

struct SpepConstants {
    double c_bar;
    double l_f;
};

SpepConstants spep_constants(const SpatialMarketSpec& spec) {
    const double gmin = *std::min_element(spec.gamma.begin(), spec.gamma.end());
    const double gmax = *std::max_element(spec.gamma.begin(), spec.gamma.end());
    if (spec.reduced) {
        // F_ij = p_i - q_j + c_ij(a_ij): |d(p_i - q_j)| <= sqrt(2 max(m, n)) |dy|.
        const double ly = std::sqrt(2.0 * static_cast<double>(std::max(spec.m, spec.n)));
        return {gmin, std::max(gmax, ly)};
    }
    // On the transport set |dS|^2 + |dD|^2 <= (m + n) |da|^2, so the modulus
    // relative to |du|^2 is gamma_min / (1 + m + n).
    return {gmin / static_cast<double>(1 + spec.m + spec.n), std::max(gmax, std::sqrt(2.0))};
}

}  // namespace

void SpatialMarketSpec::validate() const {
    if (m < 1 || n < 1) throw std::invalid_argument("spep: m and n must be >= 1");
    require_dim("spep: gamma", m * n, gamma.size());
    require_dim("spep: c0", m * n, c0.size());
    require_dim("spep: p0", m, p0.size());
    require_dim("spep: q0", n, q0.size());
    for (double g : gamma)
        if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("spep: cost slopes gamma must be positive");
    for (double c : c0)
        if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("spep: require c_ij(0) = c0_ij >= 0");
    grid.validate();
    jumps.validate(m + n);
}

Vec spep_flows(const SpatialMarketSpec& spec, std::span<const double> u) {
    const std::size_t mn = spec.m * spec.n;
    if (spec.reduced) {
        require_dim("spep_flows", mn, u.size());
        return Vec(u.begin(), u.end());
    }
    require_dim("spep_flows", spec.m + spec.n + mn, u.size());
    return Vec(u.begin() + static_cast<std::ptrdiff_t>(spec.m + spec.n), u.end());
}

CoupledSystem build_spep(const SpatialMarketSpec& spec) {
    spec.validate();
    const std::size_t m = spec.m, n = spec.n, p = m + n;
    const bool reduced = spec.reduced;
    const std::size_t q = reduced ? m * n : m + n + m * n;

    CoupledSystem sys{CoefficientSet{}, VIProblem{reduced ? ConvexSet::orthant(m * n) : ConvexSet::transport(m, n), {}, 1.0, 1.0},
                      spec.grid, {}, spec.jumps};
    sys.p0 = spec.p0;
    sys.p0.insert(sys.p0.end(), spec.q0.begin(), spec.q0.end());

    const PriceDynamics s = spec.supply, d = spec.demand;
    auto& cs = sys.coeffs;
    cs.p = p;
    cs.q = q;
    cs.l = p;
    cs.drift = [=](double, std::span<const double> y, std::span<const double> u, std::span<double> out) {
        for (std::size_t i = 0; i < m; ++i) {
            double vol = 0.0;
            if (reduced)
                for (std::size_t j = 0; j < n; ++j) vol += u[i * n + j];
            else
                vol = u[i];
            out[i] = s.kappa * (s.level - y[i]) + s.eta * vol;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double vol = 0.0;
            if (reduced)
                for (std::size_t i = 0; i < m; ++i) vol += u[i * n + j];
            else
                vol = u[m + j];
            out[m + j] = d.kappa * (d.level - y[m + j]) - d.eta * vol;
        }
    };
    if (s.frac != 0.0 || d.frac != 0.0) {
        cs.frac = [=](double, std::span<const double>, std::span<const double>, std::span<double> out) {
            for (std::size_t k = 0; k < p; ++k) out[k] = k < m ? s.frac : d.frac;
        };
    }
    if (s.vol != 0.0 || d.vol != 0.0) {
        cs.diffusion = [=](double, std::span<const double>, std::span<const double>, std::span<double> out) {
            for (std::size_t k = 0; k < p; ++k) out[k * p + k] = k < m ? s.vol : d.vol;
        };
    }
    if (s.jump != 0.0 || d.jump != 0.0) {
        cs.jump = [=](double, std::span<const double>, std::span<const double>, std::span<const double> yj,
                      std::span<double> out) {
            for (std::size_t k = 0; k < p; ++k) out[k] = (k < m ? s.jump : d.jump) * yj[k];
        };
    }
    const double kmax = std::max(std::abs(s.kappa), std::abs(d.kappa));
    const double emax = std::max(std::abs(s.eta), std::abs(d.eta));
    const double vol_factor = reduced ? static_cast<double>(m + n) : 1.0;
    double jump_mass = 0.0;
    for (const auto& a : spec.jumps.atoms) jump_mass += a.weight * kernels::dot(a.mark, a.mark);
    const double jmax = std::max(std::abs(s.jump), std::abs(d.jump));
    auto& k = cs.constants;
    k.L_b = floor_const(std::max(2.0 * kmax * kmax, 2.0 * emax * emax * vol_factor));
    k.K_b = floor_const(std::max({3.0 * (m * s.kappa * s.kappa * s.level * s.level + n * d.kappa * d.kappa * d.level * d.level),
                                  3.0 * kmax * kmax, 3.0 * emax * emax * vol_factor}));
    k.L_sigma = kFloor;
    k.K_sigma = floor_const(p * std::max(s.vol * s.vol, d.vol * d.vol));
    k.L_sigma1 = kFloor;
    k.K_sigma1 = floor_const(p * std::max(s.frac * s.frac, d.frac * d.frac));
    k.L_G = kFloor;
    k.K_G = floor_const(jmax * jmax * jump_mass);

    const Vec gamma = spec.gamma, c0 = spec.c0;
    if (reduced) {
        sys.vi.field = [=](double, std::span<const double> y, std::span<const double> u, std::span<double> out) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    out[i * n + j] = y[i] + gamma[i * n + j] * u[i * n + j] + c0[i * n + j] - y[m + j];
        };
    } else {
        // F = (p, -q, c(a)), so <F, u> = <p, S> - <q, D> + <c(a), a>.
        sys.vi.field = [=](double, std::span<const double> y, std::span<const double> u, std::span<double> out) {
            for (std::size_t i = 0; i < m; ++i) out[i] = y[i];
            for (std::size_t j = 0; j < n; ++j) out[m + j] = -y[m + j];
            for (std::size_t ij = 0; ij < m * n; ++ij) out[m + n + ij] = gamma[ij] * u[m + n + ij] + c0[ij];
        };
    }
    const SpepConstants sc = spep_constants(spec);
    sys.vi.c_bar = sc.c_bar;
    sys.vi.l_f = sc.l_f;
    return sys;
}

SpepReport check_spep_equilibrium(const PathSolution& sol, const SpatialMarketSpec& spec, double tol, double rho) {
    spec.validate();
    const std::size_t m = spec.m, n = spec.n;
    require_dim("check_spep_equilibrium: state", m + n, sol.p);
    const SpepConstants sc = spep_constants(spec);
    const double r = rho == 0.0 ? optimal_rho(sc.c_bar, sc.l_f) : rho;
    const double c = contraction_factor(r, sc.c_bar, sc.l_f);
    const double gmax = *std::max_element(spec.gamma.begin(), spec.gamma.end());
    const double slack = c < 1.0 ? gmax * c / (1.0 - c) : std::numeric_limits<double>::infinity();

    SpepReport rep;
    rep.step_worst.assign(static_cast<std::size_t>(sol.N + 1), 0.0);
    for (int k = 0; k <= sol.N; ++k) {
        const auto y = sol.x_at(k);
        const Vec a = spep_flows(spec, sol.u_at(k));
        const double res = k < static_cast<int>(sol.vi_residuals.size()) ? sol.vi_residuals[k] : 0.0;
        const double eps = tol + slack * res;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double aij = a[i * n + j];
                const double g = y[i] + spec.cost(i, j, aij) - y[m + j];
                const double ineq = -g - eps;
                if (ineq > 0.0) {
                    ++rep.violations;
                    if (ineq > rep.worst_inequality.amount)
                        rep.worst_inequality = {ineq, k, static_cast<int>(i), static_cast<int>(j)};
                }
                double excess = std::max(ineq, 0.0);
                if (aij > tol) {
                    const double eq = std::abs(g) - eps;
                    if (eq > 0.0) {
                        ++rep.violations;
                        if (eq > rep.worst_equality.amount)
                            rep.worst_equality = {eq, k, static_cast<int>(i), static_cast<int>(j)};
                    }
                    excess = std::max(excess, eq);
                }
                rep.step_worst[k] = std::max(rep.step_worst[k], excess);
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

std::size_t GameSpec::offset(std::size_t agent) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < agent; ++i) off += strategy_sets[i].dim();
    return off;
}

void GameSpec::validate() const {
    const std::size_t P = agents();
    if (P == 0) throw std::invalid_argument("game: need at least one agent");
    if (!gradient) throw std::invalid_argument("game: gradient is not set");
    if (!(c_bar > 0.0) || !(l_f >= c_bar)) throw std::invalid_argument("game: require 0 < c_bar <= l_f");
    if (!dynamics.empty()) require_dim("game: dynamics", P, dynamics.size());
    if (!p0.empty()) require_dim("game: p0", P, p0.size());
    grid.validate();
    jumps.validate(P);
}

Vec agent_gradient(const GameSpec& spec, std::size_t agent, std::span<const double> x, std::span<const double> u) {
    Vec g(spec.strategy_sets.at(agent).dim(), 0.0);
    spec.gradient(agent, x, u, g);
    return g;
}

GameSpec quadratic_game(const QuadraticGame& g, std::vector<AgentDynamics> dynamics, Vec p0, JumpMeasure jumps,
                        TimeGrid grid) {
    const std::size_t P = g.target.size();
    if (P == 0) throw std::invalid_argument("quadratic_game: no agents");
    require_dim("quadratic_game: weight", P, g.weight.size());
    require_dim("quadratic_game: box", P, g.box.size());
    if (!g.coupling.empty()) {
        require_dim("quadratic_game: coupling rows", P, g.coupling.size());
        for (const auto& row : g.coupling) require_dim("quadratic_game: coupling columns", P, row.size());
    }
    if (!g.state_coupling.empty()) require_dim("quadratic_game: state_coupling", P, g.state_coupling.size());

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
    for (std::size_t i = 0; i < P; ++i) {
        A(i, i) = g.weight[i];
        if (!g.coupling.empty())
            for (std::size_t j = 0; j < P; ++j) A(i, j) += g.coupling[i][j];
    }
    const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
    const double c_bar = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff();
    if (!(c_bar > 0.0))
        throw std::invalid_argument("quadratic_game: diag(weight) + coupling is not positive definite in its symmetric part");
    const double l_u = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues()(0);
    double l_x = 0.0;
    for (double s : g.state_coupling) l_x = std::max(l_x, std::abs(s));

    GameSpec spec;
    for (std::size_t i = 0; i < P; ++i)
        spec.strategy_sets.push_back(ConvexSet::box({g.box[i].first}, {g.box[i].second}));
    const Vec target = g.target, weight = g.weight, sc = g.state_coupling;
    const std::vector<Vec> coupling = g.coupling;
    spec.gradient = [=](std::size_t i, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        double v = weight[i] * (u[i] - target[i]);
        if (!coupling.empty())
            for (std::size_t j = 0; j < u.size(); ++j) v += coupling[i][j] * u[j];
        if (!sc.empty()) v -= sc[i] * x[i];
        out[0] = v;
    };
    spec.c_bar = c_bar;
    spec.l_f = std::max(l_u, l_x);
    spec.dynamics = std::move(dynamics);
    spec.p0 = p0.empty() ? Vec(P, 0.0) : std::move(p0);
    spec.jumps = std::move(jumps);
    spec.grid = grid;
    return spec;
}

CoupledSystem build_game(const GameSpec& spec, int screen_pairs, std::uint64_t seed) {
    spec.validate();
    const std::size_t P = spec.agents();
    std::vector<std::size_t> offs(P), dims(P);
    for (std::size_t i = 0; i < P; ++i) {
        offs[i] = spec.offset(i);
        dims[i] = spec.strategy_sets[i].dim();
    }
    const std::size_t q = offs.back() + dims.back();

    const AgentGradient grad = spec.gradient;
    FieldFn field = [grad, offs, dims](double, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        for (std::size_t i = 0; i < offs.size(); ++i) grad(i, x, u, out.subspan(offs[i], dims[i]));
    };
    const ConvexSet K = P == 1 ? spec.strategy_sets[0] : ConvexSet::product(spec.strategy_sets);
    const Vec x0 = spec.p0.empty() ? Vec(P, 0.0) : spec.p0;

    // Screen the declared modulus on random pairs of K.
    std::mt19937_64 rng(seed);
    Vec f1(q), f2(q);
    for (int k = 0; k < screen_pairs; ++k) {
        const Vec u1 = sample_point(K, rng), u2 = sample_point(K, rng);
        const double du2 = kernels::sum_sq_diff(u1, u2);
        if (du2 == 0.0) continue;
        std::fill(f1.begin(), f1.end(), 0.0);
        std::fill(f2.begin(), f2.end(), 0.0);
        field(0.0, x0, u1, f1);
        field(0.0, x0, u2, f2);
        double inner = 0.0;
        for (std::size_t i = 0; i < q; ++i) inner += (f1[i] - f2[i]) * (u1[i] - u2[i]);
        if (inner < spec.c_bar * du2 * (1.0 - 1e-9) - 1e-12)
            throw MonotonicityError("build_game: stacked gradient violates the declared modulus c_bar on a sampled pair",
                                    u1, u2);
        // Convexity of theta^i in u^i: the own gradient is monotone along u^i.
        for (std::size_t i = 0; i < P; ++i) {
            Vec mixed = u1;
            std::copy(u2.begin() + offs[i], u2.begin() + offs[i] + dims[i], mixed.begin() + offs[i]);
            const Vec g1 = agent_gradient(spec, i, x0, u1), g2 = agent_gradient(spec, i, x0, mixed);
            double own = 0.0;
            for (std::size_t c = 0; c < dims[i]; ++c) own += (g1[c] - g2[c]) * (u1[offs[i] + c] - mixed[offs[i] + c]);
            if (own < -1e-12)
                throw MonotonicityError("build_game: agent " + std::to_string(i) + " cost is not convex in its own strategy",
                                        u1, mixed);
        }
    }

    CoupledSystem sys{CoefficientSet{}, VIProblem{K, field, spec.c_bar, spec.l_f}, spec.grid, x0, spec.jumps};
    auto& cs = sys.coeffs;
    cs.p = P;
    cs.q = q;
    cs.l = P;
    std::vector<AgentDynamics> dyn = spec.dynamics.empty() ? std::vector<AgentDynamics>(P) : spec.dynamics;
    cs.drift = [dyn, offs, dims](double, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        for (std::size_t i = 0; i < dyn.size(); ++i)
            out[i] = dyn[i].drift_x * x[i] + dyn[i].drift_u * mean(u.subspan(offs[i], dims[i]));
    };
    cs.frac = [dyn](double, std::span<const double>, std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < dyn.size(); ++i) out[i] = dyn[i].frac;
    };
    cs.diffusion = [dyn](double, std::span<const double>, std::span<const double>, std::span<double> out) {
        const std::size_t P = dyn.size();
        for (std::size_t i = 0; i < P; ++i) out[i * P + i] = dyn[i].vol;
    };
    cs.jump = [dyn](double, std::span<const double>, std::span<const double>, std::span<const double> y,
                    std::span<double> out) {
        for (std::size_t i = 0; i < dyn.size(); ++i) out[i] = dyn[i].jump * y[i];
    };
    double lb = 0.0, kb = 0.0, ks = 0.0, kf = 0.0, jg = 0.0;
    for (const auto& d : dyn) {
        lb = std::max({lb, 2.0 * d.drift_x * d.drift_x, 2.0 * d.drift_u * d.drift_u});
        kb = std::max({kb, 3.0 * d.drift_x * d.drift_x, 3.0 * d.drift_u * d.drift_u});
        ks = std::max(ks, P * d.vol * d.vol);
        kf = std::max(kf, P * d.frac * d.frac);
        jg = std::max(jg, d.jump * d.jump);
    }
    double jump_mass = 0.0;
    for (const auto& a : spec.jumps.atoms) jump_mass += a.weight * kernels::dot(a.mark, a.mark);
    cs.constants = CoefficientConstants{floor_const(kb), floor_const(ks), floor_const(kf), floor_const(jg * jump_mass),
                                        floor_const(lb), kFloor,          kFloor,          kFloor};
    return sys;
}

NashReport verify_nash(const PathSolution& sol, const GameSpec& spec, int deviations, double tol, std::uint64_t seed) {
    if (deviations < 1) throw std::invalid_argument("verify_nash: deviations must be >= 1");
    spec.validate();
    const std::size_t P = spec.agents();
    std::mt19937_64 rng(seed);
    NashReport rep;
    rep.worst.assign(P, std::numeric_limits<double>::infinity());
    rep.step.assign(P, -1);
    for (int k = 0; k <= sol.N; ++k) {
        const auto x = sol.x_at(k);
        const auto u = sol.u_at(k);
        for (std::size_t i = 0; i < P; ++i) {
            const ConvexSet& Ki = spec.strategy_sets[i];
            const std::size_t off = spec.offset(i), d = Ki.dim();
            const Vec g = agent_gradient(spec, i, x, u);
            std::vector<Vec> cands;
            if (const auto* b = std::get_if<Box>(&Ki.descriptor()); b && d == 1) {
                if (std::isfinite(b->lo[0])) cands.push_back(b->lo);
                if (std::isfinite(b->hi[0])) cands.push_back(b->hi);
            }
            for (int s = 0; s < deviations; ++s) cands.push_back(sample_point(Ki, rng));
            for (const auto& v : cands) {
                double val = 0.0;
                for (std::size_t c = 0; c < d; ++c) val += g[c] * (v[c] - u[off + c]);
                if (val < rep.worst[i]) {
                    rep.worst[i] = val;
                    rep.step[i] = k;
                }
            }
        }
    }
    rep.certified = std::all_of(rep.worst.begin(), rep.worst.end(), [tol](double w) { return w >= -tol; });
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<Vec> cone_generators(const ConvexSet& cone) {
    if (!cone.is_cone()) throw std::invalid_argument("cone_generators: '" + cone.kind() + "' is not a catalog cone");
    const std::size_t q = cone.dim();
    std::vector<Vec> gens;
    const auto& d = cone.descriptor();
    if (std::holds_alternative<NonnegOrthant>(d)) {
        for (std::size_t i = 0; i < q; ++i) {
            Vec e(q, 0.0);
            e[i] = 1.0;
            gens.push_back(std::move(e));
        }
    } else if (const auto* t = std::get_if<TransportSet>(&d)) {
        const double s = 1.0 / std::sqrt(3.0);
        for (std::size_t i = 0; i < t->m; ++i) {
            for (std::size_t j = 0; j < t->n; ++j) {
                Vec r(q, 0.0);
                r[i] = s;
                r[t->m + j] = s;
                r[t->flow_offset() + i * t->n + j] = s;
                gens.push_back(std::move(r));
            }
        }
    } else if (const auto* p = std::get_if<Product>(&d)) {
        std::size_t off = 0;
        for (const auto& f : p->factors) {
            for (const auto& g : cone_generators(f)) {
                Vec e(q, 0.0);
                std::copy(g.begin(), g.end(), e.begin() + static_cast<std::ptrdiff_t>(off));
                gens.push_back(std::move(e));
            }
            off += f.dim();
        }
    }
    return gens;
}

ComplementarityResult complementarity_check(std::span<const double> u, std::span<const double> f, const ConvexSet& cone) {
    require_dim("complementarity_check: u", cone.dim(), u.size());
    require_dim("complementarity_check: F", cone.dim(), f.size());
    const std::vector<Vec> gens = cone_generators(cone);
    ComplementarityResult r;
    const Vec pu = project(cone, u);
    r.primal_res = std::sqrt(kernels::sum_sq_diff(u, pu));
    for (const auto& g : gens) r.dual_res = std::max(r.dual_res, -kernels::dot(g, f));
    r.orth_res = std::abs(kernels::dot(u, f));
    return r;
}

}  // namespace sfdvi
