#include "sfdvi/coefficient_registry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sfdvi {
namespace {

constexpr double kFloor = 1e-12;

double param(const Vec& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; }

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double c : v) s += c;
    return s / static_cast<double>(v.size());
}

double floor_const(double v) { return std::max(v, kFloor); }

}  // namespace

const std::vector<std::string>& coefficient_family_names() {
    static const std::vector<std::string> names{"zero", "affine", "saturating"};
    return names;
}

const std::vector<std::string>& field_family_names() {
    static const std::vector<std::string> names{"affine_field"};
    return names;
}

CoefficientSet make_coefficients(const NamedRef& ref, std::size_t p, std::size_t q, std::size_t l,
                                 const JumpMeasure& jm, const FamilyShift& shift) {
    CoefficientSet cs;
    cs.p = p;
    cs.q = q;
    cs.l = l;
    if (ref.name == "zero") {
        cs.constants = CoefficientConstants{kFloor, kFloor, kFloor, kFloor, kFloor, kFloor, kFloor, kFloor};
        if (shift.drift != 0.0) {
            const double b0 = shift.drift;
            cs.drift = [b0](double, std::span<const double>, std::span<const double>, std::span<double> out) {
                std::fill(out.begin(), out.end(), b0);
            };
            cs.constants.K_b = floor_const(p * b0 * b0);
        }
        if (shift.frac != 0.0) {
            const double f0 = shift.frac;
            cs.frac = [f0](double, std::span<const double>, std::span<const double>, std::span<double> out) {
                std::fill(out.begin(), out.end(), f0);
            };
            cs.constants.K_sigma1 = floor_const(p * f0 * f0);
        }
        return cs;
    }
    if (ref.name != "affine" && ref.name != "saturating")
        throw std::invalid_argument("unknown coefficient family '" + ref.name + "'");

    const double b0 = param(ref.params, 0) + shift.drift, bx = param(ref.params, 1), bu = param(ref.params, 2);
    const double s0 = param(ref.params, 3), sx = param(ref.params, 4);
    const double g0 = param(ref.params, 5), gx = param(ref.params, 6);
    const double f0 = param(ref.params, 7) + shift.frac, fx = param(ref.params, 8);
    const bool sat = ref.name == "saturating";
    auto phi = [sat](double v) { return sat ? std::tanh(v) : v; };

    cs.drift = [=](double, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        const double ub = phi(mean(u));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = b0 + bx * phi(x[i]) + bu * ub;
    };
    if (l > 0 && (s0 != 0.0 || sx != 0.0)) {
        cs.diffusion = [=](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
            for (std::size_t i = 0; i < p; ++i) out[i * l + i % l] = s0 + sx * phi(x[i]);
        };
    }
    if (g0 != 0.0 || gx != 0.0) {
        cs.jump = [=](double, std::span<const double> x, std::span<const double>, std::span<const double> y,
                      std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = (g0 + gx * phi(x[i])) * y[i];
        };
    }
    if (f0 != 0.0 || fx != 0.0) {
        cs.frac = [=](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = f0 + fx * phi(x[i]);
        };
    }

    const double pq = static_cast<double>(p) / static_cast<double>(q);
    double jump_mass = 0.0;  // sum_i w_i |y_i|^2
    for (const auto& a : jm.atoms) {
        double n2 = 0.0;
        for (double c : a.mark) n2 += c * c;
        jump_mass += a.weight * n2;
    }
    auto& k = cs.constants;
    k.L_b = floor_const(std::max(2.0 * bx * bx, 2.0 * bu * bu * pq));
    k.K_b = floor_const(std::max({3.0 * p * b0 * b0, 3.0 * bx * bx, 3.0 * bu * bu * pq}));
    k.L_sigma = floor_const(sx * sx);
    k.K_sigma = floor_const(std::max(2.0 * p * s0 * s0, 2.0 * sx * sx));
    k.L_sigma1 = floor_const(fx * fx);
    k.K_sigma1 = floor_const(std::max(2.0 * p * f0 * f0, 2.0 * fx * fx));
    k.L_G = floor_const(gx * gx * jump_mass);
    k.K_G = floor_const(2.0 * jump_mass * std::max(p * g0 * g0, gx * gx));
    return cs;
}

FieldModel make_field(const NamedRef& ref, std::size_t p, std::size_t q, const FamilyShift& shift) {
    if (ref.name != "affine_field") throw std::invalid_argument("unknown field family '" + ref.name + "'");
    const double kappa = param(ref.params, 0), omega = param(ref.params, 1), beta = param(ref.params, 2);
    if (!(kappa > 0.0)) throw std::invalid_argument("affine_field: kappa must be positive (strong monotonicity)");
    Vec c(q, 0.0);
    if (ref.params.size() == 4) {
        std::fill(c.begin(), c.end(), ref.params[3]);
    } else if (ref.params.size() > 4) {
        if (ref.params.size() != 3 + q)
            throw std::invalid_argument("affine_field: expected 1 or q = " + std::to_string(q) + " offsets");
        std::copy(ref.params.begin() + 3, ref.params.end(), c.begin());
    }
    for (auto& ci : c) ci += shift.field;

    FieldModel fm;
    fm.field = [=](double, std::span<const double> x, std::span<const double> u, std::span<double> out) {
        const double xb = mean(x);
        for (std::size_t i = 0; i < q; ++i) {
            const double skew = q >= 3 ? u[(i + 1) % q] - u[(i + q - 1) % q] : 0.0;
            out[i] = kappa * u[i] + omega * skew + beta * xb + c[i];
        }
    };
    const double l_u = q >= 3 ? std::sqrt(kappa * kappa + 4.0 * omega * omega) : kappa;
    const double l_x = p > 0 ? std::abs(beta) * std::sqrt(static_cast<double>(q) / static_cast<double>(p)) : 0.0;
    fm.c_bar = kappa;
    fm.l_f = std::max(l_u, l_x);
    return fm;
}

}  // namespace sfdvi
