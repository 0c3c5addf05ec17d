#pragma once

// Named builtin coefficient and VI-field families, referenced from scenario
// files by name plus a parameter vector. Missing trailing parameters are 0.
//
// Coefficient families (state x in R^p, control u in R^q, xbar/ubar = means):
//   "zero"        all coefficients vanish
//   "affine"      params [b0, bx, bu, s0, sx, g0, gx, f0, fx]
//                 b_i      = b0 + bx x_i + bu ubar
//                 sigma_ij = (s0 + sx x_i) if j == i mod l, else 0
//                 G_i      = (g0 + gx x_i) y_i
//                 sigma1_i = f0 + fx x_i
//   "saturating"  same parameters with x_i -> tanh(x_i), ubar -> tanh(ubar)
//
// Field families (F : (t, x, u) -> R^q):
//   "affine_field" params [kappa, omega, beta, c_1, ..., c_q]
//                  F_i = kappa u_i + omega (u_{i+1} - u_{i-1}) + beta xbar + c_i
//                  (indices cyclic; a single c broadcasts). The omega part is
//                  skew, so the monotonicity modulus is exactly kappa.

#include <string>
#include <vector>

#include "sfdvi/sfde_engine.hpp"
#include "sfdvi/svi_solver.hpp"

namespace sfdvi {

struct NamedRef {
    std::string name;
    Vec params;
};

/// Shift applied to a named family: b0 += drift, f0 += frac, field c += field.
struct FamilyShift {
    double drift = 0.0;
    double frac = 0.0;
    double field = 0.0;
};

const std::vector<std::string>& coefficient_family_names();
const std::vector<std::string>& field_family_names();

/// Builds the coefficient set with Lipschitz/growth constants derived from the
/// parameters (squared-norm form; zero constants are floored at 1e-12). `jm`
/// enters the jump constants. Throws std::invalid_argument on an unknown name.
CoefficientSet make_coefficients(const NamedRef& ref, std::size_t p, std::size_t q, std::size_t l,
                                 const JumpMeasure& jm, const FamilyShift& shift = {});

struct FieldModel {
    FieldFn field;
    double c_bar = 0.0;  // analytic monotonicity modulus in u
    double l_f = 0.0;    // analytic Lipschitz constant in (x, u)
};

FieldModel make_field(const NamedRef& ref, std::size_t p, std::size_t q, const FamilyShift& shift = {});

}  // namespace sfdvi
