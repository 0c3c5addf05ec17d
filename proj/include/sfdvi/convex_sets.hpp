#pragma once

// Closed convex subsets of R^q with exact Euclidean projections.
//
// Box, NonnegOrthant and Ball project in closed form. HalfspaceIntersection
// and TransportSet are intersections of elementary sets and are projected by
// Dykstra's method, which converges to the true projection (plain alternating
// projections only reach some point of the intersection).

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sfdvi/errors.hpp"

namespace sfdvi {

struct DykstraOptions {
    double tol = 1e-10;
    int max_sweeps = 10000;
};

class ConvexSet;

struct Box {
    Vec lo;
    Vec hi;
};

struct NonnegOrthant {
    std::size_t dim = 0;
};

struct Ball {
    Vec center;
    double radius = 1.0;
};

/// { v : <normals[i], v> <= offsets[i] for all i }, nonempty by the strictly
/// interior point supplied at construction.
struct HalfspaceIntersection {
    std::vector<Vec> normals;
    Vec offsets;
    Vec interior;
};

/// Feasible supply/demand/flow triples of an m-by-n transportation network in
/// stacked coordinates (A, B, C) with A in R^m, B in R^n, C in R^{m x n}
/// row-major:  C_ij >= 0, A_i = sum_j C_ij, B_j = sum_i C_ij.
/// A finite `cap` adds C_ij <= cap (a bounded, non-conic variant).
struct TransportSet {
    std::size_t m = 1;
    std::size_t n = 1;
    double cap = std::numeric_limits<double>::infinity();

    std::size_t dim() const { return m + n + m * n; }
    std::size_t flow_offset() const { return m + n; }
};

struct Product {
    std::vector<ConvexSet> factors;
};

class ConvexSet {
public:
    using Descriptor = std::variant<Box, NonnegOrthant, Ball, HalfspaceIntersection, TransportSet, Product>;

    /// Validates the descriptor; throws std::invalid_argument on an empty,
    /// non-closed or inconsistent description.
    explicit ConvexSet(Descriptor d);

    static ConvexSet box(Vec lo, Vec hi);
    static ConvexSet orthant(std::size_t dim);
    static ConvexSet ball(Vec center, double radius);
    static ConvexSet halfspaces(std::vector<Vec> normals, Vec offsets, Vec interior);
    static ConvexSet transport(std::size_t m, std::size_t n,
                               double cap = std::numeric_limits<double>::infinity());
    static ConvexSet product(std::vector<ConvexSet> factors);

    std::size_t dim() const { return dim_; }
    const Descriptor& descriptor() const { return desc_; }
    std::string kind() const;

    /// True for sets closed under nonnegative scaling (orthant, uncapped
    /// transport set, products of those).
    bool is_cone() const;

private:
    Descriptor desc_;
    std::size_t dim_ = 0;
};

/// Euclidean projection. Throws DimensionError on size mismatch and
/// NumericError (carrying the last sweep change) if Dykstra runs out of sweeps.
Vec project(const ConvexSet& set, std::span<const double> v, const DykstraOptions& opts = {});

/// Every defining constraint violated by at most `tol`.
bool contains(const ConvexSet& set, std::span<const double> v, double tol);

/// sup_{x in set} <x, y>; +infinity when unbounded in direction y.
double support(const ConvexSet& set, std::span<const double> y, const DykstraOptions& opts = {});

/// Membership of y in the polar set { y : <x, y> <= 1 for all x in set }.
/// Requires 0 in set (std::invalid_argument otherwise).
bool polar_contains(const ConvexSet& set, std::span<const double> y, double tol);

/// The set s K = { s v : v in K }, s > 0. For K containing the origin the
/// family s -> s K is nested increasing in s.
ConvexSet scaled(const ConvexSet& set, double s);

/// A one-parameter family n -> K_{mu_n} with its limit set. All members
/// contain the origin and share one ambient dimension.
struct SetFamily {
    std::function<ConvexSet(const Vec& mu)> parameter_to_set;
    ConvexSet limit_set;
    std::function<Vec(int n)> sequence;
    std::string name;

    ConvexSet at(int n) const { return parameter_to_set(sequence(n)); }
};

/// max over probes of |P_{K_n}(v) - P_{K_limit}(v)|.
double mosco_probe(const SetFamily& family, int n, std::span<const Vec> probes,
                   const DykstraOptions& opts = {});

namespace families {

/// [0, (1 + 1/n) hi]^dim shrinking to [0, hi]^dim.
SetFamily nested_box(std::size_t dim, double hi = 1.0);

/// Balls at the origin of radius 1 + 1/n shrinking to the unit ball.
SetFamily nested_ball(std::size_t dim);

/// Balls at the origin of radius 1 + 2^-n shrinking to the unit ball.
SetFamily dyadic_ball(std::size_t dim);

/// Transport sets with flow cap (1 + 1/n) cap shrinking to flow cap `cap`.
SetFamily capped_transport(std::size_t m, std::size_t n, double cap);

/// (1 + 1/n) K shrinking to K.
SetFamily scaled(ConvexSet set);

/// Constant family K_n = K.
SetFamily constant(ConvexSet set);

}  // namespace families

}  // namespace sfdvi
