#include "sfdvi/convex_sets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sfdvi/kernels.hpp"

namespace sfdvi {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double norm(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::size_t compute_dim(const ConvexSet::Descriptor& d) {
    return std::visit(overloaded{
                          [](const Box& b) { return b.lo.size(); },
                          [](const NonnegOrthant& o) { return o.dim; },
                          [](const Ball& b) { return b.center.size(); },
                          [](const HalfspaceIntersection& h) { return h.interior.size(); },
                          [](const TransportSet& t) { return t.dim(); },
                          [](const Product& p) {
                              std::size_t s = 0;
                              for (const auto& f : p.factors) s += f.dim();
                              return s;
                          },
                      },
                      d);
}

void validate(const ConvexSet::Descriptor& d) {
    std::visit(overloaded{
                   [](const Box& b) {
                       if (b.lo.size() != b.hi.size() || b.lo.empty())
                           throw std::invalid_argument("box: lo and hi must be nonempty and equal length");
                       for (std::size_t i = 0; i < b.lo.size(); ++i) {
                           if (std::isnan(b.lo[i]) || std::isnan(b.hi[i]) || b.lo[i] > b.hi[i] ||
                               b.lo[i] == kInf || b.hi[i] == -kInf)
                               throw std::invalid_argument("box: require lo <= hi componentwise (index " +
                                                           std::to_string(i) + ")");
                       }
                   },
                   [](const NonnegOrthant& o) {
                       if (o.dim == 0) throw std::invalid_argument("orthant: dim must be >= 1");
                   },
                   [](const Ball& b) {
                       if (b.center.empty() || !all_finite(b.center))
                           throw std::invalid_argument("ball: center must be nonempty and finite");
                       if (!(b.radius > 0.0) || !std::isfinite(b.radius))
                           throw std::invalid_argument("ball: radius must be positive and finite");
                   },
                   [](const HalfspaceIntersection& h) {
                       const std::size_t q = h.interior.size();
                       if (q == 0 || h.normals.size() != h.offsets.size() || h.normals.empty())
                           throw std::invalid_argument("halfspaces: need matching nonempty normals/offsets and an interior point");
                       for (std::size_t i = 0; i < h.normals.size(); ++i) {
                           if (h.normals[i].size() != q) throw DimensionError("halfspaces: normal", q, h.normals[i].size());
                           if (!(norm(h.normals[i]) > 0.0)) throw std::invalid_argument("halfspaces: zero normal");
                           if (!(kernels::dot(h.normals[i], h.interior) < h.offsets[i]))
                               throw std::invalid_argument("halfspaces: supplied point is not strictly interior to constraint " +
                                                           std::to_string(i));
                       }
                   },
                   [](const TransportSet& t) {
                       if (t.m == 0 || t.n == 0) throw std::invalid_argument("transport: m and n must be >= 1");
                       if (!(t.cap > 0.0)) throw std::invalid_argument("transport: cap must be positive");
                   },
                   [](const Product& p) {
                       if (p.factors.empty()) throw std::invalid_argument("product: no factors");
                   },
               },
               d);
}

// Affine part of the transport set: minimize |A'-a|^2 + |B'-b|^2 + |C'-c|^2
// subject to A' = rowsum(C'), B' = colsum(C'). The normal equations
//   C'_ij + R_i + S_j = r_ij,  r = c + a_i + b_j
// decouple through row, column and grand totals.
void project_transport_affine(const TransportSet& t, std::span<double> v) {
    const std::size_t m = t.m, n = t.n, off = t.flow_offset();
    std::vector<double> rsum(m, 0.0), csum(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double r = v[off + i * n + j] + v[i] + v[m + j];
            v[off + i * n + j] = r;
            rsum[i] += r;
            csum[j] += r;
            total += r;
        }
    }
    const double tot = total / static_cast<double>(1 + m + n);
    for (std::size_t i = 0; i < m; ++i) rsum[i] = (rsum[i] - tot) / static_cast<double>(1 + n);
    for (std::size_t j = 0; j < n; ++j) csum[j] = (csum[j] - tot) / static_cast<double>(1 + m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[off + i * n + j] -= rsum[i] + csum[j];
    for (std::size_t i = 0; i < m; ++i) v[i] = rsum[i];
    for (std::size_t j = 0; j < n; ++j) v[m + j] = csum[j];
}

void project_transport_flows(const TransportSet& t, std::span<double> v) {
    for (std::size_t k = t.flow_offset(); k < t.dim(); ++k) v[k] = std::clamp(v[k], 0.0, t.cap);
}

void project_halfspace(std::span<const double> a, double b, std::span<double> v) {
    const double excess = kernels::dot(a, v) - b;
    if (excess > 0.0) kernels::axpy(-excess / kernels::dot(a, a), a, v);
}

// Dykstra's cyclic projection onto the intersection of `count` sets, where
// proj(j, x) projects x in place onto set j.
template <class Proj>
Vec dykstra(std::span<const double> v, std::size_t count, Proj&& proj, const DykstraOptions& opts,
            const char* what) {
    const std::size_t q = v.size();
    Vec x(v.begin(), v.end());
    std::vector<Vec> incr(count, Vec(q, 0.0));
    Vec prev(q), y(q);
    double change = kInf;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        prev = x;
        // A sweep can bring x back to where it started while the corrections
        // still move, so they count towards the change too.
        double incr_change = 0.0;
        for (std::size_t j = 0; j < count; ++j) {
            for (std::size_t k = 0; k < q; ++k) y[k] = x[k] + incr[j][k];
            proj(j, std::span<double>(y));
            for (std::size_t k = 0; k < q; ++k) {
                const double next = x[k] + incr[j][k] - y[k];
                incr_change += (next - incr[j][k]) * (next - incr[j][k]);
                incr[j][k] = next;
            }
            x.swap(y);
        }
        change = std::sqrt(kernels::sum_sq_diff(x, prev) + incr_change);
        if (!std::isfinite(change)) throw NumericError(std::string(what) + ": non-finite iterate", change, sweep);
        if (change <= opts.tol) return x;
    }
    throw NumericError(std::string(what) + ": Dykstra sweep budget exhausted, last change " + std::to_string(change),
                       change, opts.max_sweeps);
}

void project_into(const ConvexSet& set, std::span<const double> v, std::span<double> out, const DykstraOptions& opts);

void project_into(const ConvexSet& set, std::span<const double> v, std::span<double> out, const DykstraOptions& opts) {
    std::visit(overloaded{
                   [&](const Box& b) { kernels::clamp(v, b.lo, b.hi, out); },
                   [&](const NonnegOrthant&) { kernels::relu(v, out); },
                   [&](const Ball& b) {
                       double d2 = 0.0;
                       for (std::size_t i = 0; i < v.size(); ++i) d2 += (v[i] - b.center[i]) * (v[i] - b.center[i]);
                       const double d = std::sqrt(d2);
                       const double s = d > b.radius ? b.radius / d : 1.0;
                       for (std::size_t i = 0; i < v.size(); ++i) out[i] = b.center[i] + s * (v[i] - b.center[i]);
                   },
                   [&](const HalfspaceIntersection& h) {
                       bool inside = true;
                       for (std::size_t i = 0; i < h.normals.size() && inside; ++i)
                           inside = kernels::dot(h.normals[i], v) <= h.offsets[i];
                       if (inside) {
                           std::copy(v.begin(), v.end(), out.begin());
                           return;
                       }
                       if (h.normals.size() == 1) {
                           std::copy(v.begin(), v.end(), out.begin());
                           project_halfspace(h.normals[0], h.offsets[0], out);
                           return;
                       }
                       Vec r = dykstra(
                           v, h.normals.size(),
                           [&](std::size_t j, std::span<double> x) { project_halfspace(h.normals[j], h.offsets[j], x); },
                           opts, "halfspace projection");
                       std::copy(r.begin(), r.end(), out.begin());
                   },
                   [&](const TransportSet& t) {
                       Vec r = dykstra(
                           v, 2,
                           [&](std::size_t j, std::span<double> x) {
                               if (j == 0)
                                   project_transport_affine(t, x);
                               else
                                   project_transport_flows(t, x);
                           },
                           opts, "transport projection");
                       std::copy(r.begin(), r.end(), out.begin());
                   },
                   [&](const Product& p) {
                       std::size_t off = 0;
                       for (const auto& f : p.factors) {
                           project_into(f, v.subspan(off, f.dim()), out.subspan(off, f.dim()), opts);
                           off += f.dim();
                       }
                   },
               },
               set.descriptor());
}

}  // namespace

ConvexSet::ConvexSet(Descriptor d) : desc_(std::move(d)) {
    validate(desc_);
    dim_ = compute_dim(desc_);
}

ConvexSet ConvexSet::box(Vec lo, Vec hi) { return ConvexSet(Box{std::move(lo), std::move(hi)}); }
ConvexSet ConvexSet::orthant(std::size_t dim) { return ConvexSet(NonnegOrthant{dim}); }
ConvexSet ConvexSet::ball(Vec center, double radius) { return ConvexSet(Ball{std::move(center), radius}); }
ConvexSet ConvexSet::halfspaces(std::vector<Vec> normals, Vec offsets, Vec interior) {
    return ConvexSet(HalfspaceIntersection{std::move(normals), std::move(offsets), std::move(interior)});
}
ConvexSet ConvexSet::transport(std::size_t m, std::size_t n, double cap) { return ConvexSet(TransportSet{m, n, cap}); }
ConvexSet ConvexSet::product(std::vector<ConvexSet> factors) { return ConvexSet(Product{std::move(factors)}); }

std::string ConvexSet::kind() const {
    return std::visit(overloaded{
                          [](const Box&) { return std::string("box"); },
                          [](const NonnegOrthant&) { return std::string("orthant"); },
                          [](const Ball&) { return std::string("ball"); },
                          [](const HalfspaceIntersection&) { return std::string("halfspaces"); },
                          [](const TransportSet&) { return std::string("transport"); },
                          [](const Product&) { return std::string("product"); },
                      },
                      desc_);
}

bool ConvexSet::is_cone() const {
    return std::visit(overloaded{
                          [](const NonnegOrthant&) { return true; },
                          [](const TransportSet& t) { return std::isinf(t.cap); },
                          [](const Product& p) {
                              return std::all_of(p.factors.begin(), p.factors.end(),
                                                 [](const ConvexSet& f) { return f.is_cone(); });
                          },
                          [](const auto&) { return false; },
                      },
                      desc_);
}

Vec project(const ConvexSet& set, std::span<const double> v, const DykstraOptions& opts) {
    require_dim("project", set.dim(), v.size());
    Vec out(v.size());
    project_into(set, v, out, opts);
    return out;
}

bool contains(const ConvexSet& set, std::span<const double> v, double tol) {
    require_dim("contains", set.dim(), v.size());
    if (tol < 0.0) throw std::invalid_argument("contains: tol must be >= 0");
    return std::visit(overloaded{
                          [&](const Box& b) {
                              for (std::size_t i = 0; i < v.size(); ++i)
                                  if (!(v[i] >= b.lo[i] - tol && v[i] <= b.hi[i] + tol)) return false;
                              return true;
                          },
                          [&](const NonnegOrthant&) {
                              return std::all_of(v.begin(), v.end(), [&](double x) { return x >= -tol; });
                          },
                          [&](const Ball& b) {
                              double d2 = 0.0;
                              for (std::size_t i = 0; i < v.size(); ++i) d2 += (v[i] - b.center[i]) * (v[i] - b.center[i]);
                              return std::sqrt(d2) <= b.radius + tol;
                          },
                          [&](const HalfspaceIntersection& h) {
                              for (std::size_t i = 0; i < h.normals.size(); ++i) {
                                  const double viol = (kernels::dot(h.normals[i], v) - h.offsets[i]) / norm(h.normals[i]);
                                  if (!(viol <= tol)) return false;
                              }
                              return true;
                          },
                          [&](const TransportSet& t) {
                              const std::size_t off = t.flow_offset();
                              for (std::size_t i = 0; i < t.m; ++i) {
                                  double row = 0.0;
                                  for (std::size_t j = 0; j < t.n; ++j) {
                                      const double c = v[off + i * t.n + j];
                                      if (!(c >= -tol && c <= t.cap + tol)) return false;
                                      row += c;
                                  }
                                  if (!(std::abs(v[i] - row) <= tol)) return false;
                              }
                              for (std::size_t j = 0; j < t.n; ++j) {
                                  double col = 0.0;
                                  for (std::size_t i = 0; i < t.m; ++i) col += v[off + i * t.n + j];
                                  if (!(std::abs(v[t.m + j] - col) <= tol)) return false;
                              }
                              return true;
                          },
                          [&](const Product& p) {
                              std::size_t off = 0;
                              for (const auto& f : p.factors) {
                                  if (!contains(f, v.subspan(off, f.dim()), tol)) return false;
                                  off += f.dim();
                              }
                              return true;
                          },
                      },
                      set.descriptor());
}

namespace {

// Projected-gradient ascent of <x, y> over a set without a closed-form
// support function. Returns early with +inf as soon as a feasible point
// exceeds `early_exit`, which already decides polar membership.
double support_by_ascent(const ConvexSet& set, std::span<const double> y, const DykstraOptions& opts,
                         double early_exit) {
    const double ny = norm(y);
    if (ny == 0.0) return 0.0;
    Vec x = project(set, Vec(set.dim(), 0.0), opts);
    Vec trial(set.dim());
    double step = 1.0 / ny;
    for (int it = 0; it < 200; ++it) {
        for (std::size_t k = 0; k < x.size(); ++k) trial[k] = x[k] + step * y[k];
        Vec next = project(set, trial, opts);
        const double value = kernels::dot(next, y);
        if (value > early_exit) return kInf;
        // Stationarity: next = P(next + s y) certifies y in the normal cone at next.
        for (std::size_t k = 0; k < x.size(); ++k) trial[k] = next[k] + step * y[k];
        const Vec again = project(set, trial, opts);
        const double resid = std::sqrt(kernels::sum_sq_diff(again, next)) / (step * ny);
        x = std::move(next);
        if (resid <= 1e-9) return value;
        step *= 2.0;
    }
    throw NumericError("support: projected-gradient ascent did not reach a stationary point", kInf, 200);
}

}  // namespace

double support(const ConvexSet& set, std::span<const double> y, const DykstraOptions& opts) {
    require_dim("support", set.dim(), y.size());
    return std::visit(overloaded{
                          [&](const Box& b) {
                              double s = 0.0;
                              for (std::size_t i = 0; i < y.size(); ++i) {
                                  if (y[i] > 0.0)
                                      s += y[i] * b.hi[i];
                                  else if (y[i] < 0.0)
                                      s += y[i] * b.lo[i];
                              }
                              return s;
                          },
                          [&](const NonnegOrthant&) {
                              return std::any_of(y.begin(), y.end(), [](double c) { return c > 0.0; }) ? kInf : 0.0;
                          },
                          [&](const Ball& b) { return kernels::dot(b.center, y) + b.radius * norm(y); },
                          [&](const HalfspaceIntersection&) { return support_by_ascent(set, y, opts, kInf); },
                          [&](const TransportSet& t) {
                              // The set is the image of [0, cap]^{mn} under C -> (rowsum, colsum, C).
                              double s = 0.0;
                              for (std::size_t i = 0; i < t.m; ++i) {
                                  for (std::size_t j = 0; j < t.n; ++j) {
                                      const double g = y[i] + y[t.m + j] + y[t.flow_offset() + i * t.n + j];
                                      if (g > 0.0) s += std::isinf(t.cap) ? kInf : g * t.cap;
                                  }
                              }
                              return s;
                          },
                          [&](const Product& p) {
                              double s = 0.0;
                              std::size_t off = 0;
                              for (const auto& f : p.factors) {
                                  s += support(f, y.subspan(off, f.dim()), opts);
                                  off += f.dim();
                              }
                              return s;
                          },
                      },
                      set.descriptor());
}

bool polar_contains(const ConvexSet& set, std::span<const double> y, double tol) {
    require_dim("polar_contains", set.dim(), y.size());
    if (!contains(set, Vec(set.dim(), 0.0), 1e-12))
        throw std::invalid_argument("polar_contains: set does not contain the origin");
    if (std::all_of(y.begin(), y.end(), [](double c) { return c == 0.0; })) return true;
    if (std::holds_alternative<NonnegOrthant>(set.descriptor()))
        return std::all_of(y.begin(), y.end(), [&](double c) { return c <= tol; });
    if (std::holds_alternative<HalfspaceIntersection>(set.descriptor()))
        return support_by_ascent(set, y, {}, 1.0 + tol) <= 1.0 + tol;
    return support(set, y) <= 1.0 + tol;
}

ConvexSet scaled(const ConvexSet& set, double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("scaled: factor must be positive and finite");
    auto mul = [s](Vec v) {
        for (auto& c : v) c *= s;
        return v;
    };
    return std::visit(overloaded{
                          [&](const Box& b) { return ConvexSet::box(mul(b.lo), mul(b.hi)); },
                          [&](const NonnegOrthant& o) { return ConvexSet::orthant(o.dim); },
                          [&](const Ball& b) { return ConvexSet::ball(mul(b.center), b.radius * s); },
                          [&](const HalfspaceIntersection& h) {
                              return ConvexSet::halfspaces(h.normals, mul(h.offsets), mul(h.interior));
                          },
                          [&](const TransportSet& t) { return ConvexSet::transport(t.m, t.n, t.cap * s); },
                          [&](const Product& p) {
                              std::vector<ConvexSet> fs;
                              for (const auto& f : p.factors) fs.push_back(scaled(f, s));
                              return ConvexSet::product(std::move(fs));
                          },
                      },
                      set.descriptor());
}

double mosco_probe(const SetFamily& family, int n, std::span<const Vec> probes, const DykstraOptions& opts) {
    if (probes.empty()) throw std::invalid_argument("mosco_probe: empty probe list");
    const ConvexSet kn = family.at(n);
    require_dim("mosco_probe: family member", family.limit_set.dim(), kn.dim());
    double gap = 0.0;
    for (const auto& v : probes) {
        require_dim("mosco_probe: probe", kn.dim(), v.size());
        const Vec a = project(kn, v, opts);
        const Vec b = project(family.limit_set, v, opts);
        gap = std::max(gap, std::sqrt(kernels::sum_sq_diff(a, b)));
    }
    return gap;
}

namespace families {

SetFamily nested_box(std::size_t dim, double hi) {
    SetFamily f{
        [dim, hi](const Vec& mu) { return ConvexSet::box(Vec(dim, 0.0), Vec(dim, hi * (1.0 + mu.at(0)))); },
        ConvexSet::box(Vec(dim, 0.0), Vec(dim, hi)),
        [](int n) { return Vec{1.0 / n}; },
        "box",
    };
    return f;
}

SetFamily nested_ball(std::size_t dim) {
    return SetFamily{
        [dim](const Vec& mu) { return ConvexSet::ball(Vec(dim, 0.0), 1.0 + mu.at(0)); },
        ConvexSet::ball(Vec(dim, 0.0), 1.0),
        [](int n) { return Vec{1.0 / n}; },
        "ball",
    };
}

SetFamily dyadic_ball(std::size_t dim) {
    return SetFamily{
        [dim](const Vec& mu) { return ConvexSet::ball(Vec(dim, 0.0), 1.0 + mu.at(0)); },
        ConvexSet::ball(Vec(dim, 0.0), 1.0),
        [](int n) { return Vec{std::ldexp(1.0, -n)}; },
        "ball_dyadic",
    };
}

SetFamily capped_transport(std::size_t m, std::size_t n, double cap) {
    return SetFamily{
        [m, n, cap](const Vec& mu) { return ConvexSet::transport(m, n, cap * (1.0 + mu.at(0))); },
        ConvexSet::transport(m, n, cap),
        [](int k) { return Vec{1.0 / k}; },
        "transport_cap",
    };
}

SetFamily scaled(ConvexSet set) {
    return SetFamily{
        [set](const Vec& mu) { return sfdvi::scaled(set, 1.0 + mu.at(0)); },
        set,
        [](int n) { return Vec{1.0 / n}; },
        "scaled",
    };
}

SetFamily constant(ConvexSet set) {
    return SetFamily{
        [set](const Vec&) { return set; },
        set,
        [](int) { return Vec{0.0}; },
        "constant",
    };
}

}  // namespace families

}  // namespace sfdvi
