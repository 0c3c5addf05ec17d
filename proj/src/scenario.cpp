#include "sfdvi/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sfdvi/kernels.hpp"
#include "sfdvi/stability_lab.hpp"
#include "sfdvi/svi_solver.hpp"

namespace sfdvi {

using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string join_issues(const std::vector<std::string>& issues) {
    std::string s = "invalid scenario:";
    for (const auto& i : issues) s += "\n  " + i;
    return s;
}

std::string key(const std::string& path, const std::string& k) { return path.empty() ? k : path + "." + k; }

std::string interval_text(double hi) { return "(0, " + format_double(hi) + ")"; }

// Typed access with error collection. Every getter records a problem under
// its key path and returns a harmless fallback so parsing can continue.
class Reader {
public:
    std::vector<std::string> errors;

    void error(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    bool object(const json& j, const std::string& path) {
        if (j.is_object()) return true;
        error(path, "expected an object");
        return false;
    }

    void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
                error(key(path, it.key()), "unknown key");
        }
    }

    const json* find(const json& obj, const char* k) const {
        auto it = obj.find(k);
        return it == obj.end() ? nullptr : &*it;
    }

    double num(const json& obj, const std::string& path, const char* k, std::optional<double> def) {
        const json* v = find(obj, k);
        if (!v) {
            if (!def) error(key(path, k), "missing required number");
            return def.value_or(0.0);
        }
        return as_num(*v, key(path, k));
    }

    double as_num(const json& v, const std::string& path) {
        if (!v.is_number()) {
            error(path, "expected a number, got " + std::string(v.type_name()));
            return 0.0;
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            error(path, "must be finite");
            return 0.0;
        }
        return d;
    }

    std::optional<double> opt_num(const json& obj, const std::string& path, const char* k) {
        if (!find(obj, k)) return std::nullopt;
        return num(obj, path, k, 0.0);
    }

    long long integer(const json& obj, const std::string& path, const char* k, std::optional<long long> def) {
        const json* v = find(obj, k);
        if (!v) {
            if (!def) error(key(path, k), "missing required integer");
            return def.value_or(0);
        }
        return as_int(*v, key(path, k));
    }

    long long as_int(const json& v, const std::string& path) {
        if (!v.is_number_integer()) {
            error(path, "expected an integer, got " + std::string(v.type_name()));
            return 0;
        }
        if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
            error(path, "integer out of range");
            return 0;
        }
        return v.get<long long>();
    }

    std::uint64_t seed(const json& obj, const std::string& path, const char* k, std::uint64_t def) {
        const json* v = find(obj, k);
        if (!v) return def;
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer()) {
            error(key(path, k), "seed must be non-negative");
            return def;
        }
        error(key(path, k), "expected an integer, got " + std::string(v->type_name()));
        return def;
    }

    bool boolean(const json& obj, const std::string& path, const char* k, bool def) {
        const json* v = find(obj, k);
        if (!v) return def;
        if (!v->is_boolean()) {
            error(key(path, k), "expected a boolean, got " + std::string(v->type_name()));
            return def;
        }
        return v->get<bool>();
    }

    std::string str(const json& obj, const std::string& path, const char* k, std::optional<std::string> def) {
        const json* v = find(obj, k);
        if (!v) {
            if (!def) error(key(path, k), "missing required string");
            return def.value_or("");
        }
        if (!v->is_string()) {
            error(key(path, k), "expected a string, got " + std::string(v->type_name()));
            return def.value_or("");
        }
        return v->get<std::string>();
    }

    Vec vec(const json& obj, const std::string& path, const char* k, std::optional<Vec> def) {
        const json* v = find(obj, k);
        if (!v) {
            if (!def) error(key(path, k), "missing required array of numbers");
            return def.value_or(Vec{});
        }
        return as_vec(*v, key(path, k));
    }

    Vec as_vec(const json& v, const std::string& path) {
        Vec out;
        if (!v.is_array()) {
            error(path, "expected an array of numbers, got " + std::string(v.type_name()));
            return out;
        }
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_num(v[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<Vec> matrix(const json& obj, const std::string& path, const char* k, bool required) {
        std::vector<Vec> out;
        const json* v = find(obj, k);
        if (!v) {
            if (required) error(key(path, k), "missing required array of arrays");
            return out;
        }
        const std::string p = key(path, k);
        if (!v->is_array()) {
            error(p, "expected an array of arrays, got " + std::string(v->type_name()));
            return out;
        }
        for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_vec((*v)[i], p + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<int> index_list(const json& obj, const std::string& path, const char* k) {
        std::vector<int> out;
        const json* v = find(obj, k);
        const std::string p = key(path, k);
        if (!v) {
            error(p, "missing required list of indices");
            return out;
        }
        if (!v->is_array() || v->empty()) {
            error(p, "expected a non-empty array of integers");
            return out;
        }
        for (std::size_t i = 0; i < v->size(); ++i) {
            const long long x = as_int((*v)[i], p + "[" + std::to_string(i) + "]");
            if (x < 1 || x > 1000000) {
                error(p + "[" + std::to_string(i) + "]", "indices must lie in [1, 1000000]");
                continue;
            }
            if (!out.empty() && x <= out.back()) error(p, "indices must be strictly ascending");
            out.push_back(static_cast<int>(x));
        }
        return out;
    }
};

// Checks a library validator and records its message under `path`.
template <class F>
bool check(Reader& r, const std::string& path, F&& f) {
    try {
        f();
        return true;
    } catch (const std::exception& e) {
        r.error(path, e.what());
        return false;
    }
}

std::optional<ConvexSet> parse_set(Reader& r, const json& j, const std::string& path, int depth = 0) {
    if (!r.object(j, path)) return std::nullopt;
    const std::string kind = r.str(j, path, "kind", std::nullopt);
    std::optional<ConvexSet> out;
    const std::size_t before = r.errors.size();
    if (kind == "box") {
        r.allow(j, path, {"kind", "lo", "hi"});
        Vec lo = r.vec(j, path, "lo", std::nullopt), hi = r.vec(j, path, "hi", std::nullopt);
        if (r.errors.size() == before) check(r, path, [&] { out = ConvexSet::box(lo, hi); });
    } else if (kind == "orthant") {
        r.allow(j, path, {"kind", "dim"});
        const long long d = r.integer(j, path, "dim", std::nullopt);
        if (r.errors.size() == before) check(r, path, [&] { out = ConvexSet::orthant(static_cast<std::size_t>(d)); });
        if (d < 1 && r.errors.size() == before) r.error(key(path, "dim"), "must be >= 1");
    } else if (kind == "ball") {
        r.allow(j, path, {"kind", "center", "radius"});
        Vec c = r.vec(j, path, "center", std::nullopt);
        const double rad = r.num(j, path, "radius", std::nullopt);
        if (r.errors.size() == before) check(r, path, [&] { out = ConvexSet::ball(c, rad); });
    } else if (kind == "halfspaces") {
        r.allow(j, path, {"kind", "normals", "offsets", "interior"});
        auto a = r.matrix(j, path, "normals", true);
        Vec b = r.vec(j, path, "offsets", std::nullopt), x = r.vec(j, path, "interior", std::nullopt);
        if (r.errors.size() == before) check(r, path, [&] { out = ConvexSet::halfspaces(a, b, x); });
    } else if (kind == "transport") {
        r.allow(j, path, {"kind", "m", "n", "cap"});
        const long long m = r.integer(j, path, "m", std::nullopt), n = r.integer(j, path, "n", std::nullopt);
        const double cap = r.num(j, path, "cap", std::numeric_limits<double>::infinity());
        if (m < 1) r.error(key(path, "m"), "must be >= 1");
        if (n < 1) r.error(key(path, "n"), "must be >= 1");
        if (r.errors.size() == before)
            check(r, path, [&] { out = ConvexSet::transport(static_cast<std::size_t>(m), static_cast<std::size_t>(n), cap); });
    } else if (kind == "product") {
        r.allow(j, path, {"kind", "factors"});
        const json* fs = r.find(j, "factors");
        if (depth > 8) {
            r.error(path, "products nested too deeply");
        } else if (!fs || !fs->is_array() || fs->empty()) {
            r.error(key(path, "factors"), "expected a non-empty array of set descriptors");
        } else {
            std::vector<ConvexSet> factors;
            for (std::size_t i = 0; i < fs->size(); ++i) {
                auto f = parse_set(r, (*fs)[i], key(path, "factors") + "[" + std::to_string(i) + "]", depth + 1);
                if (f) factors.push_back(*f);
            }
            if (r.errors.size() == before) check(r, path, [&] { out = ConvexSet::product(factors); });
        }
    } else if (r.errors.size() == before) {
        r.error(key(path, "kind"), "unknown set kind '" + kind + "' (box, orthant, ball, halfspaces, transport, product)");
    }
    return out;
}

json set_to_json(const ConvexSet& s) {
    return std::visit(
        [](const auto& d) -> json {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Box>) {
                return {{"kind", "box"}, {"lo", d.lo}, {"hi", d.hi}};
            } else if constexpr (std::is_same_v<T, NonnegOrthant>) {
                return {{"kind", "orthant"}, {"dim", d.dim}};
            } else if constexpr (std::is_same_v<T, Ball>) {
                return {{"kind", "ball"}, {"center", d.center}, {"radius", d.radius}};
            } else if constexpr (std::is_same_v<T, HalfspaceIntersection>) {
                return {{"kind", "halfspaces"}, {"normals", d.normals}, {"offsets", d.offsets}, {"interior", d.interior}};
            } else if constexpr (std::is_same_v<T, TransportSet>) {
                json j{{"kind", "transport"}, {"m", d.m}, {"n", d.n}};
                if (std::isfinite(d.cap)) j["cap"] = d.cap;
                return j;
            } else {
                json fs = json::array();
                for (const auto& f : d.factors) fs.push_back(set_to_json(f));
                return {{"kind", "product"}, {"factors", fs}};
            }
        },
        s.descriptor());
}

NamedRef parse_ref(Reader& r, const json& j, const std::string& path) {
    NamedRef ref;
    if (!r.object(j, path)) return ref;
    r.allow(j, path, {"name", "params"});
    ref.name = r.str(j, path, "name", std::nullopt);
    ref.params = r.vec(j, path, "params", Vec{});
    return ref;
}

void parse_noise(Reader& r, const json& root, ScenarioConfig& c, bool with_l) {
    const json* j = r.find(root, "noise");
    if (!j) return;
    if (!r.object(*j, "noise")) return;
    if (with_l)
        r.allow(*j, "noise", {"l", "seed", "jumps"});
    else
        r.allow(*j, "noise", {"seed", "jumps"});
    if (with_l) {
        const long long l = r.integer(*j, "noise", "l", c.l);
        if (l < 0 || l > 4096)
            r.error("noise.l", "must lie in [0, 4096]");
        else
            c.l = static_cast<int>(l);
    }
    c.seed = r.seed(*j, "noise", "seed", c.seed);
    if (const json* jm = r.find(*j, "jumps")) {
        if (!r.object(*jm, "noise.jumps")) return;
        r.allow(*jm, "noise.jumps", {"c", "atoms"});
        c.jumps.c = r.num(*jm, "noise.jumps", "c", std::nullopt);
        const json* atoms = r.find(*jm, "atoms");
        if (!atoms || !atoms->is_array()) {
            r.error("noise.jumps.atoms", "expected an array of {mark, weight} objects");
            return;
        }
        for (std::size_t i = 0; i < atoms->size(); ++i) {
            const std::string p = "noise.jumps.atoms[" + std::to_string(i) + "]";
            const json& a = (*atoms)[i];
            if (!r.object(a, p)) continue;
            r.allow(a, p, {"mark", "weight"});
            c.jumps.atoms.push_back(JumpAtom{r.vec(a, p, "mark", std::nullopt), r.num(a, p, "weight", std::nullopt)});
        }
    }
}

void parse_grid(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "grid");
    if (!j) return;
    if (!r.object(*j, "grid")) return;
    r.allow(*j, "grid", {"T", "N", "alpha"});
    c.grid.T = r.num(*j, "grid", "T", c.grid.T);
    const long long N = r.integer(*j, "grid", "N", c.grid.N);
    c.grid.alpha = r.num(*j, "grid", "alpha", c.grid.alpha);
    if (!(c.grid.T > 0.0)) r.error("grid.T", "must be positive");
    if (N < 1 || N > 10000000)
        r.error("grid.N", "must lie in [1, 10000000]");
    else
        c.grid.N = static_cast<int>(N);
    if (!(c.grid.alpha > 0.5 && c.grid.alpha < 1.0))
        r.error("grid.alpha", "must lie in the open interval (0.5, 1), got " + format_double(c.grid.alpha));
}

void parse_vi(Reader& r, const json& root, ScenarioConfig& c, bool declared_constants) {
    const json* j = r.find(root, "vi");
    if (!j) return;
    if (!r.object(*j, "vi")) return;
    if (declared_constants)
        r.allow(*j, "vi", {"c_bar", "l_f", "rho", "tol", "max_iter"});
    else
        r.allow(*j, "vi", {"rho", "tol", "max_iter"});
    if (declared_constants) {
        c.vi.c_bar = r.opt_num(*j, "vi", "c_bar");
        c.vi.l_f = r.opt_num(*j, "vi", "l_f");
    }
    c.vi.rho = r.num(*j, "vi", "rho", 0.0);
    if (r.find(*j, "rho") && !(c.vi.rho > 0.0)) r.error("vi.rho", "must be positive");
    c.vi.tol = r.num(*j, "vi", "tol", c.vi.tol);
    if (!(c.vi.tol > 0.0)) r.error("vi.tol", "must be positive");
    const long long it = r.integer(*j, "vi", "max_iter", c.vi.max_iter);
    if (it < 1 || it > 100000000)
        r.error("vi.max_iter", "must lie in [1, 100000000]");
    else
        c.vi.max_iter = static_cast<int>(it);
}

void parse_mc(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "mc");
    if (!j) return;
    if (!r.object(*j, "mc")) return;
    r.allow(*j, "mc", {"paths"});
    const long long paths = r.integer(*j, "mc", "paths", c.paths);
    if (paths < 1 || paths > 100000000)
        r.error("mc.paths", "must lie in [1, 100000000]");
    else
        c.paths = static_cast<int>(paths);
}

void parse_output(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "output");
    if (!j) return;
    if (!r.object(*j, "output")) return;
    r.allow(*j, "output", {"csv", "json"});
    c.out_csv = r.str(*j, "output", "csv", "");
    c.out_json = r.str(*j, "output", "json", "");
}

PriceDynamics parse_price(Reader& r, const json& j, const std::string& path) {
    PriceDynamics d;
    if (!r.object(j, path)) return d;
    r.allow(j, path, {"kappa", "level", "eta", "frac", "vol", "jump"});
    d.kappa = r.num(j, path, "kappa", 0.0);
    d.level = r.num(j, path, "level", 0.0);
    d.eta = r.num(j, path, "eta", 0.0);
    d.frac = r.num(j, path, "frac", 0.0);
    d.vol = r.num(j, path, "vol", 0.0);
    d.jump = r.num(j, path, "jump", 0.0);
    return d;
}

json price_to_json(const PriceDynamics& d) {
    return {{"kappa", d.kappa}, {"level", d.level}, {"eta", d.eta}, {"frac", d.frac}, {"vol", d.vol}, {"jump", d.jump}};
}

// Analytic constants from the registry field, optionally replaced by
// declared ones, which must be conservative.
void resolve_constants(Reader& r, ScenarioConfig& c, double c_bar, double l_f, bool allow_declared) {
    if (allow_declared && c.vi.c_bar) {
        if (!(*c.vi.c_bar > 0.0))
            r.error("vi.c_bar", "must be positive");
        else if (*c.vi.c_bar > c_bar * (1.0 + 1e-12))
            r.error("vi.c_bar", "exceeds the model's monotonicity modulus " + format_double(c_bar));
        else
            c_bar = *c.vi.c_bar;
    }
    if (allow_declared && c.vi.l_f) {
        if (*c.vi.l_f < l_f * (1.0 - 1e-12))
            r.error("vi.l_f", "is below the model's Lipschitz constant " + format_double(l_f));
        else
            l_f = *c.vi.l_f;
    }
    if (!(c_bar <= l_f)) r.error("vi", "require c_bar <= l_f");
    c.vi.c_bar = c_bar;
    c.vi.l_f = l_f;
    if (c.vi.rho == 0.0) {
        c.vi.rho = optimal_rho(c_bar, l_f);
    } else if (!rho_admissible(c.vi.rho, c_bar, l_f)) {
        r.error("vi.rho", format_double(c.vi.rho) + " outside the open interval " +
                              interval_text(2.0 * c_bar / (l_f * l_f)) + " = (0, 2 c_bar / l_f^2)");
    }
}

json vi_to_json(const ScenarioConfig& c, bool declared) {
    json j{{"rho", c.vi.rho}, {"tol", c.vi.tol}, {"max_iter", c.vi.max_iter}};
    if (declared) {
        j["c_bar"] = *c.vi.c_bar;
        j["l_f"] = *c.vi.l_f;
    }
    return j;
}

json noise_to_json(const ScenarioConfig& c, bool with_l) {
    json j{{"seed", c.seed}};
    if (with_l) j["l"] = c.l;
    if (!c.jumps.atoms.empty()) {
        json atoms = json::array();
        for (const auto& a : c.jumps.atoms) atoms.push_back({{"mark", a.mark}, {"weight", a.weight}});
        j["jumps"] = {{"c", c.jumps.c}, {"atoms", atoms}};
    }
    return j;
}

json grid_to_json(const TimeGrid& g) { return {{"T", g.T}, {"N", g.N}, {"alpha", g.alpha}}; }

json output_to_json(const ScenarioConfig& c) {
    json j = json::object();
    if (!c.out_csv.empty()) j["csv"] = c.out_csv;
    if (!c.out_json.empty()) j["json"] = c.out_json;
    return j;
}

void parse_state_model(Reader& r, const json& root, ScenarioConfig& c, bool stability) {
    if (const json* s = r.find(root, "set"))
        c.set = parse_set(r, *s, "set");
    else
        r.error("set", "missing required set descriptor");
    if (const json* st = r.find(root, "state")) {
        if (r.object(*st, "state")) {
            r.allow(*st, "state", {"p", "x0"});
            const json* pj = r.find(*st, "p");
            c.x0 = r.vec(*st, "state", "x0", Vec{});
            const long long p = r.integer(*st, "state", "p", pj || c.x0.empty() ? 1LL : static_cast<long long>(c.x0.size()));
            if (p < 1 || p > 100000)
                r.error("state.p", "must lie in [1, 100000]");
            else
                c.p = static_cast<std::size_t>(p);
            if (c.x0.empty())
                c.x0.assign(c.p, 0.0);
            else if (c.x0.size() != c.p)
                r.error("state.x0", "expected " + std::to_string(c.p) + " entries, got " + std::to_string(c.x0.size()));
        }
    } else {
        c.x0.assign(c.p, 0.0);
    }
    if (const json* cj = r.find(root, "coefficients")) c.coefficients = parse_ref(r, *cj, "coefficients");
    if (const json* fj = r.find(root, "field")) c.field = parse_ref(r, *fj, "field");
    const auto& cn = coefficient_family_names();
    if (std::find(cn.begin(), cn.end(), c.coefficients.name) == cn.end())
        r.error("coefficients.name", "unknown coefficient family '" + c.coefficients.name + "'");
    const auto& fn = field_family_names();
    if (std::find(fn.begin(), fn.end(), c.field.name) == fn.end())
        r.error("field.name", "unknown field family '" + c.field.name + "'");

    if (stability) {
        const json* pj = r.find(root, "perturbation");
        if (!pj) {
            r.error("perturbation", "missing required section");
        } else if (r.object(*pj, "perturbation")) {
            r.allow(*pj, "perturbation", {"m_list", "n_list", "drift", "frac", "field", "set_family"});
            auto& ps = c.perturbation;
            ps.m_list = r.index_list(*pj, "perturbation", "m_list");
            ps.n_list = r.index_list(*pj, "perturbation", "n_list");
            ps.drift = r.num(*pj, "perturbation", "drift", 0.0);
            ps.frac = r.num(*pj, "perturbation", "frac", 0.0);
            ps.field = r.num(*pj, "perturbation", "field", 0.0);
            ps.set_family = r.str(*pj, "perturbation", "set_family", ps.set_family);
            if (ps.set_family != "scaled" && ps.set_family != "constant")
                r.error("perturbation.set_family", "expected 'scaled' or 'constant'");
        }
    }
    if (!r.errors.empty()) return;

    check(r, "noise.jumps", [&] { c.jumps.validate(c.p); });
    if (c.jumps.atoms.empty()) c.jumps.c = 0.0;
    check(r, "coefficients", [&] { make_coefficients(c.coefficients, c.p, c.q(), static_cast<std::size_t>(c.l), c.jumps); });
    FieldModel fm;
    if (!check(r, "field", [&] { fm = make_field(c.field, c.p, c.q()); })) return;
    resolve_constants(r, c, fm.c_bar, fm.l_f, true);
}

void parse_projection(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "projection");
    if (!j) {
        r.error("projection", "missing required section");
        return;
    }
    if (!r.object(*j, "projection")) return;
    r.allow(*j, "projection", {"family", "dim", "hi", "n_list", "probes"});
    auto& ps = c.projection;
    ps.family = r.str(*j, "projection", "family", ps.family);
    const long long dim = r.integer(*j, "projection", "dim", 1);
    ps.hi = r.num(*j, "projection", "hi", 1.0);
    ps.n_list = r.index_list(*j, "projection", "n_list");
    ps.probes = r.matrix(*j, "projection", "probes", true);
    if (ps.family == "scaled") {
        if (const json* s = r.find(root, "set"))
            c.set = parse_set(r, *s, "set");
        else
            r.error("set", "family 'scaled' needs a set descriptor");
        if (c.set) ps.dim = c.set->dim();
    } else if (ps.family == "nested_box" || ps.family == "nested_ball" || ps.family == "dyadic_ball") {
        if (r.find(root, "set")) r.error("set", "only used by projection family 'scaled'");
        if (dim < 1 || dim > 100000)
            r.error("projection.dim", "must lie in [1, 100000]");
        else
            ps.dim = static_cast<std::size_t>(dim);
    } else {
        r.error("projection.family", "unknown family '" + ps.family + "' (nested_box, nested_ball, dyadic_ball, scaled)");
    }
    if (ps.family == "nested_box" && !(ps.hi > 0.0)) r.error("projection.hi", "must be positive");
    if (ps.probes.empty()) r.error("projection.probes", "need at least one probe point");
    for (std::size_t i = 0; i < ps.probes.size(); ++i)
        if (ps.probes[i].size() != ps.dim)
            r.error("projection.probes[" + std::to_string(i) + "]",
                    "expected " + std::to_string(ps.dim) + " entries, got " + std::to_string(ps.probes[i].size()));
}

void parse_spep(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "spep");
    if (!j) {
        r.error("spep", "missing required section");
        return;
    }
    if (!r.object(*j, "spep")) return;
    r.allow(*j, "spep", {"markets", "cost", "p0", "q0", "supply", "demand", "reduced", "tol"});
    auto& s = c.spep;
    long long m = 0, n = 0;
    if (const json* mk = r.find(*j, "markets"); !mk) {
        r.error("spep.markets", "missing required section");
    } else if (r.object(*mk, "spep.markets")) {
        r.allow(*mk, "spep.markets", {"m", "n"});
        m = r.integer(*mk, "spep.markets", "m", std::nullopt);
        n = r.integer(*mk, "spep.markets", "n", std::nullopt);
        if (m < 1 || m > 1000) r.error("spep.markets.m", "must lie in [1, 1000]");
        if (n < 1 || n > 1000) r.error("spep.markets.n", "must lie in [1, 1000]");
    }
    s.m = static_cast<std::size_t>(std::clamp(m, 1LL, 1000LL));
    s.n = static_cast<std::size_t>(std::clamp(n, 1LL, 1000LL));
    if (const json* cj = r.find(*j, "cost"); !cj) {
        r.error("spep.cost", "missing required section");
    } else if (r.object(*cj, "spep.cost")) {
        r.allow(*cj, "spep.cost", {"gamma", "c0"});
        s.gamma = r.vec(*cj, "spep.cost", "gamma", std::nullopt);
        s.c0 = r.vec(*cj, "spep.cost", "c0", Vec(s.m * s.n, 0.0));
    }
    s.p0 = r.vec(*j, "spep", "p0", std::nullopt);
    s.q0 = r.vec(*j, "spep", "q0", std::nullopt);
    if (const json* sj = r.find(*j, "supply")) s.supply = parse_price(r, *sj, "spep.supply");
    if (const json* dj = r.find(*j, "demand")) s.demand = parse_price(r, *dj, "spep.demand");
    s.reduced = r.boolean(*j, "spep", "reduced", true);
    c.spep_tol = r.num(*j, "spep", "tol", c.spep_tol);
    if (!(c.spep_tol > 0.0)) r.error("spep.tol", "must be positive");
    if (!r.errors.empty()) return;
    if (c.jumps.atoms.empty()) c.jumps.c = 0.0;
    s.jumps = c.jumps;
    s.grid = c.grid;
    std::optional<CoupledSystem> sys;
    if (!check(r, "spep", [&] { sys = build_spep(s); })) return;
    resolve_constants(r, c, sys->vi.c_bar, sys->vi.l_f, false);
}

void parse_game(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "game");
    if (!j) {
        r.error("game", "missing required section");
        return;
    }
    if (!r.object(*j, "game")) return;
    r.allow(*j, "game", {"agents", "target", "weight", "box", "coupling", "state_coupling", "dynamics", "x0", "deviations", "tol"});
    auto& g = c.game;
    const long long agents = r.integer(*j, "game", "agents", std::nullopt);
    g.game.target = r.vec(*j, "game", "target", std::nullopt);
    if (agents < 1 || agents > 10000)
        r.error("game.agents", "must lie in [1, 10000]");
    else if (static_cast<std::size_t>(agents) != g.game.target.size())
        r.error("game.target", "expected one entry per agent (" + std::to_string(agents) + "), got " +
                                   std::to_string(g.game.target.size()));
    g.game.weight = r.vec(*j, "game", "weight", std::nullopt);
    for (const auto& b : r.matrix(*j, "game", "box", true)) {
        if (b.size() != 2) {
            r.error("game.box", "each entry must be [lo, hi]");
            continue;
        }
        g.game.box.emplace_back(b[0], b[1]);
    }
    g.game.coupling = r.matrix(*j, "game", "coupling", false);
    g.game.state_coupling = r.vec(*j, "game", "state_coupling", Vec{});
    if (const json* dj = r.find(*j, "dynamics")) {
        if (!dj->is_array()) {
            r.error("game.dynamics", "expected an array of per-agent objects");
        } else {
            for (std::size_t i = 0; i < dj->size(); ++i) {
                const std::string p = "game.dynamics[" + std::to_string(i) + "]";
                const json& a = (*dj)[i];
                if (!r.object(a, p)) continue;
                r.allow(a, p, {"drift_x", "drift_u", "frac", "vol", "jump"});
                g.dynamics.push_back(AgentDynamics{r.num(a, p, "drift_x", 0.0), r.num(a, p, "drift_u", 0.0),
                                                   r.num(a, p, "frac", 0.0), r.num(a, p, "vol", 0.0),
                                                   r.num(a, p, "jump", 0.0)});
            }
        }
    }
    c.x0 = r.vec(*j, "game", "x0", Vec{});
    const long long dev = r.integer(*j, "game", "deviations", g.deviations);
    if (dev < 1 || dev > 1000000)
        r.error("game.deviations", "must lie in [1, 1000000]");
    else
        g.deviations = static_cast<int>(dev);
    g.tol = r.num(*j, "game", "tol", g.tol);
    if (!(g.tol > 0.0)) r.error("game.tol", "must be positive");
    if (!r.errors.empty()) return;
    const std::size_t P = g.game.target.size();
    if (c.x0.empty()) c.x0.assign(P, 0.0);
    c.p = P;
    if (c.jumps.atoms.empty()) c.jumps.c = 0.0;
    std::optional<CoupledSystem> sys;
    if (!check(r, "game", [&] {
            const GameSpec spec = quadratic_game(g.game, g.dynamics, c.x0, c.jumps, c.grid);
            sys = build_game(spec);
        }))
        return;
    resolve_constants(r, c, sys->vi.c_bar, sys->vi.l_f, false);
}

void parse_sanity(Reader& r, const json& root, ScenarioConfig& c) {
    const json* j = r.find(root, "sanity");
    if (!j) return;
    if (!r.object(*j, "sanity")) return;
    r.allow(*j, "sanity", {"check", "integrand"});
    c.sanity.check = r.str(*j, "sanity", "check", c.sanity.check);
    c.sanity.integrand = r.str(*j, "sanity", "integrand", c.sanity.integrand);
    if (c.sanity.check != "ito" && c.sanity.check != "doob")
        r.error("sanity.check", "expected 'ito' or 'doob'");
    if (c.sanity.integrand != "one" && c.sanity.integrand != "t")
        r.error("sanity.integrand", "expected 'one' or 't'");
    if (c.sanity.check == "doob" && r.find(*j, "integrand")) r.error("sanity.integrand", "only used by the 'ito' check");
}

json canonical_json(const ScenarioConfig& c) {
    json j{{"kind", c.kind}};
    const json out = output_to_json(c);
    if (!out.empty()) j["output"] = out;
    if (c.kind == "projection") {
        const auto& ps = c.projection;
        j["projection"] = {{"family", ps.family}, {"n_list", ps.n_list}, {"probes", ps.probes}};
        if (ps.family == "scaled")
            j["set"] = set_to_json(*c.set);
        else
            j["projection"]["dim"] = ps.dim;
        if (ps.family == "nested_box") j["projection"]["hi"] = ps.hi;
        return j;
    }
    j["grid"] = grid_to_json(c.grid);
    j["mc"] = {{"paths", c.paths}};
    if (c.kind == "sanity") {
        j["noise"] = {{"seed", c.seed}};
        j["sanity"] = {{"check", c.sanity.check}};
        if (c.sanity.check == "ito") j["sanity"]["integrand"] = c.sanity.integrand;
        return j;
    }
    if (c.kind == "simulate" || c.kind == "stability") {
        j["noise"] = noise_to_json(c, true);
        j["vi"] = vi_to_json(c, true);
        j["set"] = set_to_json(*c.set);
        j["state"] = {{"p", c.p}, {"x0", c.x0}};
        j["coefficients"] = {{"name", c.coefficients.name}, {"params", c.coefficients.params}};
        j["field"] = {{"name", c.field.name}, {"params", c.field.params}};
        if (c.kind == "stability") {
            const auto& ps = c.perturbation;
            j["perturbation"] = {{"m_list", ps.m_list}, {"n_list", ps.n_list}, {"drift", ps.drift},
                                 {"frac", ps.frac},     {"field", ps.field},   {"set_family", ps.set_family}};
        }
        return j;
    }
    j["noise"] = noise_to_json(c, false);
    j["vi"] = vi_to_json(c, false);
    if (c.kind == "spep") {
        const auto& s = c.spep;
        j["spep"] = {{"markets", {{"m", s.m}, {"n", s.n}}},
                     {"cost", {{"gamma", s.gamma}, {"c0", s.c0}}},
                     {"p0", s.p0},
                     {"q0", s.q0},
                     {"supply", price_to_json(s.supply)},
                     {"demand", price_to_json(s.demand)},
                     {"reduced", s.reduced},
                     {"tol", c.spep_tol}};
    } else {
        const auto& g = c.game;
        json box = json::array();
        for (const auto& [lo, hi] : g.game.box) box.push_back({lo, hi});
        json dyn = json::array();
        for (const auto& d : g.dynamics)
            dyn.push_back({{"drift_x", d.drift_x}, {"drift_u", d.drift_u}, {"frac", d.frac}, {"vol", d.vol}, {"jump", d.jump}});
        j["game"] = {{"agents", g.game.target.size()}, {"target", g.game.target}, {"weight", g.game.weight}, {"box", box}, {"x0", c.x0},
                     {"deviations", g.deviations}, {"tol", g.tol}};
        if (!g.game.coupling.empty()) j["game"]["coupling"] = g.game.coupling;
        if (!g.game.state_coupling.empty()) j["game"]["state_coupling"] = g.game.state_coupling;
        if (!g.dynamics.empty()) j["game"]["dynamics"] = dyn;
    }
    return j;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::invalid_argument(join_issues(issues)), issues_(std::move(issues)) {}

ScenarioConfig parse_scenario(const std::string& text, const Overrides& overrides) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("document: not valid JSON: ") + e.what()});
    } catch (const json::out_of_range& e) {
        // Number literals beyond the double range: values must be finite.
        throw ConfigError({std::string("document: number is not finite: ") + e.what()});
    }
    Reader r;
    if (!r.object(root, "document")) throw ConfigError(r.errors);

    ScenarioConfig c;
    c.kind = r.str(root, "", "kind", std::nullopt);
    if (!r.errors.empty()) throw ConfigError(r.errors);

    if (c.kind == "simulate") {
        r.allow(root, "", {"kind", "grid", "noise", "vi", "set", "state", "coefficients", "field", "mc", "output"});
    } else if (c.kind == "stability") {
        r.allow(root, "",
                {"kind", "grid", "noise", "vi", "set", "state", "coefficients", "field", "perturbation", "mc", "output"});
    } else if (c.kind == "projection") {
        r.allow(root, "", {"kind", "projection", "set", "output"});
    } else if (c.kind == "spep") {
        r.allow(root, "", {"kind", "grid", "noise", "vi", "spep", "mc", "output"});
    } else if (c.kind == "game") {
        r.allow(root, "", {"kind", "grid", "noise", "vi", "game", "mc", "output"});
    } else if (c.kind == "sanity") {
        r.allow(root, "", {"kind", "grid", "noise", "sanity", "mc", "output"});
    } else {
        throw ConfigError({"kind: unknown kind '" + c.kind + "' (simulate, stability, projection, spep, game, sanity)"});
    }

    parse_output(r, root, c);
    if (c.kind != "projection") {
        // Sections that failed fall back to defaults so the model checks
        // below still run and report their own problems.
        std::size_t before = r.errors.size();
        parse_grid(r, root, c);
        if (r.errors.size() != before) c.grid = TimeGrid{};
        parse_mc(r, root, c);
        before = r.errors.size();
        parse_noise(r, root, c, c.kind == "simulate" || c.kind == "stability");
        if (r.errors.size() != before) c.jumps = JumpMeasure{};
        if (overrides.seed) c.seed = *overrides.seed;
        if (overrides.paths) {
            if (*overrides.paths < 1)
                r.error("mc.paths", "override must be >= 1");
            else
                c.paths = *overrides.paths;
        }
        if (c.kind != "sanity") parse_vi(r, root, c, c.kind == "simulate" || c.kind == "stability");
    }
    if (c.kind == "simulate" || c.kind == "stability") {
        parse_state_model(r, root, c, c.kind == "stability");
    } else if (c.kind == "projection") {
        parse_projection(r, root, c);
    } else if (c.kind == "spep") {
        parse_spep(r, root, c);
    } else if (c.kind == "game") {
        parse_game(r, root, c);
    } else {
        parse_sanity(r, root, c);
        if (c.sanity.check == "ito" && c.paths < 100) r.error("mc.paths", "the Ito check needs at least 100 paths");
    }
    if (!r.errors.empty()) throw ConfigError(r.errors);
    c.canonical = canonical_json(c).dump();
    return c;
}

// ---------------------------------------------------------------------------

namespace {

// Runs fn(i) for i in [0, count) on `threads` workers. On failure the error
// of the lowest index is rethrown, independent of scheduling.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    std::atomic<int> next{0};
    std::mutex mu;
    int err_index = count;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    };
    int n = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    n = std::min(n, count);
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (err) std::rethrow_exception(err);
}

SolverConfig solver_config(const ScenarioConfig& c) {
    SolverConfig s;
    s.rho = c.vi.rho;
    s.tol = c.vi.tol;
    s.max_iter = c.vi.max_iter;
    return s;
}

void base_metadata(ResultTable& t, const ScenarioConfig& c) {
    t.metadata["kind"] = c.kind;
    t.metadata["config"] = c.canonical;
    t.metadata["config_hash"] = fnv1a_hex(c.canonical);
    t.metadata["version"] = kVersion;
    t.metadata["kernels"] = kernels::name(kernels::active().isa);
    if (c.kind != "projection") {
        t.metadata["seed"] = std::to_string(c.seed);
        t.metadata["paths"] = std::to_string(c.paths);
    }
}

ResultTable run_simulate(const ScenarioConfig& c, int threads) {
    const std::size_t p = c.p, q = c.q();
    const CoefficientSet coeffs = make_coefficients(c.coefficients, p, q, static_cast<std::size_t>(c.l), c.jumps);
    const FieldModel fm = make_field(c.field, p, q);
    const VIProblem vi{*c.set, fm.field, *c.vi.c_bar, *c.vi.l_f};
    const SolverConfig cfg = solver_config(c);
    std::vector<PathSolution> sols(static_cast<std::size_t>(c.paths));
    parallel_for(c.paths, threads, [&](int path) {
        const NoiseBundle noise = gen_noise(c.grid, c.l, c.jumps, derive_seed(c.seed, static_cast<std::uint64_t>(path)));
        try {
            sols[static_cast<std::size_t>(path)] = integrate_path(coeffs, vi, cfg, c.grid, noise, c.x0);
        } catch (const NumericError& e) {
            throw ScenarioFailure("simulate: path " + std::to_string(path) + ": " + e.what());
        }
    });
    ResultTable t;
    t.columns = {"path", "step", "t"};
    for (std::size_t i = 0; i < p; ++i) t.columns.push_back("x" + std::to_string(i));
    for (std::size_t i = 0; i < q; ++i) t.columns.push_back("u" + std::to_string(i));
    t.columns.push_back("vi_iters");
    t.columns.push_back("vi_residual");
    for (int path = 0; path < c.paths; ++path) {
        const PathSolution& s = sols[static_cast<std::size_t>(path)];
        for (int k = 0; k <= c.grid.N; ++k) {
            std::vector<double> row{static_cast<double>(path), static_cast<double>(k), c.grid.t(k)};
            for (double v : s.x_at(k)) row.push_back(v);
            for (double v : s.u_at(k)) row.push_back(v);
            row.push_back(static_cast<double>(s.vi_iters[k]));
            row.push_back(s.vi_residuals[k]);
            t.rows.push_back(std::move(row));
        }
    }
    base_metadata(t, c);
    t.metadata["rho"] = format_double(c.vi.rho);
    t.metadata["contraction_factor"] = format_double(contraction_factor(c.vi.rho, *c.vi.c_bar, *c.vi.l_f));
    return t;
}

PerturbationFamily stability_family(const ScenarioConfig& c) {
    PerturbationFamily f;
    const std::size_t p = c.p, q = c.q(), l = static_cast<std::size_t>(c.l);
    const NamedRef coef = c.coefficients, field = c.field;
    const JumpMeasure jm = c.jumps;
    const PerturbationSettings ps = c.perturbation;
    const double c_bar = *c.vi.c_bar, l_f = *c.vi.l_f;
    f.lambda_to_system = [=](const Vec& lambda) {
        const double s = lambda.at(0);
        ParametrizedSystem sys;
        sys.coeffs = make_coefficients(coef, p, q, l, jm, FamilyShift{s * ps.drift, s * ps.frac, 0.0});
        sys.field = make_field(field, p, q, FamilyShift{0.0, 0.0, s * ps.field}).field;
        sys.c_bar = c_bar;
        sys.l_f = l_f;
        return sys;
    };
    const ConvexSet base = *c.set;
    if (ps.set_family == "scaled")
        f.mu_to_set = [base](const Vec& mu) { return scaled(base, 1.0 + mu.at(0)); };
    else
        f.mu_to_set = [base](const Vec&) { return base; };
    f.lambda_limit = {0.0};
    f.mu_limit = {0.0};
    f.lambda_seq = [](int m) { return Vec{1.0 / m}; };
    f.mu_seq = [](int n) { return Vec{1.0 / n}; };
    f.jumps = jm;
    f.p0 = c.x0;
    f.name = "scenario";
    return f;
}

double index_value(int v) { return v == kLimitIndex ? std::numeric_limits<double>::infinity() : v; }

ResultTable run_stability_kind(const ScenarioConfig& c, int threads) {
    const PerturbationFamily fam = stability_family(c);
    StabilityReport rep;
    try {
        rep = run_stability(fam, c.perturbation.m_list, c.perturbation.n_list, c.grid, c.paths, c.seed, solver_config(c),
                            threads);
    } catch (const NumericError& e) {
        throw ScenarioFailure(std::string("stability: ") + e.what());
    }
    ResultTable t;
    t.columns = {"m", "n", "err_x", "err_u", "mc_stderr"};
    for (const auto& cell : rep.cells)
        t.rows.push_back({index_value(cell.m), index_value(cell.n), cell.err_x, cell.err_u, cell.mc_stderr});
    base_metadata(t, c);
    t.metadata["rho"] = format_double(rep.rho);
    t.metadata["M_bar"] = format_double(rep.constants.M_bar);
    t.metadata["N_bar"] = format_double(rep.constants.N_bar);
    t.metadata["M_hat"] = format_double(rep.constants.M_hat);
    t.metadata["N_hat"] = format_double(rep.constants.N_hat);
    t.metadata["Z_bar"] = format_double(rep.constants.Z_bar);
    t.metadata["B0"] = format_double(rep.constants.B0);
    return t;
}

ResultTable run_projection(const ScenarioConfig& c) {
    const auto& ps = c.projection;
    SetFamily fam = ps.family == "nested_box"    ? families::nested_box(ps.dim, ps.hi)
                    : ps.family == "nested_ball" ? families::nested_ball(ps.dim)
                    : ps.family == "dyadic_ball" ? families::dyadic_ball(ps.dim)
                                                 : families::scaled(*c.set);
    ResultTable t;
    t.columns = {"n", "gap"};
    try {
        for (int n : ps.n_list) t.rows.push_back({static_cast<double>(n), mosco_probe(fam, n, ps.probes)});
    } catch (const NumericError& e) {
        throw ScenarioFailure(std::string("projection: ") + e.what());
    }
    base_metadata(t, c);
    return t;
}

ResultTable run_spep(const ScenarioConfig& c, int threads) {
    const CoupledSystem sys = build_spep(c.spep);
    const SolverConfig cfg = solver_config(c);
    std::vector<SpepReport> reps(static_cast<std::size_t>(c.paths));
    std::vector<PathSolution> sols(static_cast<std::size_t>(c.paths));
    parallel_for(c.paths, threads, [&](int path) {
        const NoiseBundle noise = gen_noise(c.grid, static_cast<int>(sys.coeffs.l), c.jumps,
                                            derive_seed(c.seed, static_cast<std::uint64_t>(path)));
        try {
            sols[path] = integrate_path(sys.coeffs, sys.vi, cfg, c.grid, noise, sys.p0);
        } catch (const NumericError& e) {
            throw ScenarioFailure("spep: path " + std::to_string(path) + ": " + e.what());
        }
        reps[path] = check_spep_equilibrium(sols[path], c.spep, c.spep_tol, c.vi.rho);
    });
    ResultTable t;
    t.columns = {"path", "step", "t", "excess", "vi_iters", "vi_residual"};
    std::size_t violations = 0;
    double worst_eq = 0.0, worst_ineq = 0.0;
    for (int path = 0; path < c.paths; ++path) {
        const auto& rep = reps[path];
        violations += rep.violations;
        worst_eq = std::max(worst_eq, rep.worst_equality.amount);
        worst_ineq = std::max(worst_ineq, rep.worst_inequality.amount);
        for (int k = 0; k <= c.grid.N; ++k)
            t.rows.push_back({static_cast<double>(path), static_cast<double>(k), c.grid.t(k), rep.step_worst[k],
                              static_cast<double>(sols[path].vi_iters[k]), sols[path].vi_residuals[k]});
    }
    base_metadata(t, c);
    t.metadata["rho"] = format_double(c.vi.rho);
    t.metadata["violations"] = std::to_string(violations);
    t.metadata["worst_equality_excess"] = format_double(worst_eq);
    t.metadata["worst_inequality_excess"] = format_double(worst_ineq);
    t.metadata["equilibrium"] = violations == 0 ? "ok" : "violated";
    return t;
}

ResultTable run_game(const ScenarioConfig& c, int threads) {
    const GameSpec spec = quadratic_game(c.game.game, c.game.dynamics, c.x0, c.jumps, c.grid);
    const CoupledSystem sys = build_game(spec);
    const SolverConfig cfg = solver_config(c);
    std::vector<NashReport> reps(static_cast<std::size_t>(c.paths));
    parallel_for(c.paths, threads, [&](int path) {
        const std::uint64_t ps = derive_seed(c.seed, static_cast<std::uint64_t>(path));
        const NoiseBundle noise = gen_noise(c.grid, static_cast<int>(sys.coeffs.l), c.jumps, ps);
        PathSolution sol;
        try {
            sol = integrate_path(sys.coeffs, sys.vi, cfg, c.grid, noise, sys.p0);
        } catch (const NumericError& e) {
            throw ScenarioFailure("game: path " + std::to_string(path) + ": " + e.what());
        }
        reps[path] = verify_nash(sol, spec, c.game.deviations, c.game.tol, derive_seed(ps, 1));
    });
    ResultTable t;
    t.columns = {"path", "agent", "worst", "step"};
    bool certified = true;
    for (int path = 0; path < c.paths; ++path) {
        certified = certified && reps[path].certified;
        for (std::size_t i = 0; i < spec.agents(); ++i)
            t.rows.push_back({static_cast<double>(path), static_cast<double>(i), reps[path].worst[i],
                              static_cast<double>(reps[path].step[i])});
    }
    base_metadata(t, c);
    t.metadata["rho"] = format_double(c.vi.rho);
    t.metadata["c_bar"] = format_double(*c.vi.c_bar);
    t.metadata["l_f"] = format_double(*c.vi.l_f);
    t.metadata["nash"] = certified ? "certified" : "violated";
    return t;
}

ResultTable run_sanity(const ScenarioConfig& c) {
    ResultTable t;
    if (c.sanity.check == "ito") {
        std::function<double(double)> f = [](double) { return 1.0; };
        if (c.sanity.integrand == "t") f = [](double s) { return s; };
        const IsometryCheck r = ito_isometry_check(f, c.grid, c.paths, c.seed);
        t.columns = {"lhs", "rhs", "rel_err"};
        t.rows.push_back({r.lhs, r.rhs, r.rel_err});
        t.metadata["slack"] = format_double(3.0 * std::sqrt(2.0) / std::sqrt(static_cast<double>(c.paths)));
    } else {
        const DoobCheck r = doob_bound_check(c.grid, c.paths, c.seed);
        t.columns = {"empirical", "bound", "std_error"};
        t.rows.push_back({r.empirical, r.bound, r.std_error});
    }
    base_metadata(t, c);
    return t;
}

}  // namespace

ResultTable run_scenario(const ScenarioConfig& config, int threads) {
    if (config.kind == "simulate") return run_simulate(config, threads);
    if (config.kind == "stability") return run_stability_kind(config, threads);
    if (config.kind == "projection") return run_projection(config);
    if (config.kind == "spep") return run_spep(config, threads);
    if (config.kind == "game") return run_game(config, threads);
    if (config.kind == "sanity") return run_sanity(config);
    throw std::invalid_argument("run_scenario: unknown kind '" + config.kind + "'");
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string to_csv(const ResultTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i) out += ',';
        out += table.columns[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size()) throw std::invalid_argument("to_csv: table is not rectangular");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.close();
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

void write_results(const ResultTable& table, const std::string& csv_path, const std::string& json_path) {
    const std::string csv = to_csv(table);
    if (!csv_path.empty()) write_file(csv_path, csv);
    if (!json_path.empty()) {
        json meta = json::object();
        for (const auto& [k, v] : table.metadata) {
            if (k == "config")
                meta[k] = json::parse(v);
            else
                meta[k] = v;
        }
        const json j{{"columns", table.columns}, {"rows", table.rows.size()}, {"metadata", meta}};
        write_file(json_path, j.dump(2) + "\n");
    }
}

ResultTable read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
    ResultTable t;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("'" + path + "': missing header row");
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) t.columns.push_back(col);
    }
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        std::vector<double> row;
        std::size_t start = 0;
        for (;;) {
            const std::size_t end = std::min(line.find(',', start), line.size());
            double v = 0.0;
            const auto res = std::from_chars(line.data() + start, line.data() + end, v);
            if (res.ec != std::errc() || res.ptr != line.data() + end)
                throw std::runtime_error("'" + path + "' line " + std::to_string(lineno) + ": bad number");
            row.push_back(v);
            if (end == line.size()) break;
            start = end + 1;
        }
        if (row.size() != t.columns.size())
            throw std::runtime_error("'" + path + "' line " + std::to_string(lineno) + ": wrong number of cells");
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace sfdvi
