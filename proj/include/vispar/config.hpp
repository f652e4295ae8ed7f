#pragma once

// Run configuration (INI text), rendering for the config echo, and the
// orchestration behind the command-line tool.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vispar/core.hpp"
#include "vispar/error.hpp"
#include "vispar/estimates.hpp"
#include "vispar/operators.hpp"
#include "vispar/regularity.hpp"
#include "vispar/scheme.hpp"
#include "vispar/solver.hpp"

namespace vispar {

/// Every validation failure of a config, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> errors)
        : Error(join(errors)), errors_(std::move(errors)) {}
    const std::vector<std::string>& errors() const { return errors_; }

private:
    static std::string join(const std::vector<std::string>& e) {
        std::string s;
        for (const auto& x : e) s += (s.empty() ? "" : "\n") + x;
        return s;
    }
    std::vector<std::string> errors_;
};

struct EquationConfig {
    double gamma = 0.0;
    double epsilon = 0.0;
    std::vector<double> epsilons;  // non-empty selects a cascade
    std::vector<double> thetas;
    std::string mode = "regularized";
    std::string op = "linear_trace";
    double lambda = 1.0;
    double Lambda = 1.0;
    std::vector<std::vector<double>> coefficients;  // row-major; empty means identity
    double theta = 0.1;
    double source = 0.0;
    friend bool operator==(const EquationConfig&, const EquationConfig&) = default;
};

struct DomainConfig {
    int dim = 1;
    double lo = -1.0;
    double hi = 1.0;
    double h = 1.0 / 64.0;
    double t_start = 0.0;
    double t_end = 1.0;
    std::size_t snapshots = 4;
    std::optional<double> dt;  // empty means controller-chosen
    std::string mask = "none";
    std::vector<double> mask_center{0.0, 0.0};
    double mask_radius = 1.0;
    std::string stencil = "centered";
    std::string gradient = "centered";
    double cfl = 0.9;
    friend bool operator==(const DomainConfig&, const DomainConfig&) = default;
};

struct BoundaryConfig {
    std::string phi = "zero";
    std::vector<double> a{0.0, 0.0};
    double b = 0.0;
    std::vector<double> q{1.0};
    double c = 1.0;
    double shift = 0.0;
    double amplitude = 1.0;
    std::vector<double> wave{1.0, 0.0};
    double drift = 0.0;
    std::string file;
    std::uint64_t seed = 1;
    friend bool operator==(const BoundaryConfig&, const BoundaryConfig&) = default;
};

struct ChecksConfig {
    bool exact = false;
    double exact_tol = 1e-10;
    bool max_principle = false;
    double max_principle_tol = 1e-12;
    bool gradient_max = false;
    double gradient_C = 1.0;
    bool barrier = false;
    double barrier_tol = 1e-8;
    bool time_modulus = false;
    double time_margin = 0.1;
    bool dichotomy = false;
    double tau = 0.25;
    double delta = 0.1;
    double eps0 = 0.1;
    double eps1 = 0.01;
    double eta = 0.05;
    double rescale_radius = 1.0;
    bool uniformity = false;
    double uniformity_tol = 0.2;
    std::vector<double> center{0.0, 0.0};
    std::optional<double> center_t;  // empty means the final time
    double r0 = 0.5;
    friend bool operator==(const ChecksConfig&, const ChecksConfig&) = default;
};

struct OutputConfig {
    std::string dir = "vispar_out";
    std::vector<std::string> formats{"dump", "csv", "summary"};
    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
    EquationConfig equation;
    DomainConfig domain;
    BoundaryConfig boundary;
    ChecksConfig checks;
    OutputConfig output;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace cfg {

inline std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
    return s;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
    const std::string s = trim(raw);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<std::vector<double>> parse_list(const std::string& raw) {
    std::vector<double> out;
    std::istringstream is(raw);
    std::string tok;
    while (is >> tok) {
        const auto v = parse_double(tok);
        if (!v) return std::nullopt;
        out.push_back(*v);
    }
    return out;
}

/// Reads typed values from one section and records every problem.
class SectionReader {
public:
    SectionReader(const boost::property_tree::ptree* tree, std::string name, std::vector<std::string>& errors)
        : tree_(tree), name_(std::move(name)), errors_(errors) {}

    void real(const char* key, double& out) {
        if (auto s = raw(key)) {
            if (auto v = parse_double(*s)) out = *v;
            else fail(key, "not a number: '" + *s + "'");
        }
    }
    void optional_real(const char* key, std::optional<double>& out) {
        if (auto s = raw(key)) {
            if (trim(*s) == "auto") out.reset();
            else if (auto v = parse_double(*s)) out = *v;
            else fail(key, "expected a number or 'auto': '" + *s + "'");
        }
    }
    void list(const char* key, std::vector<double>& out) {
        if (auto s = raw(key)) {
            if (auto v = parse_list(*s)) out = *v;
            else fail(key, "not a list of numbers: '" + *s + "'");
        }
    }
    void matrices(const char* key, std::vector<std::vector<double>>& out) {
        if (auto s = raw(key)) {
            std::vector<std::vector<double>> m;
            std::istringstream is(*s);
            std::string part;
            bool ok = true;
            while (std::getline(is, part, '|')) {
                auto v = parse_list(part);
                if (!v || v->empty()) ok = false;
                else m.push_back(*v);
            }
            if (ok) out = m;
            else fail(key, "expected matrices separated by '|': '" + *s + "'");
        }
    }
    template <class Int>
    void integer(const char* key, Int& out) {
        if (auto s = raw(key)) {
            const std::string t = trim(*s);
            long long v = 0;
            const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
            if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty() || v < 0)
                fail(key, "not a nonnegative integer: '" + *s + "'");
            else
                out = static_cast<Int>(v);
        }
    }
    void text(const char* key, std::string& out) {
        if (auto s = raw(key)) out = trim(*s);
    }
    void words(const char* key, std::vector<std::string>& out) {
        if (auto s = raw(key)) {
            out.clear();
            std::istringstream is(*s);
            std::string w;
            while (std::getline(is, w, ',')) {
                w = trim(w);
                if (!w.empty()) out.push_back(w);
            }
        }
    }
    void flag(const char* key, bool& out) {
        if (auto s = raw(key)) {
            const std::string t = trim(*s);
            if (t == "true" || t == "1" || t == "yes") out = true;
            else if (t == "false" || t == "0" || t == "no") out = false;
            else fail(key, "expected true or false: '" + *s + "'");
        }
    }
    /// Keys present in the section that no reader asked for.
    void reject_unknown() {
        if (!tree_) return;
        for (const auto& kv : *tree_)
            if (!seen_.count(kv.first)) errors_.push_back("unknown key [" + name_ + "] " + kv.first);
    }

private:
    std::optional<std::string> raw(const char* key) {
        seen_.emplace(key, true);
        if (!tree_) return std::nullopt;
        const auto it = tree_->find(key);
        if (it == tree_->not_found()) return std::nullopt;
        return it->second.data();
    }
    void fail(const char* key, const std::string& msg) { errors_.push_back("[" + name_ + "] " + key + ": " + msg); }

    const boost::property_tree::ptree* tree_;
    std::string name_;
    std::vector<std::string>& errors_;
    std::map<std::string, bool> seen_;
};

inline const std::vector<std::string>& operator_names() {
    static const std::vector<std::string> n{"pucci_plus", "pucci_minus", "linear_trace", "smooth_bellman"};
    return n;
}
inline const std::vector<std::string>& phi_names() {
    static const std::vector<std::string> n{"zero", "linear", "caloric", "degenerate_profile", "smooth", "random", "file"};
    return n;
}
inline bool one_of(const std::string& s, const std::vector<std::string>& v) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace cfg

/// Builds the operator named in the config; throws DomainError on bad input.
inline EllipticOperator make_operator(const EquationConfig& e, int dim) {
    auto matrix = [&](const std::vector<double>& rows) { return SymmetricMatrix::from_rows(dim, rows); };
    std::vector<SymmetricMatrix> family;
    for (const auto& m : e.coefficients) family.push_back(matrix(m));
    if (family.empty()) family.push_back(SymmetricMatrix::identity(dim));
    if (e.op == "pucci_plus") return EllipticOperator::pucci_plus(e.lambda, e.Lambda);
    if (e.op == "pucci_minus") return EllipticOperator::pucci_minus(e.lambda, e.Lambda);
    if (e.op == "linear_trace") {
        if (family.size() != 1) throw DomainError("linear_trace takes exactly one coefficient matrix");
        return EllipticOperator::linear_trace(family.front(), e.lambda, e.Lambda);
    }
    if (e.op == "smooth_bellman") return EllipticOperator::smooth_bellman(family, e.theta, e.lambda, e.Lambda);
    throw DomainError("unknown operator '" + e.op + "'");
}

inline DegeneracyMode parse_mode(const std::string& m) {
    if (m == "regularized") return DegeneracyMode::Regularized;
    if (m == "singular") return DegeneracyMode::Singular;
    throw DomainError("unknown degeneracy mode '" + m + "'");
}

inline Grid make_grid(const DomainConfig& d) {
    const double cells = (d.hi - d.lo) / d.h;
    const auto n = static_cast<std::size_t>(std::llround(cells)) + 1;
    if (!(d.h > 0.0) || std::abs(cells - std::round(cells)) > 1e-9 * std::max(1.0, cells) || n < 3)
        throw DomainError("h must divide hi - lo into at least two cells");
    if (!(d.t_end > d.t_start) || d.snapshots < 1) throw DomainError("need t_end > t_start and snapshots >= 1");
    const TimeAxis axis{d.t_start, (d.t_end - d.t_start) / static_cast<double>(d.snapshots), d.snapshots};
    Grid g = d.dim == 1 ? Grid::interval(d.lo, d.hi, n, axis) : Grid::square(d.lo, d.hi, n, axis);
    if (d.mask == "ball") g = g.with_ball_mask({d.mask_center[0], d.dim == 2 ? d.mask_center[1] : 0.0}, d.mask_radius);
    else if (d.mask != "none") throw DomainError("mask must be 'none' or 'ball'");
    return g;
}

/// The catalog member behind `phi`, when it is an exact solution.
inline std::optional<ExactSolution> exact_member(const RunConfig& c, const EllipticOperator& op) {
    const auto& b = c.boundary;
    const int dim = c.domain.dim;
    if (b.phi == "linear") return ExactSolution::linear({b.a[0], dim == 2 ? b.a[1] : 0.0}, b.b);
    if (b.phi == "caloric") return ExactSolution::caloric(SymmetricMatrix::from_rows(dim, b.q), op, b.b);
    if (b.phi == "degenerate_profile") return ExactSolution::degenerate_profile(c.equation.gamma, b.c, b.shift, b.b);
    return std::nullopt;
}

/// Boundary function for the config. `seed` feeds the random catalog member.
inline SpaceTimeFunction make_boundary(const RunConfig& c, const EllipticOperator& op, const Grid& grid,
                                       std::uint64_t seed) {
    const auto& b = c.boundary;
    if (auto ex = exact_member(c, op)) return as_function(*ex);
    if (b.phi == "zero") return [](const Point&) { return 0.0; };
    if (b.phi == "smooth") {
        const Vec k{b.wave[0], b.wave.size() > 1 ? b.wave[1] : 0.0};
        return [k, A = b.amplitude, d = b.drift, o = b.b](const Point& X) { return A * std::sin(dot(k, X.x)) + d * X.t + o; };
    }
    if (b.phi == "random") {
        // Nodal values a_i + b_i (t - t0) / (t1 - t0), uniform in [-A, A] and clamped.
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-b.amplitude, b.amplitude);
        std::vector<double> a(grid.size()), s(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            a[i] = u(rng);
            s[i] = u(rng);
        }
        const double t0 = grid.time().start, span = grid.time().end() - t0;
        return [grid, a, s, t0, span, A = b.amplitude](const Point& X) {
            std::array<std::size_t, kMaxDim> m{0, 0};
            for (int ax = 0; ax < grid.dim(); ++ax) {
                const auto axz = static_cast<std::size_t>(ax);
                const double r = std::round((X.x[axz] - grid.origin()[axz]) / grid.h());
                m[axz] = static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(grid.extent(ax) - 1)));
            }
            const std::size_t i = grid.index(m[0], m[1]);
            return std::clamp(a[i] + s[i] * (X.t - t0) / span, -A, A);
        };
    }
    if (b.phi == "file") {
        std::ifstream is(b.file);
        if (!is) throw DomainError("cannot open boundary file '" + b.file + "'");
        const SpaceTimeField f = read_grid_dump(is, grid.origin(), grid.time().start);
        const Grid& fg = f.grid();
        if (fg.nx() != grid.nx() || fg.ny() != grid.ny() || std::abs(fg.h() - grid.h()) > 1e-12)
            throw DomainError("boundary file grid does not match the domain");
        return [f](const Point& X) {
            const Grid& g = f.grid();
            const auto idx = g.locate(X.x);
            if (!idx) throw DomainError("boundary file queried off the grid");
            const double s = std::clamp((X.t - g.time().start) / g.dt(), 0.0, static_cast<double>(g.steps()));
            const auto k = std::min(static_cast<std::size_t>(s), g.steps() > 0 ? g.steps() - 1 : 0);
            if (g.steps() == 0) return f.at(*idx, 0);
            const double w = s - static_cast<double>(k);
            return (1.0 - w) * f.at(*idx, k) + w * f.at(*idx, k + 1);
        };
    }
    throw DomainError("unknown boundary function '" + b.phi + "'");
}

/// Validation rules that need more than one key; empty when valid.
inline std::vector<std::string> validate(const RunConfig& c) {
    std::vector<std::string> e;
    const auto& q = c.equation;
    const auto& d = c.domain;
    const auto& b = c.boundary;
    const auto& k = c.checks;
    const bool dim_ok = d.dim == 1 || d.dim == 2;
    if (!dim_ok) e.push_back("[domain] dim must be 1 or 2");
    if (dim_ok) {
        try {
            make_grid(d);
        } catch (const DomainError& x) {
            e.push_back(std::string("[domain] ") + x.what());
        }
    }
    if (d.dt && !(*d.dt > 0.0)) e.push_back("[domain] dt must be positive or 'auto'");
    if (!(d.cfl > 0.0 && d.cfl < 1.0)) e.push_back("[domain] cfl must lie in (0, 1)");
    if (!cfg::one_of(d.stencil, {"centered", "wide"})) e.push_back("[domain] stencil must be 'centered' or 'wide'");
    if (!cfg::one_of(d.gradient, {"centered", "forward"})) e.push_back("[domain] gradient must be 'centered' or 'forward'");
    if (d.mask_center.size() < static_cast<std::size_t>(std::max(d.dim, 1)))
        e.push_back("[domain] mask_center needs one coordinate per dimension");

    if (!cfg::one_of(q.op, cfg::operator_names())) e.push_back("[equation] unknown operator '" + q.op + "'");
    else if (dim_ok) {
        try {
            make_operator(q, d.dim);
        } catch (const DomainError& x) {
            e.push_back(std::string("[equation] operator: ") + x.what());
        }
    }
    if (!cfg::one_of(q.mode, {"regularized", "singular"})) e.push_back("[equation] mode must be 'regularized' or 'singular'");
    if (q.epsilons.empty()) {
        if (q.mode == "singular" && q.gamma < 0.0)
            e.push_back("[equation] singular profile with gamma < 0 is unbounded at p = 0 and cannot be marched");
        try {
            DegeneracyProfile(q.gamma, q.epsilon, q.mode == "singular" ? DegeneracyMode::Singular : DegeneracyMode::Regularized);
        } catch (const DomainError& x) {
            e.push_back(std::string("[equation] degeneracy profile: ") + x.what());
        }
        if (!q.thetas.empty()) e.push_back("[equation] thetas need an epsilons list");
    } else {
        if (!(q.gamma > -2.0)) e.push_back("[equation] cascade needs gamma > -2");
        for (std::size_t i = 0; i < q.epsilons.size(); ++i) {
            if (!(q.epsilons[i] > 0.0)) e.push_back("[equation] epsilons must be positive");
            if (i > 0 && !(q.epsilons[i] < q.epsilons[i - 1])) e.push_back("[equation] epsilons must be strictly decreasing");
        }
        if (!q.thetas.empty() && q.thetas.size() != q.epsilons.size())
            e.push_back("[equation] thetas must match epsilons in length");
    }

    if (!cfg::one_of(b.phi, cfg::phi_names())) {
        e.push_back("[boundary] unknown boundary function '" + b.phi + "'");
    } else if (dim_ok) {
        const auto need = static_cast<std::size_t>(d.dim);
        if (b.phi == "linear" && b.a.size() < need) e.push_back("[boundary] a needs one entry per dimension");
        if (b.phi == "caloric" && b.q.size() != need * need) e.push_back("[boundary] q needs dim*dim entries");
        if (b.phi == "caloric" && !(q.gamma == 0.0)) e.push_back("[boundary] caloric data solves the equation only for gamma = 0");
        if (b.phi == "degenerate_profile") {
            if (!(q.gamma > -1.0)) e.push_back("[boundary] degenerate_profile needs gamma > -1");
            if (!(b.c > 0.0)) e.push_back("[boundary] degenerate_profile needs c > 0");
            if (dim_ok && d.lo < b.shift) e.push_back("[boundary] degenerate_profile needs lo >= shift");
        }
        if (b.phi == "smooth" && b.wave.size() < need) e.push_back("[boundary] wave needs one entry per dimension");
        if (b.phi == "file" && b.file.empty()) e.push_back("[boundary] file is empty");
    }

    auto positive = [&](double v, const char* name) {
        if (!(v > 0.0)) e.push_back(std::string("[checks] ") + name + " must be positive");
    };
    positive(k.exact_tol, "exact_tol");
    positive(k.max_principle_tol, "max_principle_tol");
    positive(k.gradient_C, "gradient_C");
    positive(k.barrier_tol, "barrier_tol");
    positive(k.time_margin, "time_margin");
    positive(k.uniformity_tol, "uniformity_tol");
    positive(k.r0, "r0");
    positive(k.rescale_radius, "rescale_radius");
    if (k.center.size() < static_cast<std::size_t>(std::max(d.dim, 1)))
        e.push_back("[checks] center needs one coordinate per dimension");
    if (k.exact && !cfg::one_of(b.phi, {"linear", "caloric", "degenerate_profile"}))
        e.push_back("[checks] exact needs an exact boundary function (linear, caloric, degenerate_profile)");
    if (k.barrier && !(d.mask == "ball" && d.mask_radius == 1.0 && d.dim == 2))
        e.push_back("[checks] barrier needs a two-dimensional unit-ball mask");
    if (k.dichotomy) {
        DichotomyParams p = DichotomyParams::from_thresholds(k.eps0, k.eps1, k.eta, k.tau, k.delta);
        for (const auto& v : p.violations(q.gamma)) e.push_back("[checks] " + v);
    }
    if (k.uniformity && q.epsilons.size() < 2) e.push_back("[checks] uniformity needs at least two epsilons");
    for (const auto& f : c.output.formats)
        if (!cfg::one_of(f, {"dump", "csv", "summary"})) e.push_back("[output] unknown format '" + f + "'");
    return e;
}

/// Parses INI text. Throws ConfigError listing every problem found.
inline RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream is(text);
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& x) {
        throw ConfigError({std::string("syntax: line ") + std::to_string(x.line()) + ": " + x.message()});
    }
    std::vector<std::string> errors;
    RunConfig c;
    auto section = [&](const char* name) -> const pt::ptree* {
        const auto it = tree.find(name);
        return it == tree.not_found() ? nullptr : &it->second;
    };
    for (const auto& kv : tree) {
        if (kv.second.empty() && !kv.second.data().empty())
            errors.push_back("unknown key '" + kv.first + "' outside any section");
        else if (!cfg::one_of(kv.first, {"equation", "domain", "boundary", "checks", "output"}))
            errors.push_back("unknown section [" + kv.first + "]");
    }
    {
        cfg::SectionReader r(section("equation"), "equation", errors);
        auto& q = c.equation;
        r.real("gamma", q.gamma);
        r.real("epsilon", q.epsilon);
        r.list("epsilons", q.epsilons);
        r.list("thetas", q.thetas);
        r.text("mode", q.mode);
        r.text("operator", q.op);
        r.real("lambda", q.lambda);
        r.real("Lambda", q.Lambda);
        r.matrices("coefficients", q.coefficients);
        r.real("theta", q.theta);
        r.real("source", q.source);
        r.reject_unknown();
    }
    {
        cfg::SectionReader r(section("domain"), "domain", errors);
        auto& d = c.domain;
        r.integer("dim", d.dim);
        r.real("lo", d.lo);
        r.real("hi", d.hi);
        r.real("h", d.h);
        r.real("t_start", d.t_start);
        r.real("t_end", d.t_end);
        r.integer("snapshots", d.snapshots);
        r.optional_real("dt", d.dt);
        r.text("mask", d.mask);
        r.list("mask_center", d.mask_center);
        r.real("mask_radius", d.mask_radius);
        r.text("stencil", d.stencil);
        r.text("gradient", d.gradient);
        r.real("cfl", d.cfl);
        r.reject_unknown();
    }
    {
        cfg::SectionReader r(section("boundary"), "boundary", errors);
        auto& b = c.boundary;
        r.text("phi", b.phi);
        r.list("a", b.a);
        r.real("b", b.b);
        r.list("q", b.q);
        r.real("c", b.c);
        r.real("shift", b.shift);
        r.real("amplitude", b.amplitude);
        r.list("wave", b.wave);
        r.real("drift", b.drift);
        r.text("file", b.file);
        r.integer("seed", b.seed);
        r.reject_unknown();
    }
    {
        cfg::SectionReader r(section("checks"), "checks", errors);
        auto& k = c.checks;
        r.flag("exact", k.exact);
        r.real("exact_tol", k.exact_tol);
        r.flag("max_principle", k.max_principle);
        r.real("max_principle_tol", k.max_principle_tol);
        r.flag("gradient_max", k.gradient_max);
        r.real("gradient_C", k.gradient_C);
        r.flag("barrier", k.barrier);
        r.real("barrier_tol", k.barrier_tol);
        r.flag("time_modulus", k.time_modulus);
        r.real("time_margin", k.time_margin);
        r.flag("dichotomy", k.dichotomy);
        r.real("tau", k.tau);
        r.real("delta", k.delta);
        r.real("eps0", k.eps0);
        r.real("eps1", k.eps1);
        r.real("eta", k.eta);
        r.real("rescale_radius", k.rescale_radius);
        r.flag("uniformity", k.uniformity);
        r.real("uniformity_tol", k.uniformity_tol);
        r.list("center", k.center);
        r.optional_real("center_t", k.center_t);
        r.real("r0", k.r0);
        r.reject_unknown();
    }
    {
        cfg::SectionReader r(section("output"), "output", errors);
        r.text("dir", c.output.dir);
        r.words("formats", c.output.formats);
        r.reject_unknown();
    }
    if (errors.empty()) errors = validate(c);
    if (!errors.empty()) throw ConfigError(errors);
    return c;
}

/// INI text with every key, defaults included.
inline std::string render_config(const RunConfig& c) {
    using cfg::fmt;
    using cfg::fmt_list;
    std::ostringstream os;
    const auto& q = c.equation;
    os << "[equation]\n"
       << "gamma = " << fmt(q.gamma) << "\n"
       << "epsilon = " << fmt(q.epsilon) << "\n"
       << "epsilons = " << fmt_list(q.epsilons) << "\n"
       << "thetas = " << fmt_list(q.thetas) << "\n"
       << "mode = " << q.mode << "\n"
       << "operator = " << q.op << "\n"
       << "lambda = " << fmt(q.lambda) << "\n"
       << "Lambda = " << fmt(q.Lambda) << "\n";
    os << "coefficients = ";
    for (std::size_t i = 0; i < q.coefficients.size(); ++i) os << (i ? " | " : "") << fmt_list(q.coefficients[i]);
    os << "\n"
       << "theta = " << fmt(q.theta) << "\n"
       << "source = " << fmt(q.source) << "\n\n";
    const auto& d = c.domain;
    os << "[domain]\n"
       << "dim = " << d.dim << "\n"
       << "lo = " << fmt(d.lo) << "\n"
       << "hi = " << fmt(d.hi) << "\n"
       << "h = " << fmt(d.h) << "\n"
       << "t_start = " << fmt(d.t_start) << "\n"
       << "t_end = " << fmt(d.t_end) << "\n"
       << "snapshots = " << d.snapshots << "\n"
       << "dt = " << (d.dt ? fmt(*d.dt) : "auto") << "\n"
       << "mask = " << d.mask << "\n"
       << "mask_center = " << fmt_list(d.mask_center) << "\n"
       << "mask_radius = " << fmt(d.mask_radius) << "\n"
       << "stencil = " << d.stencil << "\n"
       << "gradient = " << d.gradient << "\n"
       << "cfl = " << fmt(d.cfl) << "\n\n";
    const auto& b = c.boundary;
    os << "[boundary]\n"
       << "phi = " << b.phi << "\n"
       << "a = " << fmt_list(b.a) << "\n"
       << "b = " << fmt(b.b) << "\n"
       << "q = " << fmt_list(b.q) << "\n"
       << "c = " << fmt(b.c) << "\n"
       << "shift = " << fmt(b.shift) << "\n"
       << "amplitude = " << fmt(b.amplitude) << "\n"
       << "wave = " << fmt_list(b.wave) << "\n"
       << "drift = " << fmt(b.drift) << "\n"
       << "file = " << b.file << "\n"
       << "seed = " << b.seed << "\n\n";
    const auto& k = c.checks;
    auto flag = [](bool v) { return v ? "true" : "false"; };
    os << "[checks]\n"
       << "exact = " << flag(k.exact) << "\n"
       << "exact_tol = " << fmt(k.exact_tol) << "\n"
       << "max_principle = " << flag(k.max_principle) << "\n"
       << "max_principle_tol = " << fmt(k.max_principle_tol) << "\n"
       << "gradient_max = " << flag(k.gradient_max) << "\n"
       << "gradient_C = " << fmt(k.gradient_C) << "\n"
       << "barrier = " << flag(k.barrier) << "\n"
       << "barrier_tol = " << fmt(k.barrier_tol) << "\n"
       << "time_modulus = " << flag(k.time_modulus) << "\n"
       << "time_margin = " << fmt(k.time_margin) << "\n"
       << "dichotomy = " << flag(k.dichotomy) << "\n"
       << "tau = " << fmt(k.tau) << "\n"
       << "delta = " << fmt(k.delta) << "\n"
       << "eps0 = " << fmt(k.eps0) << "\n"
       << "eps1 = " << fmt(k.eps1) << "\n"
       << "eta = " << fmt(k.eta) << "\n"
       << "rescale_radius = " << fmt(k.rescale_radius) << "\n"
       << "uniformity = " << flag(k.uniformity) << "\n"
       << "uniformity_tol = " << fmt(k.uniformity_tol) << "\n"
       << "center = " << fmt_list(k.center) << "\n"
       << "center_t = " << (k.center_t ? fmt(*k.center_t) : "auto") << "\n"
       << "r0 = " << fmt(k.r0) << "\n\n";
    os << "[output]\n"
       << "dir = " << c.output.dir << "\n"
       << "formats = ";
    for (std::size_t i = 0; i < c.output.formats.size(); ++i) os << (i ? ", " : "") << c.output.formats[i];
    os << "\n";
    return os.str();
}

// --- run ------------------------------------------------------------------

enum class Subcommand { Solve, Cascade, Verify, Regularity };

inline const char* to_string(Subcommand s) {
    switch (s) {
        case Subcommand::Solve: return "solve";
        case Subcommand::Cascade: return "cascade";
        case Subcommand::Verify: return "verify";
        case Subcommand::Regularity: return "regularity";
    }
    return "?";
}

inline std::optional<Subcommand> parse_subcommand(const std::string& s) {
    for (auto c : {Subcommand::Solve, Subcommand::Cascade, Subcommand::Verify, Subcommand::Regularity})
        if (s == to_string(c)) return c;
    return std::nullopt;
}

enum ExitStatus : int { kExitOk = 0, kExitAssertion = 1, kExitAbort = 2, kExitConfig = 3 };

struct AssertionOutcome {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct RunReport {
    Subcommand subcommand = Subcommand::Solve;
    std::string config_echo;
    std::vector<std::string> digests;
    std::vector<AssertionOutcome> assertions;
    std::vector<std::string> warnings;
    std::vector<std::string> artifacts;
    std::string error;
    int exit_status = kExitOk;
};

struct RunOptions {
    std::optional<std::string> out_dir;
    std::size_t threads = 0;  // 0: $VISPAR_THREADS or 1
    std::optional<std::uint64_t> seed;
};

/// Writes `content` to `path` through a temporary file and a rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write " + tmp.string());
        os << content;
        os.flush();
        if (!os) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::string digest(const std::string& label, const SolveReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << label << ": sup|u| = " << r.sup_norm << ", sup|Du| = " << r.sup_gradient << ", sup|phi| on boundary = "
       << r.boundary_sup << ", steps = " << r.controller.accepted << " (rejected " << r.controller.rejected
       << "), dt in [" << r.controller.min_dt << ", " << r.controller.max_dt << "], compatibility residual = "
       << r.compatibility_residual << ", wall = " << r.wall_seconds << " s";
    return os.str();
}

inline std::string regularity_digest(const std::string& label, const RegularityReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << label << ":";
    if (r.alpha_space) os << " alpha = " << r.alpha_space->alpha << ", C = " << r.alpha_space->C;
    if (r.alpha_time_u) os << ", time exponent u = " << r.alpha_time_u->fitted << " (predicted " << r.alpha_time_u->predicted << ")";
    if (r.alpha_time_du) os << ", time exponent Du = " << r.alpha_time_du->fitted << " (predicted " << r.alpha_time_du->predicted << ")";
    for (const auto& n : r.notes) os << " [" << n << "]";
    if (r.outside_main_theorem) os << " [gamma <= -1: outside the main theorem]";
    return os.str();
}

inline std::string summary_text(const RunReport& r) {
    std::ostringstream os;
    os << "vispar " << to_string(r.subcommand) << "\n\n";
    for (const auto& d : r.digests) os << d << "\n";
    if (!r.assertions.empty()) os << "\n";
    for (const auto& a : r.assertions)
        os << (a.passed ? "PASS " : "FAIL ") << a.name << ": measured " << a.measured << ", tolerance " << a.tolerance
           << (a.detail.empty() ? "" : " (" + a.detail + ")") << "\n";
    for (const auto& w : r.warnings) os << "warning: " << w << "\n";
    if (!r.error.empty()) os << "error: " << r.error << "\n";
    os << "exit status " << r.exit_status << "\n\n# configuration\n" << r.config_echo;
    return os.str();
}

}  // namespace detail

inline std::string render_summary(const RunReport& r) { return detail::summary_text(r); }

/// Runs one subcommand. Artifacts go to options.out_dir or config.output.dir.
inline RunReport run(Subcommand sub, const RunConfig& config, const RunOptions& options = {}) {
    namespace fs = std::filesystem;
    RunReport rep;
    rep.subcommand = sub;
    rep.config_echo = render_config(config);
    const fs::path out = options.out_dir.value_or(config.output.dir);
    const auto& formats = config.output.formats;
    const auto want = [&](const char* f) { return cfg::one_of(f, formats); };
    const std::size_t threads = resolve_threads(options.threads);
    const std::uint64_t seed = options.seed.value_or(config.boundary.seed);

    std::string stage = "setup";
    auto emit = [&](const std::string& name, const std::string& content) {
        fs::create_directories(out);
        write_atomic(out / name, content);
        rep.artifacts.push_back((out / name).string());
    };
    auto check = [&](std::string name, bool passed, double measured, double tol, std::string detail = {}) {
        rep.assertions.push_back({std::move(name), passed, measured, tol, std::move(detail)});
    };

    try {
        const auto& q = config.equation;
        const Grid grid = make_grid(config.domain);
        const double h = grid.h();
        const EllipticOperator op = make_operator(q, config.domain.dim);
        const std::vector<double> epsilons = q.epsilons.empty() ? std::vector<double>{q.epsilon} : q.epsilons;
        const DegeneracyProfile profile =
            sub == Subcommand::Cascade ? DegeneracyProfile(q.gamma, epsilons.front()) : DegeneracyProfile(q.gamma, q.epsilon, parse_mode(q.mode));
        DirichletProblem problem{grid, op, profile, make_boundary(config, op, grid, seed), {}};
        if (q.source != 0.0) problem.source = [s = q.source](const Point&) { return s; };
        problem.scheme.hessian = config.domain.stencil == "wide" ? StencilKind::WideStencil : StencilKind::CenteredHessian;
        problem.scheme.gradient = config.domain.gradient == "forward" ? GradientMode::Forward : GradientMode::Centered;
        problem.cfl_safety = config.domain.cfl;
        problem.fixed_dt = config.domain.dt;
        problem.threads = threads;
        const auto& k = config.checks;
        const Point center{{k.center[0], config.domain.dim == 2 ? k.center[1] : 0.0},
                           k.center_t.value_or(grid.time().end())};

        auto dump = [&](const std::string& name, const SpaceTimeField& f) {
            if (!want("dump")) return;
            std::ostringstream os;
            write_grid_dump(os, f);
            emit(name, os.str());
        };

        if (sub == Subcommand::Cascade) {
            stage = "cascade";
            const CascadeResult c = solve_cascade(problem, epsilons, q.thetas);
            std::ostringstream dist;
            dist << "epsilon_i,epsilon_j,sup_distance\r\n";
            bool any_failed = false;
            for (std::size_t i = 0; i < c.members.size(); ++i) {
                const auto& m = c.members[i];
                const std::string label = "eps = " + cfg::fmt(m.epsilon);
                if (!m.report) {
                    rep.error += (rep.error.empty() ? "" : "; ") + std::string("cascade (") + label + "): " + m.error;
                    any_failed = true;
                    continue;
                }
                rep.digests.push_back(detail::digest(label, *m.report));
                for (const auto& w : m.report->warnings) rep.warnings.push_back(label + ": " + w);
                dump("member_" + std::to_string(i) + ".vgrid", m.report->solution);
                for (std::size_t j = i + 1; j < c.members.size(); ++j)
                    dist << cfg::fmt(m.epsilon) << ',' << cfg::fmt(c.members[j].epsilon) << ','
                         << cfg::fmt(c.distances[i][j]) << "\r\n";
            }
            if (c.outside_main_theorem) rep.warnings.push_back("gamma <= -1: regularity measurements lie outside the main theorem");
            if (want("csv")) emit("distances.csv", dist.str());
            if (any_failed) {
                rep.exit_status = kExitAbort;
            } else {
                stage = "regularity";
                std::vector<double> alphas, cs;
                for (std::size_t i = 0; i < c.members.size(); ++i) {
                    const auto& m = c.members[i];
                    RegularityReport r = measure_regularity(m.report->solution, center, k.r0, q.gamma, m.epsilon);
                    r.outside_main_theorem = c.outside_main_theorem;
                    rep.digests.push_back(detail::regularity_digest("regularity eps = " + cfg::fmt(m.epsilon), r));
                    if (want("csv")) {
                        std::ostringstream os;
                        write_regularity_csv(os, r);
                        emit("regularity_" + std::to_string(i) + ".csv", os.str());
                    }
                    if (r.alpha_space) {
                        alphas.push_back(r.alpha_space->alpha);
                        cs.push_back(r.alpha_space->C);
                    }
                }
                if (k.uniformity) {
                    const bool flat = alphas.size() != c.members.size();
                    const double v = flat ? std::numeric_limits<double>::infinity()
                                          : std::max(relative_spread(alphas), relative_spread(cs));
                    check("uniform Holder spread", !flat && v <= k.uniformity_tol, v, k.uniformity_tol,
                          flat ? "flat field in some member" : "");
                    const auto d = c.consecutive_distances();
                    bool dec = true;
                    for (std::size_t i = 1; i < d.size(); ++i) dec = dec && d[i] < d[i - 1];
                    check("cascade distances decreasing", dec, d.empty() ? 0.0 : d.back(), 0.0);
                }
            }
        } else {
            stage = "solve";
            const SolveReport r = solve(problem);
            rep.digests.push_back(detail::digest("solve", r));
            rep.warnings.insert(rep.warnings.end(), r.warnings.begin(), r.warnings.end());
            dump("solution.vgrid", r.solution);
            if (sub == Subcommand::Verify) {
                stage = "verify";
                if (k.exact) {
                    const auto ex = *exact_member(config, op);
                    double err = 0.0;
                    for (std::size_t s = 0; s < grid.slices(); ++s)
                        for (std::size_t i = 0; i < grid.size(); ++i)
                            if (r.active[i] || r.ring[i])
                                err = std::max(err, std::abs(r.solution.at(i, s) - exact_value(ex, grid.point(i, s))));
                    check("exact solution error", err <= k.exact_tol, err, k.exact_tol, to_string(ex.family));
                }
                if (k.max_principle) {
                    const auto m = assert_max_principle(r, k.max_principle_tol);
                    check("maximum principle", m.passed, m.sup_interior - m.sup_boundary, k.max_principle_tol);
                }
                if (k.gradient_max) {
                    const double tol = gradient_tolerance(h, k.gradient_C);
                    const auto g = assert_gradient_max(r, tol);
                    check("gradient maximum", g.passed, g.excess, tol);
                }
                if (k.barrier) {
                    const Vec c0{config.domain.mask_center[0], config.domain.mask_center[1]};
                    double worst = 0.0, worst_defect = -std::numeric_limits<double>::infinity();
                    bool ok = true;
                    std::size_t pts = 0;
                    for (Vec e : {Vec{1, 0}, Vec{-1, 0}, Vec{0, 1}, Vec{0, -1}}) {
                        for (int sign : {1, -1}) {
                            const auto s = make_barrier(problem, r, c0 + e, c0, sign);
                            const auto b = verify_barrier_domination(problem, r, s.spec, k.barrier_tol);
                            ok = ok && b.passed;
                            worst = std::max(worst, b.max_violation);
                            worst_defect = std::max(worst_defect, b.max_discrete_defect);
                            pts += b.omega_points;
                        }
                    }
                    check("barrier domination", ok, std::max(worst, worst_defect), k.barrier_tol,
                          std::to_string(pts) + " annulus points");
                }
            }
            if (sub == Subcommand::Regularity || (sub == Subcommand::Verify && (k.time_modulus || k.dichotomy))) {
                stage = "regularity";
                const RegularityReport reg = measure_regularity(r.solution, center, k.r0, q.gamma, q.epsilon);
                rep.digests.push_back(detail::regularity_digest("regularity", reg));
                if (want("csv")) {
                    std::ostringstream os;
                    write_regularity_csv(os, reg);
                    emit("regularity.csv", os.str());
                }
                if (k.time_modulus) {
                    if (reg.alpha_time_u)
                        check("time modulus", reg.alpha_time_u->fitted >= reg.alpha_time_u->predicted - k.time_margin,
                              reg.alpha_time_u->fitted, reg.alpha_time_u->predicted - k.time_margin, "fitted >= predicted - margin");
                    else
                        check("time modulus", false, 0.0, k.time_margin, "no fit: flat field");
                }
                if (k.dichotomy) {
                    const VectorField du = gradient_field(r.solution);
                    const double K = intrinsic_gradient_scale(du, center, k.rescale_radius, q.gamma);
                    if (!(K > 0.0)) {
                        check("dichotomy consistency", true, 0.0, 2.0 * h, "zero gradient");
                    } else {
                        const SpaceTimeField v = rescale_field(r.solution, center, k.rescale_radius, K, q.gamma);
                        const auto p = DichotomyParams::from_thresholds(k.eps0, k.eps1, k.eta, k.tau, k.delta);
                        const auto t = dichotomy_iterate(v, Point{{0.0, 0.0}, 0.0}, p, q.gamma, q.epsilon / K);
                        double worst = -std::numeric_limits<double>::infinity();
                        for (const auto& l : t.levels)
                            if (l.condition_held && l.next_evaluated) worst = std::max(worst, l.sup_grad_next - l.bound);
                        check("dichotomy consistency", t.consistent(2.0 * h), worst, 2.0 * h,
                              "m = " + std::to_string(t.m) + ", " + t.stop_reason);
                        if (want("csv")) {
                            std::ostringstream os;
                            write_dichotomy_csv(os, t);
                            emit("dichotomy.csv", os.str());
                        }
                    }
                }
            }
        }
        for (const auto& a : rep.assertions)
            if (!a.passed && rep.exit_status == kExitOk) rep.exit_status = kExitAssertion;
    } catch (const ConfigError& e) {
        rep.error = e.what();
        rep.exit_status = kExitConfig;
    } catch (const SolveAborted& e) {
        rep.error = stage + ": " + e.what();
        rep.exit_status = kExitAbort;
    } catch (const Error& e) {
        rep.error = stage + ": " + e.what();
        rep.exit_status = kExitAbort;
    }
    if (want("summary")) {
        try {
            emit("summary.txt", detail::summary_text(rep));
        } catch (const std::exception& e) {
            rep.error += (rep.error.empty() ? "" : "; ") + std::string(e.what());
        }
    }
    return rep;
}

}  // namespace vispar
