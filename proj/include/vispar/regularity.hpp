#pragma once

// Measurement of regularity: difference quotients, oscillation decay fits,
// time moduli, the density dichotomy on intrinsic cylinders, and
// uniformity across an epsilon cascade.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vispar/core.hpp"
#include "vispar/error.hpp"
#include "vispar/scheme.hpp"
#include "vispar/solver.hpp"

namespace vispar {

/// One SpaceTimeField per axis plus a per-node validity flag.
struct VectorField {
    std::vector<SpaceTimeField> components;
    std::vector<std::uint8_t> valid;

    const Grid& grid() const { return components.front().grid(); }
    double norm_at(std::size_t idx, std::size_t k) const {
        double s = 0.0;
        for (const auto& c : components) s += c.at(idx, k) * c.at(idx, k);
        return std::sqrt(s);
    }
    double dot_at(std::size_t idx, std::size_t k, const Vec& e) const {
        double s = 0.0;
        for (std::size_t a = 0; a < components.size(); ++a) s += components[a].at(idx, k) * e[a];
        return s;
    }
};

struct DifferenceQuotient {
    VectorField quotient;  // u_k^h
    SpaceTimeField v;      // sum_k (u_k^h)^2
};

/// Forward quotients (u(x + h e_k, t) - u(x, t)) / h. Nodes whose forward
/// neighbor falls off the box are marked invalid.
inline DifferenceQuotient difference_quotient_field(const SpaceTimeField& u, double h) {
    const Grid& g = u.grid();
    const double ratio = h / g.h();
    const long step = std::lround(ratio);
    if (!(h > 0.0) || step < 1 || std::abs(ratio - static_cast<double>(step)) > 1e-9 * std::max(1.0, ratio))
        throw DomainError("difference step is not a multiple of the grid spacing");
    DifferenceQuotient out{{{}, std::vector<std::uint8_t>(g.size(), 0)}, SpaceTimeField(g)};
    for (int a = 0; a < g.dim(); ++a) out.quotient.components.emplace_back(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool ok = g.in_mask(i);
        for (int a = 0; a < g.dim() && ok; ++a) ok = g.neighbor(i, a == 0 ? step : 0, a == 1 ? step : 0).has_value();
        out.quotient.valid[i] = ok;
    }
    const double hh = static_cast<double>(step) * g.h();
    for (std::size_t k = 0; k < g.slices(); ++k) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!out.quotient.valid[i]) continue;
            double v = 0.0;
            for (int a = 0; a < g.dim(); ++a) {
                const std::size_t j = *g.neighbor(i, a == 0 ? step : 0, a == 1 ? step : 0);
                const double q = (u.at(j, k) - u.at(i, k)) / hh;
                out.quotient.components[static_cast<std::size_t>(a)].at(i, k) = q;
                v += q * q;
            }
            out.v.at(i, k) = v;
        }
    }
    return out;
}

/// Centered gradient, second-order one-sided at box faces; valid on the domain nodes.
inline VectorField gradient_field(const SpaceTimeField& u) {
    const Grid& g = u.grid();
    VectorField out{{}, std::vector<std::uint8_t>(g.size(), 0)};
    for (int a = 0; a < g.dim(); ++a) out.components.emplace_back(g);
    for (std::size_t i = 0; i < g.size(); ++i) out.valid[i] = g.in_mask(i);
    for (std::size_t k = 0; k < g.slices(); ++k) {
        const auto s = u.slice(k);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!out.valid[i]) continue;
            for (int a = 0; a < g.dim(); ++a) {
                const long di = a == 0 ? 1 : 0, dj = a == 1 ? 1 : 0;
                const auto f1 = g.neighbor(i, di, dj), b1 = g.neighbor(i, -di, -dj);
                double v = 0.0;
                if (f1 && b1) {
                    v = (s[*f1] - s[*b1]) / (2.0 * g.h());
                } else if (f1) {
                    const auto f2 = g.neighbor(i, 2 * di, 2 * dj);
                    v = f2 ? (-3.0 * s[i] + 4.0 * s[*f1] - s[*f2]) / (2.0 * g.h()) : (s[*f1] - s[i]) / g.h();
                } else if (b1) {
                    const auto b2 = g.neighbor(i, -2 * di, -2 * dj);
                    v = b2 ? (3.0 * s[i] - 4.0 * s[*b1] + s[*b2]) / (2.0 * g.h()) : (s[i] - s[*b1]) / g.h();
                }
                out.components[static_cast<std::size_t>(a)].at(i, k) = v;
            }
        }
    }
    return out;
}

/// Calls fn(idx, k) for valid nodes inside the closed region. Regions may
/// extend past the grid; only the intersection is visited.
template <class Fn>
void for_each_valid_in(const VectorField& f, const Cylinder& region, Fn&& fn) {
    for_each_in(f.grid(), region, [&](std::size_t i, std::size_t k) {
        if (f.valid[i]) fn(i, k);
    });
}

/// Per-component oscillations over the region.
inline std::vector<double> component_oscillations(const VectorField& f, const Cylinder& region) {
    const std::size_t n = f.components.size();
    std::vector<double> lo(n, std::numeric_limits<double>::infinity()), hi(n, -std::numeric_limits<double>::infinity());
    std::size_t count = 0;
    for_each_valid_in(f, region, [&](std::size_t i, std::size_t k) {
        ++count;
        for (std::size_t a = 0; a < n; ++a) {
            const double v = f.components[a].at(i, k);
            lo[a] = std::min(lo[a], v);
            hi[a] = std::max(hi[a], v);
        }
    });
    if (count == 0) throw DomainError("region contains no valid grid point");
    std::vector<double> out(n);
    for (std::size_t a = 0; a < n; ++a) out[a] = hi[a] - lo[a];
    return out;
}

inline std::vector<double> dyadic_radii(double r0, std::size_t count = 6) {
    if (!(r0 > 0.0)) throw DomainError("radius must be positive");
    std::vector<double> r(count);
    for (std::size_t i = 0; i < count; ++i) r[i] = std::ldexp(r0, -static_cast<int>(i));
    return r;
}

struct LogLogFit {
    double slope = 0.0;
    double constant = 0.0;  // exp(intercept)
    double residual = 0.0;  // max |log y - fit|
};

inline LogLogFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    LogLogFit f;
    f.slope = sxy / sxx;
    const double b = my - f.slope * mx;
    f.constant = std::exp(b);
    for (std::size_t i = 0; i < n; ++i)
        f.residual = std::max(f.residual, std::abs(std::log(y[i]) - (b + f.slope * std::log(x[i]))));
    return f;
}

struct HolderFit {
    double alpha = 0.0;
    double C = 0.0;
    double residual = 0.0;
    std::vector<double> radii;
    std::vector<std::vector<double>> component_osc;  // [radius][component]
    std::vector<double> oscillation;                 // sum over components
};

/// Fits sum_k osc_{Q_r(Y)} D_k u = C r^alpha over the given radii.
inline HolderFit fit_oscillation_decay(const VectorField& du, const Point& center, const std::vector<double>& radii) {
    if (radii.size() < 4) throw DomainError("oscillation fit needs at least four radii");
    HolderFit out;
    out.radii = radii;
    double scale = 1.0;
    for (double r : radii) {
        const Cylinder q(center, r);
        out.component_osc.push_back(component_oscillations(du, q));
        double s = 0.0;
        for (double v : out.component_osc.back()) s += v;
        out.oscillation.push_back(s);
        for_each_valid_in(du, q, [&](std::size_t i, std::size_t k) { scale = std::max(scale, du.norm_at(i, k)); });
    }
    const double floor = 10.0 * std::numeric_limits<double>::epsilon() * scale;
    for (double o : out.oscillation)
        if (o < floor) throw FlatField("oscillation below the resolvable floor; no exponent fit");
    const LogLogFit f = fit_log_log(out.radii, out.oscillation);
    out.alpha = f.slope;
    out.C = f.constant;
    out.residual = f.residual;
    return out;
}

/// (1 + alpha) / (2 - alpha gamma), the time exponent for u.
inline double predicted_time_exponent(double alpha, double gamma) {
    const double d = 2.0 - alpha * gamma;
    if (!(d > 0.0)) throw DomainError("2 - alpha gamma must be positive");
    return (1.0 + alpha) / d;
}

/// alpha / (2 - alpha gamma), the time exponent for Du.
inline double predicted_gradient_time_exponent(double alpha, double gamma) {
    const double d = 2.0 - alpha * gamma;
    if (!(d > 0.0)) throw DomainError("2 - alpha gamma must be positive");
    return alpha / d;
}

struct TimeFit {
    double fitted = 0.0;
    double predicted = 0.0;
    double C = 0.0;
    double residual = 0.0;
    std::vector<double> lags;
    std::vector<double> increments;
};

namespace detail {
inline std::size_t check_time_point(const Grid& g, std::size_t idx) {
    if (idx >= g.size() || !g.in_mask(idx) || g.depth(idx) == 0)
        throw DomainError("time modulus needs an interior point");
    std::size_t lags = 0;
    for (std::size_t L = 1; L <= g.steps(); L *= 2) ++lags;
    if (lags < 4) throw DomainError("time modulus needs at least four dyadic lags (eight time steps)");
    return lags;
}

template <class Diff>
TimeFit fit_time_increments(const Grid& g, std::size_t lags, Diff&& diff, double scale) {
    TimeFit out;
    for (std::size_t j = 0, L = 1; j < lags; ++j, L *= 2) {
        double inc = 0.0;
        for (std::size_t k = 0; k + L < g.slices(); ++k) inc = std::max(inc, diff(k, k + L));
        out.lags.push_back(g.dt() * static_cast<double>(L));
        out.increments.push_back(inc);
    }
    const double floor = 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale);
    for (double v : out.increments)
        if (v < floor) throw FlatField("field is flat in time; no exponent fit");
    const LogLogFit f = fit_log_log(out.lags, out.increments);
    out.fitted = f.slope;
    out.C = f.constant;
    out.residual = f.residual;
    return out;
}
}  // namespace detail

/// Fits sup_t |u(x, t + L) - u(x, t)| = C L^e over dyadic snapshot lags.
inline TimeFit fit_time_modulus(const SpaceTimeField& u, std::size_t idx, double gamma, double alpha_space) {
    const Grid& g = u.grid();
    const std::size_t lags = detail::check_time_point(g, idx);
    double scale = 0.0;
    for (std::size_t k = 0; k < g.slices(); ++k) scale = std::max(scale, std::abs(u.at(idx, k)));
    TimeFit out = detail::fit_time_increments(
        g, lags, [&](std::size_t a, std::size_t b) { return std::abs(u.at(idx, b) - u.at(idx, a)); }, scale);
    out.predicted = predicted_time_exponent(std::min(alpha_space, 1.0), gamma);
    return out;
}

/// Same fit for |Du(x, t + L) - Du(x, t)|.
inline TimeFit fit_time_modulus(const VectorField& du, std::size_t idx, double gamma, double alpha_space) {
    const Grid& g = du.grid();
    const std::size_t lags = detail::check_time_point(g, idx);
    double scale = 0.0;
    for (std::size_t k = 0; k < g.slices(); ++k) scale = std::max(scale, du.norm_at(idx, k));
    TimeFit out = detail::fit_time_increments(
        g, lags,
        [&](std::size_t a, std::size_t b) {
            double s = 0.0;
            for (const auto& c : du.components) s += (c.at(idx, b) - c.at(idx, a)) * (c.at(idx, b) - c.at(idx, a));
            return std::sqrt(s);
        },
        scale);
    out.predicted = predicted_gradient_time_exponent(std::min(alpha_space, 1.0), gamma);
    return out;
}

/// Fraction of valid nodes of the region (all slices) with Du . e <= level.
inline double density_check(const VectorField& du, const Vec& e, double level, const Cylinder& region) {
    if (std::abs(norm(e) - 1.0) > 1e-12) throw DomainError("direction must be a unit vector");
    std::size_t total = 0, below = 0;
    for_each_valid_in(du, region, [&](std::size_t i, std::size_t k) {
        ++total;
        if (du.dot_at(i, k, e) <= level) ++below;
    });
    if (total == 0) throw DomainError("region contains no valid grid point");
    return static_cast<double>(below) / static_cast<double>(total);
}

/// +-axis directions, then `angles` equally spaced planar angles when dim = 2.
inline std::vector<Vec> sample_directions(int dim, std::size_t angles = 16) {
    if (dim == 1) return {Vec{1.0, 0.0}, Vec{-1.0, 0.0}};
    std::vector<Vec> d{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
    for (std::size_t j = 0; j < angles; ++j) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(angles);
        d.push_back({std::cos(a), std::sin(a)});
    }
    return d;
}

struct DichotomyParams {
    double l = 0.995;
    double mu = 0.01;
    double delta = 0.1;
    double tau = 0.25;
    double eps0 = 0.1;
    double eps1 = 0.01;  // in units of |Q_1|
    double eta = 0.05;

    /// l = 1 - eps0^2 / 2 and mu = eps1 / |Q_1| with eps1 given in units of |Q_1|.
    static DichotomyParams from_thresholds(double eps0, double eps1, double eta, double tau, double delta) {
        DichotomyParams p;
        p.eps0 = eps0;
        p.eps1 = eps1;
        p.eta = eta;
        p.tau = tau;
        p.delta = delta;
        p.l = 1.0 - eps0 * eps0 / 2.0;
        p.mu = eps1;
        return p;
    }

    /// Every violated rule, empty when valid.
    std::vector<std::string> violations(double gamma) const {
        std::vector<std::string> v;
        if (!(l > 0.5 && l < 1.0)) v.push_back("l must lie in (1/2, 1)");
        if (!(mu > 0.0)) v.push_back("mu must be positive");
        if (!(delta > 0.0 && delta < 1.0)) v.push_back("delta must lie in (0, 1)");
        if (!(tau > 0.0)) v.push_back("tau must be positive");
        if (!(eps0 > 0.0) || !(eps1 > 0.0) || !(eta > 0.0)) v.push_back("eps0, eps1, eta must be positive");
        if (delta > 0.0 && delta < 1.0 && tau > 0.0) {
            const double bound = std::min(1.0 - delta, std::pow(1.0 - delta, 1.0 + gamma));
            if (!(tau < bound)) {
                std::ostringstream os;
                os << "tau condition violated: tau < min(1 - delta, (1 - delta)^(1 + gamma)) = " << bound
                   << ", got tau = " << tau;
                v.push_back(os.str());
            }
        }
        return v;
    }

    void validate(double gamma) const {
        const auto v = violations(gamma);
        if (v.empty()) return;
        std::string msg;
        for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
        throw DomainError(msg);
    }
};

/// Q_{tau^{i+1}}^{(1-delta)^{i+1}} inside Q_{tau^i}^{(1-delta)^i} for
/// i = 0..levels-1: radii shrink and so do heights.
inline bool intrinsic_inclusion_holds(double tau, double delta, double gamma, std::size_t levels = 32) {
    const Point o{{0.0, 0.0}, 0.0};
    for (std::size_t i = 0; i < levels; ++i) {
        const double fi = static_cast<double>(i);
        const Cylinder outer = Cylinder::intrinsic(o, std::pow(tau, fi), std::pow(1.0 - delta, fi), gamma);
        const Cylinder inner = Cylinder::intrinsic(o, std::pow(tau, fi + 1), std::pow(1.0 - delta, fi + 1), gamma);
        if (inner.radius() > outer.radius() || inner.height() > outer.height()) return false;
    }
    return true;
}

struct DichotomyRow {
    std::size_t level = 0;
    std::size_t direction_index = 0;
    double fraction = 0.0;
    bool condition_held = false;  // fraction > mu
    double sup_grad_next = std::numeric_limits<double>::quiet_NaN();
};

struct DichotomyLevel {
    std::size_t level = 0;
    double radius = 0.0;
    double shrink = 0.0;           // (1 - delta)^i
    bool condition_held = false;   // for every sampled direction
    double min_fraction = 0.0;
    bool next_evaluated = false;
    double sup_grad_next = std::numeric_limits<double>::quiet_NaN();
    double bound = 0.0;            // (1 - delta)^{i+1}
};

struct DichotomyTrace {
    std::vector<DichotomyRow> rows;
    std::vector<DichotomyLevel> levels;
    std::size_t m1 = 0;
    std::optional<std::size_t> m2;
    std::size_t m = 0;
    std::string stop_reason;

    /// Every level where the condition held satisfies sup |Du| < bound + tol
    /// on the next cylinder.
    bool consistent(double tol) const {
        for (const auto& l : levels)
            if (l.condition_held && l.next_evaluated && !(l.sup_grad_next < l.bound + tol)) return false;
        return true;
    }
};

/// floor(log eps / log(1 - delta)); unbounded for eps = 0, zero for eps >= 1.
inline std::size_t dichotomy_m1(double epsilon, double delta) {
    if (epsilon <= 0.0) return std::numeric_limits<std::size_t>::max();
    if (epsilon >= 1.0) return 0;
    return static_cast<std::size_t>(std::floor(std::log(epsilon) / std::log(1.0 - delta)));
}

/// ũ(x, s) = u(y + rho x, t0 + rho^2 K^{-gamma} s) / (rho K), so that
/// Dũ = Du / K and Y maps to the origin. ũ solves the same equation with
/// F replaced by F.scaled(K / rho) and epsilon by epsilon / K.
inline SpaceTimeField rescale_field(const SpaceTimeField& u, const Point& center, double rho, double K, double gamma) {
    if (!(rho > 0.0) || !(K > 0.0)) throw DomainError("rescaling factors must be positive");
    const Grid& g = u.grid();
    const double ts = rho * rho * std::pow(K, -gamma);
    const Vec origin{(g.origin()[0] - center.x[0]) / rho, (g.origin()[1] - center.x[1]) / rho};
    Grid ng(g.dim(), origin, {g.nx(), g.ny()}, g.h() / rho,
            TimeAxis{(g.time().start - center.t) / ts, g.dt() / ts, g.steps()});
    if (g.has_mask()) ng = ng.with_mask(g.mask());
    std::vector<double> v(u.values().begin(), u.values().end());
    for (double& x : v) x /= rho * K;
    return SpaceTimeField(ng, std::move(v));
}

/// Sup of |Du| over the valid nodes of a region.
inline double sup_gradient_in(const VectorField& du, const Cylinder& region) {
    double s = 0.0;
    for_each_valid_in(du, region, [&](std::size_t i, std::size_t k) { s = std::max(s, du.norm_at(i, k)); });
    return s;
}

/// Smallest K (up to the fixed-point iteration) with sup|Du| <= K on the
/// cylinder of radius rho and time stretch K^{-gamma} around `center`, which
/// is where rescale_field with (rho, K) maps Q_1.
inline double intrinsic_gradient_scale(const VectorField& du, const Point& center, double rho, double gamma) {
    double K = sup_gradient_in(du, Cylinder(center, rho, 1.0));
    if (!(K > 0.0)) return 0.0;
    for (int it = 0; it < 100; ++it) {
        const double s = sup_gradient_in(du, Cylinder(center, rho, std::pow(K, -gamma)));
        if (s <= K) return K;
        K = s;
    }
    throw SolveAborted("intrinsic gradient scale did not settle");
}

/// Runs the density dichotomy on intrinsic cylinders around `center`,
/// starting from Q_1. Stops at the first level whose measure condition fails
/// (m2), at m1, or when the next cylinder is narrower than `min_cells` grid
/// spacings.
inline DichotomyTrace dichotomy_iterate(const SpaceTimeField& u, const Point& center, const DichotomyParams& params,
                                        double gamma, double epsilon, std::size_t angles = 16,
                                        double min_cells = 2.0) {
    params.validate(gamma);
    const VectorField du = gradient_field(u);
    const double h = u.grid().h();
    const auto dirs = sample_directions(u.grid().dim(), angles);
    DichotomyTrace tr;
    tr.m1 = dichotomy_m1(epsilon, params.delta);
    if (sup_gradient_in(du, Cylinder(center, 1.0)) > 1.0 + 1e-12)
        throw DomainError("sup |Du| exceeds 1 on the starting cylinder; rescale first");

    auto cylinder = [&](std::size_t i) {
        const double fi = static_cast<double>(i);
        return Cylinder::intrinsic(center, std::pow(params.tau, fi), std::pow(1.0 - params.delta, fi), gamma);
    };
    std::size_t i = 0;
    for (;; ++i) {
        if (i >= tr.m1) {
            tr.stop_reason = "reached m1";
            break;
        }
        const Cylinder q = cylinder(i);
        if (q.radius() < min_cells * h) {
            tr.stop_reason = "resolution limit";
            break;
        }
        DichotomyLevel lv;
        lv.level = i;
        lv.radius = q.radius();
        lv.shrink = std::pow(1.0 - params.delta, static_cast<double>(i));
        lv.bound = lv.shrink * (1.0 - params.delta);
        lv.min_fraction = 1.0;
        lv.condition_held = true;
        const std::size_t first_row = tr.rows.size();
        for (std::size_t d = 0; d < dirs.size(); ++d) {
            DichotomyRow row;
            row.level = i;
            row.direction_index = d;
            row.fraction = density_check(du, dirs[d], params.l * lv.shrink, q);
            row.condition_held = row.fraction > params.mu;
            lv.condition_held = lv.condition_held && row.condition_held;
            lv.min_fraction = std::min(lv.min_fraction, row.fraction);
            tr.rows.push_back(row);
        }
        if (!lv.condition_held) {
            tr.levels.push_back(lv);
            tr.m2 = i;
            tr.stop_reason = "measure condition failed";
            break;
        }
        const Cylinder next = cylinder(i + 1);
        if (next.radius() >= min_cells * h) {
            lv.next_evaluated = true;
            lv.sup_grad_next = sup_gradient_in(du, next);
            for (std::size_t r = first_row; r < tr.rows.size(); ++r) tr.rows[r].sup_grad_next = lv.sup_grad_next;
        }
        tr.levels.push_back(lv);
    }
    tr.m = std::min(tr.m1, tr.m2 ? *tr.m2 : i);
    return tr;
}

struct RegularityReport {
    double epsilon = 0.0;
    double gamma = 0.0;
    std::optional<HolderFit> alpha_space;
    std::optional<TimeFit> alpha_time_u;
    std::optional<TimeFit> alpha_time_du;
    std::optional<DichotomyTrace> dichotomy;
    std::vector<std::string> notes;  // flat-field signals and the like
    bool outside_main_theorem = false;
    bool flat() const { return !alpha_space.has_value(); }
};

/// Space fit over Q_{r0 2^{-i}}(Y), i = 0..5, and the time moduli of u and
/// Du at the spatial node of Y.
inline RegularityReport measure_regularity(const SpaceTimeField& u, const Point& center, double r0, double gamma,
                                           double epsilon = 0.0) {
    RegularityReport rep;
    rep.epsilon = epsilon;
    rep.gamma = gamma;
    rep.outside_main_theorem = gamma <= -1.0;
    const VectorField du = gradient_field(u);
    try {
        rep.alpha_space = fit_oscillation_decay(du, center, dyadic_radii(r0));
    } catch (const FlatField& e) {
        rep.notes.push_back(std::string("space: ") + e.what());
        return rep;
    }
    const auto idx = u.grid().locate(center.x);
    if (!idx) throw DomainError("regularity center is not a grid node");
    try {
        rep.alpha_time_u = fit_time_modulus(u, *idx, gamma, rep.alpha_space->alpha);
    } catch (const FlatField& e) {
        rep.notes.push_back(std::string("time u: ") + e.what());
    } catch (const DomainError& e) {
        rep.notes.push_back(std::string("time u: ") + e.what());
    }
    try {
        rep.alpha_time_du = fit_time_modulus(du, *idx, gamma, rep.alpha_space->alpha);
    } catch (const FlatField& e) {
        rep.notes.push_back(std::string("time Du: ") + e.what());
    } catch (const DomainError& e) {
        rep.notes.push_back(std::string("time Du: ") + e.what());
    }
    return rep;
}

/// (max - min) / |mean|.
inline double relative_spread(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (*hi == *lo) return 0.0;
    return (*hi - *lo) / std::abs(mean);
}

struct UniformityReport {
    std::vector<RegularityReport> members;
    double alpha_spread = 0.0;
    double C_spread = 0.0;
    double verdict = 0.0;  // max of the two spreads
};

/// Per-member regularity over Q_{r0}(Y) and the relative spread of the
/// fitted alpha and C. Flat members raise FlatField.
inline UniformityReport measure_uniform_holder(const CascadeResult& cascade, const Point& center, double r0 = 0.5) {
    if (cascade.members.size() < 2) throw DomainError("uniformity needs at least two cascade members");
    UniformityReport out;
    std::vector<double> alphas, cs;
    for (const auto& m : cascade.members) {
        if (!m.report) throw SolveAborted("cascade member eps = " + std::to_string(m.epsilon) + " failed: " + m.error);
        RegularityReport r = measure_regularity(m.report->solution, center, r0, cascade.gamma, m.epsilon);
        r.outside_main_theorem = cascade.outside_main_theorem;
        if (r.flat()) throw FlatField("cascade member eps = " + std::to_string(m.epsilon) + ": " + r.notes.front());
        alphas.push_back(r.alpha_space->alpha);
        cs.push_back(r.alpha_space->C);
        out.members.push_back(std::move(r));
    }
    out.alpha_spread = relative_spread(alphas);
    out.C_spread = relative_spread(cs);
    out.verdict = std::max(out.alpha_spread, out.C_spread);
    return out;
}

// --- CSV ------------------------------------------------------------------

namespace detail {
inline std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
}  // namespace detail

/// kind,radius,component,oscillation,exponent,constant,residual,predicted
inline void write_regularity_csv(std::ostream& os, const RegularityReport& r) {
    using detail::csv_number;
    os << "kind,radius,component,oscillation,exponent,constant,residual,predicted\r\n";
    if (r.alpha_space) {
        const auto& f = *r.alpha_space;
        for (std::size_t i = 0; i < f.radii.size(); ++i)
            for (std::size_t a = 0; a < f.component_osc[i].size(); ++a)
                os << "scale," << csv_number(f.radii[i]) << ',' << a << ',' << csv_number(f.component_osc[i][a])
                   << ",,,,\r\n";
        os << "fit_space,,,," << csv_number(f.alpha) << ',' << csv_number(f.C) << ',' << csv_number(f.residual)
           << ",\r\n";
    }
    auto time_row = [&](const char* kind, const std::optional<TimeFit>& t) {
        if (!t) return;
        os << kind << ",,,," << csv_number(t->fitted) << ',' << csv_number(t->C) << ',' << csv_number(t->residual)
           << ',' << csv_number(t->predicted) << "\r\n";
    };
    time_row("fit_time_u", r.alpha_time_u);
    time_row("fit_time_du", r.alpha_time_du);
}

/// level,direction_index,fraction,condition_held,sup_grad_next
inline void write_dichotomy_csv(std::ostream& os, const DichotomyTrace& t) {
    os << "level,direction_index,fraction,condition_held,sup_grad_next\r\n";
    for (const auto& r : t.rows)
        os << r.level << ',' << r.direction_index << ',' << detail::csv_number(r.fraction) << ','
           << (r.condition_held ? 1 : 0) << ',' << detail::csv_number(r.sup_grad_next) << "\r\n";
}

}  // namespace vispar
