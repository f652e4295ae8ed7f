#pragma once

// Analytic oracles: the boundary-gradient barriers, the exact-solution
// catalog, the oscillation barrier, and the a priori estimate checks run
// against solver output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "vispar/core.hpp"
#include "vispar/error.hpp"
#include "vispar/operators.hpp"
#include "vispar/scheme.hpp"
#include "vispar/solver.hpp"

namespace vispar {

// --- boundary barriers ----------------------------------------------------

/// w = phi + sign * f(d(x)), f(r) = log(1 + A r / B) / A, d(x) = |x - y| - 1.
/// `touch` is the boundary point x0 with |x0 - y| = 1; the domain is the unit
/// ball around `ball_center`.
struct BarrierSpec {
    double A = 1.0;
    double B = 1.0;
    Vec anchor{0.0, 0.0};
    Vec touch{0.0, 0.0};
    Vec ball_center{0.0, 0.0};
    int sign = 1;
    double m = 0.0;  // sup |u - phi|

    /// Outer radius of the annulus minus one: B (e^{A m} - 1) / A.
    double width() const { return B * std::expm1(A * m) / A; }
    double distance(const Vec& x) const { return norm(x - anchor) - 1.0; }
};

inline double barrier_profile(double A, double B, double r) { return std::log1p(A * r / B) / A; }
inline double barrier_slope(double A, double B, double r) { return 1.0 / (B + A * r); }
inline double barrier_curvature(double A, double B, double r) {
    const double s = barrier_slope(A, B, r);
    return -A * s * s;
}

namespace detail {
inline double barrier_extension(const BarrierSpec& s, const SpaceTimeFunction& phi, const Point& X) {
    const double d = s.distance(X.x);
    if (d < -kGeometryTol) throw DomainError("barrier evaluated inside the exterior ball");
    return phi(X) + s.sign * barrier_profile(s.A, s.B, std::max(d, 0.0));
}
}  // namespace detail

/// w(X) for X in the closed annulus 1 <= |x - y| <= 1 + width.
inline double barrier_value(const BarrierSpec& s, const SpaceTimeFunction& phi, const Point& X) {
    const double d = s.distance(X.x);
    const double tol = kGeometryTol * std::max(1.0, s.width());
    if (d < -tol || d > s.width() + tol) throw DomainError("point outside the barrier annulus");
    return detail::barrier_extension(s, phi, X);
}

/// Derivatives of a callable by centered differences with step `step`.
struct FunctionJet {
    double value = 0.0;
    Vec grad{0.0, 0.0};
    SymmetricMatrix hess;
    double dt = 0.0;
};

inline FunctionJet numeric_jet(const SpaceTimeFunction& f, const Point& X, int dim, double step = 1e-4) {
    FunctionJet j;
    j.value = f(X);
    auto at = [&](double dx, double dy, double dtime) { return f(Point{{X.x[0] + dx, X.x[1] + dy}, X.t + dtime}); };
    const double s = step;
    const double fxp = at(s, 0, 0), fxm = at(-s, 0, 0);
    j.grad[0] = (fxp - fxm) / (2 * s);
    const double fxx = (fxp - 2 * j.value + fxm) / (s * s);
    if (dim == 2) {
        const double fyp = at(0, s, 0), fym = at(0, -s, 0);
        j.grad[1] = (fyp - fym) / (2 * s);
        const double fyy = (fyp - 2 * j.value + fym) / (s * s);
        const double fxy = (at(s, s, 0) - at(s, -s, 0) - at(-s, s, 0) + at(-s, -s, 0)) / (4 * s * s);
        j.hess = SymmetricMatrix(2, fxx, fxy, fyy);
    } else {
        j.hess = SymmetricMatrix::diag(fxx);
    }
    j.dt = (at(0, 0, s) - at(0, 0, -s)) / (2 * s);
    return j;
}

/// sup|phi| + sup|D phi| + sup|D^2 phi| over the domain nodes of every slice.
inline double spatial_c2_norm(const SpaceTimeFunction& phi, const Grid& grid) {
    double s0 = 0, s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < grid.slices(); ++k) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!grid.in_mask(i)) continue;
            const FunctionJet j = numeric_jet(phi, grid.point(i, k), grid.dim());
            const auto ev = j.hess.eigenvalues();
            s0 = std::max(s0, std::abs(j.value));
            s1 = std::max(s1, norm(j.grad));
            s2 = std::max({s2, std::abs(ev[0]), grid.dim() == 2 ? std::abs(ev[1]) : 0.0});
        }
    }
    return s0 + s1 + s2;
}

/// sign * (w_t - g(Dw) F(D^2 w) - f) at X, using the closed-form derivatives
/// of f(d(x)) and numeric derivatives of phi. Positive means the barrier has
/// the required super- (sign +1) or sub- (sign -1) solution property.
inline double barrier_residual(const BarrierSpec& s, const SpaceTimeFunction& phi, const EllipticOperator& op,
                               const DegeneracyProfile& profile, const SpaceTimeFunction& source, const Point& X,
                               int dim) {
    const FunctionJet j = numeric_jet(phi, X, dim);
    const Vec z = X.x - s.anchor;
    const double rho = norm(z);
    const double d = std::max(rho - 1.0, 0.0);
    const Vec nrm = (1.0 / rho) * z;
    const double f1 = barrier_slope(s.A, s.B, d);
    const double f2 = barrier_curvature(s.A, s.B, d);
    Vec grad = j.grad + (s.sign * f1) * nrm;
    SymmetricMatrix hd, nn;
    if (dim == 2) {
        hd = SymmetricMatrix(2, (1.0 - nrm[0] * nrm[0]) / rho, -nrm[0] * nrm[1] / rho, (1.0 - nrm[1] * nrm[1]) / rho);
        nn = SymmetricMatrix(2, nrm[0] * nrm[0], nrm[0] * nrm[1], nrm[1] * nrm[1]);
    } else {
        grad[1] = 0.0;
        hd = SymmetricMatrix::diag(0.0);
        nn = SymmetricMatrix::diag(1.0);
    }
    const SymmetricMatrix hess = j.hess + static_cast<double>(s.sign) * (f1 * hd + f2 * nn);
    const double f = source ? source(X) : 0.0;
    return s.sign * (j.dt - profile(grad) * op(hess) - f);
}

/// Barrier constants for anchor point x0 on the unit sphere around
/// `ball_center`: y = x0 + (x0 - c), B^{-1} = 2 e^{(2 + 2/(gamma+2)) A m}
/// ||phi||_{C^2}.
inline BarrierSpec barrier_recipe(double gamma, double m, double phi_c2, double A, Vec touch, Vec ball_center,
                                  int sign) {
    if (!(gamma > -2.0)) throw DomainError("boundary barrier needs gamma > -2");
    if (!(A > 0.0)) throw DomainError("barrier constant A must be positive");
    if (sign != 1 && sign != -1) throw DomainError("barrier sign must be +1 or -1");
    if (std::abs(norm(touch - ball_center) - 1.0) > 1e-9) throw DomainError("anchor point is not on the unit sphere");
    BarrierSpec s;
    s.A = A;
    s.m = m;
    s.sign = sign;
    s.touch = touch;
    s.ball_center = ball_center;
    s.anchor = touch + (touch - ball_center);
    const double norm_phi = std::max(phi_c2, std::numeric_limits<double>::min());
    s.B = 1.0 / (2.0 * std::exp((2.0 + 2.0 / (gamma + 2.0)) * A * m) * norm_phi);
    return s;
}

struct BarrierSearch {
    BarrierSpec spec;
    std::size_t doublings = 0;
    std::size_t samples = 0;
    double min_residual = std::numeric_limits<double>::infinity();
};

/// Doubles A from 1 until the analytic residual is positive at every domain
/// node of every slice inside the annulus (and B <= sqrt 5 when gamma < 0).
inline BarrierSearch make_barrier(const DirichletProblem& problem, const SolveReport& report, Vec touch,
                                  Vec ball_center, int sign, std::size_t max_doublings = 60) {
    const Grid& g = problem.grid;
    double m = 0.0;
    for (std::size_t k = 0; k < g.slices(); ++k)
        for (std::size_t i = 0; i < g.size(); ++i)
            if (report.active[i] || report.ring[i])
                m = std::max(m, std::abs(report.solution.at(i, k) - problem.boundary(g.point(i, k))));
    const double phi_c2 = spatial_c2_norm(problem.boundary, g);
    const double gamma = problem.profile.gamma();
    BarrierSearch out;
    double A = 1.0;
    for (std::size_t n = 0; n <= max_doublings; ++n, A *= 2.0) {
        BarrierSpec s = barrier_recipe(gamma, m, phi_c2, A, touch, ball_center, sign);
        if (gamma < 0.0 && s.B > std::sqrt(5.0)) continue;
        double worst = std::numeric_limits<double>::infinity();
        std::size_t count = 0;
        for (std::size_t k = 0; k < g.slices(); ++k) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!g.in_mask(i)) continue;
                const double d = s.distance(g.coords(i));
                if (d <= 0.0 || d >= s.width()) continue;
                worst = std::min(worst, barrier_residual(s, problem.boundary, problem.op, problem.profile,
                                                         problem.source, g.point(i, k), g.dim()));
                ++count;
            }
        }
        if (worst > 0.0) {
            out.spec = s;
            out.doublings = n;
            out.samples = count;
            out.min_residual = worst;
            return out;
        }
    }
    throw DomainError("no barrier constant A found within the doubling budget");
}

/// Largest one-step defect of w as a discrete supersolution (sign +1):
/// max over `nodes` of S(w(t))_i - w(x_i, t + dt), where S is one explicit
/// step of the scheme. For sign -1 the subsolution defect is returned.
inline double discrete_barrier_defect(const Scheme& scheme, const SpaceTimeFunction& w, const SpaceTimeFunction& source,
                                      double t, double dt, const std::vector<std::size_t>& nodes, int sign) {
    const Grid& g = scheme.grid();
    std::vector<double> state(g.size(), 0.0), rate(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) state[i] = w(Point{g.coords(i), t});
    scheme.evaluate(state, t, source, rate, StepController{});
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i : nodes) {
        const double next = state[i] + dt * rate[i];
        const double exact = w(Point{g.coords(i), t + dt});
        worst = std::max(worst, sign * (next - exact));
    }
    return worst;
}

/// Time step for the one-step barrier check: the controller bound at w(t),
/// capped by the snapshot spacing.
inline double barrier_step(const Scheme& scheme, const SpaceTimeFunction& w, const SpaceTimeFunction& source,
                           double t, double cfl_safety) {
    const Grid& g = scheme.grid();
    std::vector<double> state(g.size()), rate(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) state[i] = w(Point{g.coords(i), t});
    StepController ctl;
    ctl.cfl_safety = cfl_safety;
    return std::min(g.dt(), scheme.evaluate(state, t, source, rate, ctl).allowed_dt);
}

struct BarrierCheck {
    bool passed = true;
    double max_violation = 0.0;           // max of sign * (u - w), over the annulus
    double max_discrete_defect = -std::numeric_limits<double>::infinity();
    std::size_t omega_points = 0;         // grid nodes of the annulus inside the domain, all slices
    std::size_t discrete_points = 0;      // active nodes in the annulus per slice, summed
    double A = 0.0;
    double B = 0.0;
    double width = 0.0;
};

/// u <= w+ + tol (sign +1) or u >= w- - tol (sign -1) on the annulus inside
/// the domain, and the one-step discrete super/subsolution property of w on
/// the active nodes of the annulus at every stored slice.
inline BarrierCheck verify_barrier_domination(const DirichletProblem& problem, const SolveReport& report,
                                              const BarrierSpec& spec, double tol) {
    const Grid& g = problem.grid;
    if (!g.has_mask()) throw DomainError("barrier check needs a ball-masked domain");
    if (std::abs(norm(spec.touch - spec.ball_center) - 1.0) > 1e-9 ||
        std::abs(norm(spec.touch - spec.anchor) - 1.0) > 1e-9)
        throw DomainError("barrier geometry does not match the unit ball");
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = norm(g.coords(i) - spec.ball_center);
        if (std::abs(r - 1.0) > kGeometryTol && g.in_mask(i) != (r < 1.0))
            throw DomainError("grid mask is not the unit ball of the barrier");
    }

    BarrierCheck out;
    out.A = spec.A;
    out.B = spec.B;
    out.width = spec.width();
    const SpaceTimeFunction w = [&](const Point& X) { return detail::barrier_extension(spec, problem.boundary, X); };
    std::vector<std::size_t> omega_active;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = spec.distance(g.coords(i));
        if (d <= 0.0 || d >= spec.width()) continue;
        if (!(report.active[i] || report.ring[i]) || !g.in_mask(i)) continue;
        if (report.active[i]) omega_active.push_back(i);
        for (std::size_t k = 0; k < g.slices(); ++k) {
            const double u = report.solution.at(i, k);
            out.max_violation = std::max(out.max_violation, spec.sign * (u - w(g.point(i, k))));
            ++out.omega_points;
        }
    }
    const Scheme scheme(g, problem.op, problem.profile, problem.scheme, problem.threads);
    if (!omega_active.empty()) {
        for (std::size_t k = 0; k + 1 < g.slices(); ++k) {
            const double t = g.time().at(k);
            const double dt = barrier_step(scheme, w, problem.source, t, problem.cfl_safety);
            out.max_discrete_defect = std::max(
                out.max_discrete_defect, discrete_barrier_defect(scheme, w, problem.source, t, dt, omega_active, spec.sign));
            out.discrete_points += omega_active.size();
        }
    }
    out.passed = out.max_violation <= tol && !(out.max_discrete_defect > tol);
    return out;
}

// --- exact solutions ------------------------------------------------------

enum class ExactFamily { Linear, Caloric, DegenerateProfile };

inline const char* to_string(ExactFamily f) {
    switch (f) {
        case ExactFamily::Linear: return "linear";
        case ExactFamily::Caloric: return "caloric";
        case ExactFamily::DegenerateProfile: return "degenerate_profile";
    }
    return "?";
}

/// Linear:  a.x + b.
/// Caloric: x^T Q x + F(2Q) t + b, a solution for gamma = 0.
/// DegenerateProfile: c t + k (x_1 - shift)^beta + b with beta = (gamma+2)/(gamma+1),
/// k = (gamma+1)^{1/(gamma+1)} (gamma+1)/(gamma+2) c^{1/(gamma+1)}; solves
/// u_t = |u_x|^gamma u_xx for x_1 > shift.
struct ExactSolution {
    ExactFamily family = ExactFamily::Linear;
    Vec a{0.0, 0.0};
    double b = 0.0;
    SymmetricMatrix q;
    double rate = 0.0;
    double gamma = 0.0;
    double c = 0.0;
    double shift = 0.0;

    static ExactSolution linear(Vec a, double b) {
        ExactSolution s;
        s.a = a;
        s.b = b;
        return s;
    }
    static ExactSolution caloric(const SymmetricMatrix& q, const EllipticOperator& op, double b = 0.0) {
        ExactSolution s;
        s.family = ExactFamily::Caloric;
        s.q = q;
        s.rate = op(2.0 * q);
        s.b = b;
        return s;
    }
    static ExactSolution degenerate_profile(double gamma, double c, double shift = 0.0, double b = 0.0) {
        if (!(gamma > -1.0)) throw DomainError("degenerate profile needs gamma > -1");
        if (!(c > 0.0)) throw DomainError("degenerate profile needs a positive time slope");
        ExactSolution s;
        s.family = ExactFamily::DegenerateProfile;
        s.gamma = gamma;
        s.c = c;
        s.shift = shift;
        s.b = b;
        return s;
    }

    double beta() const { return (gamma + 2.0) / (gamma + 1.0); }
    double k() const {
        const double g1 = gamma + 1.0;
        return std::pow(g1, 1.0 / g1) * g1 / (gamma + 2.0) * std::pow(c, 1.0 / g1);
    }
};

struct ExactJet {
    double value = 0.0;
    Vec gradient{0.0, 0.0};
    SymmetricMatrix hessian;
    double time_derivative = 0.0;
};

inline double exact_value(const ExactSolution& s, const Point& X) {
    switch (s.family) {
        case ExactFamily::Linear: return dot(s.a, X.x) + s.b;
        case ExactFamily::Caloric: {
            const double qx = s.q.dim() == 1 ? s.q(0, 0) * X.x[0] * X.x[0]
                                             : s.q(0, 0) * X.x[0] * X.x[0] + 2 * s.q(0, 1) * X.x[0] * X.x[1] +
                                                   s.q(1, 1) * X.x[1] * X.x[1];
            return qx + s.rate * X.t + s.b;
        }
        case ExactFamily::DegenerateProfile: {
            const double z = X.x[0] - s.shift;
            if (z < 0.0) throw DomainError("degenerate profile evaluated left of its vertex");
            return s.c * X.t + s.k() * std::pow(z, s.beta()) + s.b;
        }
    }
    return 0.0;
}

/// Value, gradient, Hessian and time derivative in dimension `dim`.
inline ExactJet exact_eval(const ExactSolution& s, const Point& X, int dim) {
    ExactJet j;
    j.value = exact_value(s, X);
    switch (s.family) {
        case ExactFamily::Linear:
            j.gradient = s.a;
            j.hessian = SymmetricMatrix::zero(dim);
            break;
        case ExactFamily::Caloric:
            if (s.q.dim() != dim) throw DomainError("caloric solution dimension mismatch");
            j.gradient = {2 * (s.q(0, 0) * X.x[0] + s.q(0, 1) * X.x[1]),
                          dim == 2 ? 2 * (s.q(0, 1) * X.x[0] + s.q(1, 1) * X.x[1]) : 0.0};
            j.hessian = 2.0 * s.q;
            j.time_derivative = s.rate;
            break;
        case ExactFamily::DegenerateProfile: {
            const double z = X.x[0] - s.shift;
            const double be = s.beta();
            if (z <= 0.0 && be < 2.0) throw DomainError("degenerate profile Hessian is singular at its vertex");
            const double k = s.k();
            j.gradient = {k * be * std::pow(z, be - 1.0), 0.0};
            const double uxx = k * be * (be - 1.0) * std::pow(z, be - 2.0);
            j.hessian = dim == 2 ? SymmetricMatrix::diag(uxx, 0.0) : SymmetricMatrix::diag(uxx);
            j.time_derivative = s.c;
            break;
        }
    }
    return j;
}

inline SpaceTimeFunction as_function(const ExactSolution& s) {
    return [s](const Point& X) { return exact_value(s, X); };
}

// --- oscillation barrier ----------------------------------------------------

/// gamma >= 0:      2A|x|^2 + 5 n A (1 + 16 A^2)^{gamma/2} Lambda t + offset
/// -1 < gamma < 0:  2A|x|^beta + (Lambda (n + beta - 2) (2 beta)^{gamma+1} + 1) A^{1+gamma} t + offset
struct OscBarrier {
    double gamma = 0.0;
    double A = 1.0;
    double Lambda = 1.0;
    int n = 1;
    double offset = 0.0;

    OscBarrier(double gamma_, double A_, double Lambda_, int n_, double offset_ = 0.0)
        : gamma(gamma_), A(A_), Lambda(Lambda_), n(n_), offset(offset_) {
        if (!(gamma > -1.0)) throw DomainError("oscillation barrier needs gamma > -1");
        if (!(A > 0.0) || !(Lambda > 0.0)) throw DomainError("oscillation barrier constants must be positive");
        if (n != 1 && n != 2) throw DomainError("oscillation barrier dimension must be 1 or 2");
    }

    bool negative_branch() const { return gamma < 0.0; }
    double beta() const { return (2.0 + gamma) / (1.0 + gamma); }
    double slope() const {
        if (!negative_branch()) return 5.0 * n * A * std::pow(1.0 + 16.0 * A * A, gamma / 2.0) * Lambda;
        const double be = beta();
        return (Lambda * (n + be - 2.0) * std::pow(2.0 * be, gamma + 1.0) + 1.0) * std::pow(A, 1.0 + gamma);
    }
    double value(const Point& X) const {
        const double r = norm(X.x);
        const double space = negative_branch() ? 2.0 * A * std::pow(r, beta()) : 2.0 * A * r * r;
        return space + slope() * X.t + offset;
    }
    SpaceTimeFunction function() const {
        return [b = *this](const Point& X) { return b.value(X); };
    }
};

/// One-step supersolution defect of the oscillation barrier over the active
/// nodes in the closed unit ball.
inline double osc_barrier_defect(const Scheme& scheme, const OscBarrier& w, double t, double dt) {
    std::vector<std::size_t> nodes;
    for (std::size_t i : scheme.active())
        if (norm(scheme.grid().coords(i)) <= 1.0 + kGeometryTol) nodes.push_back(i);
    return discrete_barrier_defect(scheme, w.function(), {}, t, dt, nodes, 1);
}

// --- a priori estimate checks --------------------------------------------

struct MaxPrincipleCheck {
    bool passed = true;
    double sup_interior = 0.0;
    double sup_boundary = 0.0;
    double slack = 0.0;  // sup_boundary + tol - sup_interior
};

/// sup over active nodes of |u| <= sup over the discrete parabolic boundary of |phi| + tol.
inline MaxPrincipleCheck assert_max_principle(const SolveReport& report, double tol) {
    MaxPrincipleCheck out;
    const Grid& g = report.solution.grid();
    for (std::size_t k = 0; k < g.slices(); ++k)
        for (std::size_t i = 0; i < g.size(); ++i)
            if (report.active[i]) out.sup_interior = std::max(out.sup_interior, std::abs(report.solution.at(i, k)));
    out.sup_boundary = report.boundary_sup;
    out.slack = out.sup_boundary + tol - out.sup_interior;
    out.passed = out.slack >= 0.0;
    return out;
}

struct GradientMaxCheck {
    bool passed = true;
    double interior_sup = 0.0;  // active nodes, slices after the first
    double boundary_sup = 0.0;  // ring nodes of every slice, all domain nodes of the bottom slice
    double excess = 0.0;        // max(0, interior - boundary)
    double tolerance = 0.0;
};

/// Calibrated tolerance C h^{1/2}.
inline double gradient_tolerance(double h, double C = 1.0) { return C * std::sqrt(h); }

inline GradientMaxCheck assert_gradient_max(const SolveReport& report, double tol) {
    GradientMaxCheck out;
    out.tolerance = tol;
    const Grid& g = report.solution.grid();
    for (std::size_t k = 0; k < g.slices(); ++k) {
        const auto s = report.solution.slice(k);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const bool bottom = k == 0 && (report.active[i] || report.ring[i]);
            if (!bottom && !report.ring[i] && !report.active[i]) continue;
            const double r = norm(discrete_gradient(s, g, i, GradientMode::Centered).p);
            if (bottom || report.ring[i]) out.boundary_sup = std::max(out.boundary_sup, r);
            else out.interior_sup = std::max(out.interior_sup, r);
        }
    }
    out.excess = std::max(0.0, out.interior_sup - out.boundary_sup);
    out.passed = out.excess <= tol;
    return out;
}

}  // namespace vispar
