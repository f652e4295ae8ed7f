#pragma once

// Dirichlet problem drivers: one regularized solve on a cylinder, the
// corner-compatibility check, and the cascade over decreasing epsilon.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vispar/core.hpp"
#include "vispar/error.hpp"
#include "vispar/operators.hpp"
#include "vispar/scheme.hpp"

namespace vispar {

/// u_t = g(Du) F(D^2 u) + f in the grid's domain, u = phi on the parabolic
/// boundary. The grid's time axis fixes the stored snapshots; the march takes
/// as many controller-limited substeps between them as needed.
struct DirichletProblem {
    Grid grid;
    EllipticOperator op;
    DegeneracyProfile profile;
    SpaceTimeFunction boundary;
    SpaceTimeFunction source;  // empty means f = 0
    SchemeConfig scheme{};
    double cfl_safety = 0.9;
    std::optional<double> fixed_dt{};
    std::size_t max_retries = 20;
    std::size_t threads = 1;
};

struct ControllerStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double min_dt = 0.0;
    double max_dt = 0.0;
    friend bool operator==(const ControllerStats&, const ControllerStats&) = default;
};

struct CompatibilityReport {
    double residual = 0.0;
    std::size_t corner_points = 0;
    bool passed = true;
};

struct SolveReport {
    SpaceTimeField solution;
    double sup_norm = 0.0;       // over domain nodes, all snapshots
    double sup_gradient = 0.0;   // centered |Du| over active nodes, all snapshots
    double boundary_sup = 0.0;   // sup of |phi| over the discrete parabolic boundary
    double compatibility_residual = 0.0;
    ControllerStats controller{};
    double wall_seconds = 0.0;
    std::vector<std::string> warnings{};
    StencilKind hessian = StencilKind::CenteredHessian;
    GradientMode gradient = GradientMode::Centered;
    bool has_source = false;
    std::vector<std::uint8_t> active{};  // 1 where the node is updated by the march
    std::vector<std::uint8_t> ring{};    // 1 where the node is boundary data read by the march
};

namespace detail {

/// One-sided (inward) or centered derivatives of a callable at a grid node.
struct Jet {
    Vec grad{0.0, 0.0};
    SymmetricMatrix hess;
    double dt = 0.0;
};

inline Jet boundary_jet(const SpaceTimeFunction& phi, const Grid& g, std::size_t idx, double t) {
    const double h = g.h();
    const Vec x = g.coords(idx);
    const auto m = g.multi_index(idx);
    auto at = [&](double dx, double dy, double dtime = 0.0) {
        return phi(Point{{x[0] + dx, x[1] + dy}, t + dtime});
    };
    Jet j;
    std::array<double, 2> d2{0.0, 0.0};
    std::array<int, 2> side{1, 1};
    const double f0 = at(0, 0);
    for (int a = 0; a < g.dim(); ++a) {
        const auto ua = static_cast<std::size_t>(a);
        const double ex = a == 0 ? 1.0 : 0.0;
        const double ey = a == 1 ? 1.0 : 0.0;
        const bool lower = m[ua] == 0;
        const bool upper = m[ua] + 1 == g.extent(a);
        if (!lower && !upper) {
            const double fp = at(h * ex, h * ey), fm = at(-h * ex, -h * ey);
            j.grad[ua] = (fp - fm) / (2.0 * h);
            d2[ua] = (fp - 2.0 * f0 + fm) / (h * h);
        } else {
            const double s = lower ? 1.0 : -1.0;
            side[ua] = lower ? 1 : -1;
            const double f1 = at(s * h * ex, s * h * ey), f2 = at(2 * s * h * ex, 2 * s * h * ey);
            j.grad[ua] = s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h);
            d2[ua] = (f0 - 2.0 * f1 + f2) / (h * h);
        }
    }
    if (g.dim() == 1) {
        j.hess = SymmetricMatrix::diag(d2[0]);
    } else {
        const double sx = side[0] * h, sy = side[1] * h;
        const double cross = (at(sx, sy) - at(sx, 0) - at(0, sy) + f0) / (sx * sy);
        j.hess = SymmetricMatrix(2, d2[0], cross, d2[1]);
    }
    const double tau = h;
    j.dt = (-3.0 * f0 + 4.0 * at(0, 0, tau) - at(0, 0, 2.0 * tau)) / (2.0 * tau);
    return j;
}

}  // namespace detail

/// max over corner nodes (bottom slice, lateral boundary) of
/// |phi_t - g(D phi) F(D^2 phi) - f|.
inline CompatibilityReport check_compatibility(const DirichletProblem& problem, double tol) {
    const Scheme scheme(problem.grid, problem.op, problem.profile, problem.scheme, 1);
    CompatibilityReport r;
    const double t0 = problem.grid.time().start;
    for (std::size_t idx : scheme.ring()) {
        const detail::Jet j = detail::boundary_jet(problem.boundary, problem.grid, idx, t0);
        double f = 0.0;
        const Point x{problem.grid.coords(idx), t0};
        if (problem.source) f = problem.source(x);
        const double res = std::abs(j.dt - problem.profile(j.grad) * problem.op(j.hess) - f);
        r.residual = std::max(r.residual, res);
        ++r.corner_points;
    }
    r.passed = r.residual <= tol;
    return r;
}

/// Marches the bottom slice to the final time with boundary nodes pinned to
/// phi at every substep.
inline SolveReport solve(const DirichletProblem& problem) {
    const auto wall_start = std::chrono::steady_clock::now();
    if (problem.profile.mode() != DegeneracyMode::Regularized)
        throw DomainError("direct solves need a regularized profile; use the cascade for the singular limit");
    if (!problem.boundary) throw DomainError("boundary data missing");
    if (!(problem.cfl_safety > 0.0 && problem.cfl_safety < 1.0)) throw DomainError("cfl_safety must lie in (0, 1)");
    if (problem.fixed_dt && !(*problem.fixed_dt > 0.0)) throw DomainError("fixed time step must be positive");

    const Grid& grid = problem.grid;
    const Scheme scheme(grid, problem.op, problem.profile, problem.scheme, problem.threads);

    SolveReport report{SpaceTimeField(grid)};
    report.hessian = problem.scheme.hessian;
    report.gradient = problem.scheme.gradient;
    report.has_source = static_cast<bool>(problem.source);
    if (!problem.op.smooth_convex())
        report.warnings.push_back(std::string("operator '") + to_string(problem.op.kind()) +
                                  "' is not C^{1,1} and convex; regularity checks do not apply to it");
    report.active.assign(grid.size(), 0);
    report.ring.assign(grid.size(), 0);
    for (std::size_t i : scheme.active()) report.active[i] = 1;
    for (std::size_t i : scheme.ring()) report.ring[i] = 1;

    const CompatibilityReport compat = check_compatibility(problem, 1e-8);
    report.compatibility_residual = compat.residual;
    if (!compat.passed)
        report.warnings.push_back("boundary data violates the corner compatibility condition (residual " +
                                  std::to_string(compat.residual) + ")");

    auto eval_phi = [&](std::size_t i, double t) {
        const double v = problem.boundary(Point{grid.coords(i), t});
        if (!std::isfinite(v)) throw SolveAborted("boundary data is not finite at node " + std::to_string(i));
        return v;
    };

    const TimeAxis& axis = grid.time();
    std::vector<double> u(grid.size()), next(grid.size()), rate(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) u[i] = eval_phi(i, axis.start);
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (report.active[i] || report.ring[i]) report.boundary_sup = std::max(report.boundary_sup, std::abs(u[i]));
    std::copy(u.begin(), u.end(), report.solution.slice(0).begin());

    StepController controller;
    controller.cfl_safety = problem.cfl_safety;
    double t = axis.start;
    for (std::size_t k = 1; k < axis.slices(); ++k) {
        const double target = axis.at(k);
        while (t < target) {
            const RateEvaluation ev = scheme.evaluate(u, t, problem.source, rate, controller);
            double dt = ev.allowed_dt;
            if (problem.fixed_dt) {
                dt = *problem.fixed_dt;
                if (dt > ev.allowed_dt * (1.0 + 1e-12)) {
                    ++controller.rejected;
                    if (controller.rejected > problem.max_retries)
                        throw SolveAborted("CFL failure: fixed time step " + std::to_string(dt) +
                                           " exceeds the stability bound " + std::to_string(ev.allowed_dt) +
                                           " repeatedly");
                    dt = ev.allowed_dt;
                }
            }
            if (!(dt > 0.0)) throw SolveAborted("stability bound collapsed to zero at t = " + std::to_string(t));
            bool last = false;
            if (t + dt >= target - 1e-12 * std::max(1.0, std::abs(target))) {
                dt = target - t;
                last = true;
            }
            for (std::size_t i : scheme.active()) {
                const double v = u[i] + dt * rate[i];
                if (!std::isfinite(v))
                    throw SolveAborted("non-finite value at node " + std::to_string(i) + ", t = " + std::to_string(t));
                next[i] = v;
            }
            t = last ? target : t + dt;
            for (std::size_t i : scheme.ring()) {
                next[i] = eval_phi(i, t);
                report.boundary_sup = std::max(report.boundary_sup, std::abs(next[i]));
            }
            std::swap(u, next);
            ++controller.accepted;
            controller.min_dt = std::min(controller.min_dt, dt);
            controller.max_dt = std::max(controller.max_dt, dt);
            controller.max_grad_guess = std::max(controller.max_grad_guess, ev.max_grad);
        }
        auto slice = report.solution.slice(k);
        for (std::size_t i = 0; i < grid.size(); ++i)
            slice[i] = (report.active[i] || report.ring[i]) ? u[i] : eval_phi(i, t);
    }

    for (std::size_t k = 0; k < axis.slices(); ++k) {
        const auto s = report.solution.slice(k);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(report.active[i] || report.ring[i])) continue;
            report.sup_norm = std::max(report.sup_norm, std::abs(s[i]));
            if (report.active[i])
                report.sup_gradient =
                    std::max(report.sup_gradient, norm(discrete_gradient(s, grid, i, GradientMode::Centered).p));
        }
    }
    report.controller = {controller.accepted, controller.rejected,
                         controller.accepted ? controller.min_dt : 0.0, controller.max_dt};
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

struct CascadeMember {
    double epsilon = 0.0;
    std::optional<SolveReport> report;
    std::string error;  // set when the solve failed
    double lipschitz = std::numeric_limits<double>::quiet_NaN();
};

struct CascadeResult {
    double gamma = 0.0;
    std::vector<CascadeMember> members;
    /// distances[i][j] = sup |u^{eps_i} - u^{eps_j}|; NaN when either failed.
    std::vector<std::vector<double>> distances;
    /// gamma in (-2, -1]: solvable, but outside the C^{1,alpha} theorem.
    bool outside_main_theorem = false;

    std::vector<double> epsilons() const {
        std::vector<double> e;
        for (const auto& m : members) e.push_back(m.epsilon);
        return e;
    }
    /// d(eps_i, eps_{i+1}).
    std::vector<double> consecutive_distances() const {
        std::vector<double> d;
        for (std::size_t i = 0; i + 1 < members.size(); ++i) d.push_back(distances[i][i + 1]);
        return d;
    }
};

inline double sup_distance(const SpaceTimeField& a, const SpaceTimeField& b) {
    if (a.values().size() != b.values().size()) throw DomainError("fields live on different grids");
    double d = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
    return d;
}

/// One solve per epsilon on identical grid and data. `thetas`, when given,
/// sets the smoothing temperature of a SmoothBellman operator per member.
inline CascadeResult solve_cascade(const DirichletProblem& base, const std::vector<double>& epsilons,
                                   const std::vector<double>& thetas = {}) {
    if (epsilons.empty()) throw DomainError("cascade needs at least one epsilon");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0.0)) throw DomainError("cascade epsilons must be positive");
        if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
            throw DomainError("cascade epsilons must be strictly decreasing");
    }
    if (!thetas.empty() && thetas.size() != epsilons.size())
        throw DomainError("theta schedule length must match the epsilon list");
    if (!thetas.empty() && base.op.kind() != OperatorKind::SmoothBellman)
        throw DomainError("theta schedule applies only to the smoothed Bellman operator");
    const double gamma = base.profile.gamma();
    if (!(gamma > -2.0)) throw DomainError("cascade requires gamma > -2");

    CascadeResult result;
    result.gamma = gamma;
    result.outside_main_theorem = gamma <= -1.0;
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        CascadeMember m;
        m.epsilon = epsilons[i];
        try {
            DirichletProblem p = base;
            p.profile = DegeneracyProfile(gamma, epsilons[i], DegeneracyMode::Regularized);
            if (!thetas.empty())
                p.op = EllipticOperator::smooth_bellman(base.op.matrices(), thetas[i], base.op.lambda(),
                                                        base.op.Lambda())
                           .scaled(base.op.scale());
            m.report = solve(p);
            m.lipschitz = m.report->sup_gradient;
        } catch (const Error& e) {
            m.error = e.what();
        }
        result.members.push_back(std::move(m));
    }
    const std::size_t n = result.members.size();
    result.distances.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto& a = result.members[i].report;
            const auto& b = result.members[j].report;
            if (a && b) result.distances[i][j] = sup_distance(a->solution, b->solution);
        }
    }
    return result;
}

}  // namespace vispar
