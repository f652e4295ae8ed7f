#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vispar/estimates.hpp"

using namespace vispar;

namespace {

EllipticOperator bellman2() {
    return EllipticOperator::smooth_bellman({SymmetricMatrix::identity(2), SymmetricMatrix::diag(1.0, 2.0)}, 0.1, 1.0,
                                            2.0);
}

SchemeConfig monotone() { return SchemeConfig{StencilKind::WideStencil, GradientMode::Centered, {}}; }

DirichletProblem ball_problem(SpaceTimeFunction phi, std::size_t points, double T, std::size_t slices) {
    Grid g = Grid::square(-1.0, 1.0, points, TimeAxis{0.0, T / static_cast<double>(slices), slices})
                 .with_ball_mask({0.0, 0.0}, 1.0);
    DirichletProblem p{g, bellman2(), DegeneracyProfile(1.0, 1.0), std::move(phi), {}};
    p.scheme = monotone();
    return p;
}

}  // namespace

TEST(BarrierProfile, Examples) {
    EXPECT_EQ(barrier_profile(3.0, 0.5, 0.0), 0.0);
    EXPECT_NEAR(barrier_profile(1.0, 1.0, std::exp(1.0) - 1.0), 1.0, 1e-15);
    const double B = 0.7;
    EXPECT_DOUBLE_EQ(barrier_slope(2.0, B, 0.0), 1.0 / B);
}

TEST(BarrierProfile, DerivativeIdentitiesByFiniteDifferences) {
    for (double A : {0.5, 1.0, 4.0, 32.0}) {
        for (double B : {0.05, 0.3, 1.0, 2.2}) {
            for (double r : {0.0, 1e-3, 0.1, 0.7}) {
                const double s = 1e-6 * std::max(B / A, 1e-3);
                const double lo = std::max(r - s, 0.0), hi = lo + 2 * s, mid = lo + s;
                const double fd1 = (barrier_profile(A, B, hi) - barrier_profile(A, B, lo)) / (2 * s);
                EXPECT_NEAR(fd1, barrier_slope(A, B, mid), 1e-6 * barrier_slope(A, B, mid));
                const double fd2 = (barrier_slope(A, B, hi) - barrier_slope(A, B, lo)) / (2 * s);
                const double f1 = barrier_slope(A, B, mid);
                EXPECT_NEAR(fd2, -A * f1 * f1, 1e-6 * A * f1 * f1);
                EXPECT_DOUBLE_EQ(barrier_curvature(A, B, mid), -A * f1 * f1);
            }
            EXPECT_GT(barrier_profile(A, B, 0.2), barrier_profile(A, B, 0.1));
        }
    }
}

TEST(BarrierValue, OnTheInnerSphereEqualsPhi) {
    const SpaceTimeFunction phi = [](const Point& p) { return std::sin(p.x[0]) + p.t; };
    auto s = barrier_recipe(1.0, 0.1, 2.0, 1.0, {1.0, 0.0}, {0.0, 0.0}, 1);
    EXPECT_DOUBLE_EQ(s.anchor[0], 2.0);
    const Point X{{1.0, 0.0}, 0.3};
    EXPECT_DOUBLE_EQ(barrier_value(s, phi, X), phi(X));
    s.sign = -1;
    EXPECT_DOUBLE_EQ(barrier_value(s, phi, X), phi(X));
}

TEST(BarrierValue, UnitConstants) {
    BarrierSpec s;
    s.A = 1.0;
    s.B = 1.0;
    s.anchor = {0.0, 0.0};
    s.touch = {1.0, 0.0};
    s.m = 2.0;  // annulus width e^2 - 1
    const SpaceTimeFunction phi = [](const Point& p) { return p.x[1]; };
    const Point X{{std::exp(1.0), 0.0}, 0.0};
    EXPECT_NEAR(barrier_value(s, phi, X), 1.0, 1e-14);
    s.sign = -1;
    EXPECT_NEAR(barrier_value(s, phi, X), -1.0, 1e-14);
}

TEST(BarrierValue, OutsideAnnulusIsRejected) {
    const auto s = barrier_recipe(1.0, 0.1, 2.0, 1.0, {1.0, 0.0}, {0.0, 0.0}, 1);
    const SpaceTimeFunction phi = [](const Point&) { return 0.0; };
    EXPECT_THROW(barrier_value(s, phi, Point{{1.5, 0.0}, 0.0}), DomainError);
    EXPECT_THROW(barrier_value(s, phi, Point{{1.0 + s.width() + 0.5, 0.0}, 0.0}), DomainError);
}

TEST(BarrierRecipe, ConstantsAndValidation) {
    const double gamma = 1.0, m = 0.2, c2 = 3.0, A = 2.0;
    const auto s = barrier_recipe(gamma, m, c2, A, {0.0, -1.0}, {0.0, 0.0}, 1);
    EXPECT_NEAR(1.0 / s.B, 2.0 * std::exp((2.0 + 2.0 / 3.0) * A * m) * c2, 1e-12);
    EXPECT_NEAR(s.width(), s.B * (std::exp(A * m) - 1.0) / A, 1e-15);
    EXPECT_DOUBLE_EQ(s.anchor[1], -2.0);
    EXPECT_THROW(barrier_recipe(-2.0, m, c2, A, {1.0, 0.0}, {0.0, 0.0}, 1), DomainError);
    EXPECT_THROW(barrier_recipe(gamma, m, c2, A, {0.5, 0.0}, {0.0, 0.0}, 1), DomainError);
    EXPECT_THROW(barrier_recipe(gamma, m, c2, 0.0, {1.0, 0.0}, {0.0, 0.0}, 1), DomainError);
    EXPECT_THROW(barrier_recipe(gamma, m, c2, A, {1.0, 0.0}, {0.0, 0.0}, 0), DomainError);
}

TEST(BarrierDomination, ZeroDataPassesTrivially) {
    const auto p = ball_problem([](const Point&) { return 0.0; }, 33, 0.25, 4);
    const auto r = solve(p);
    const auto search = make_barrier(p, r, {1.0, 0.0}, {0.0, 0.0}, 1);
    const auto c = verify_barrier_domination(p, r, search.spec, 1e-12);
    EXPECT_TRUE(c.passed);
    EXPECT_EQ(c.omega_points, 0u);
}

TEST(BarrierDomination, LinearDataPasses) {
    const auto p = ball_problem([](const Point& X) { return 0.4 * X.x[0] - 0.2 * X.x[1] + 0.1; }, 33, 0.25, 4);
    const auto r = solve(p);
    for (int sign : {1, -1}) {
        const auto s = barrier_recipe(1.0, 0.0, spatial_c2_norm(p.boundary, p.grid), 8.0, {0.0, 1.0}, {0.0, 0.0}, sign);
        EXPECT_TRUE(verify_barrier_domination(p, r, s, 1e-12).passed);
    }
}

TEST(BarrierDomination, SmoothRunWithRecipeConstants) {
    // Boundary data rising in time, so u lags behind phi in the interior.
    const SpaceTimeFunction phi = [](const Point& X) {
        return 0.8 * X.t + 0.1 * std::sin(X.x[0] + 0.5 * X.x[1]);
    };
    const auto p = ball_problem(phi, 65, 0.25, 8);
    const auto r = solve(p);
    std::size_t omega = 0;
    for (Vec x0 : {Vec{1.0, 0.0}, Vec{-1.0, 0.0}, Vec{0.0, 1.0}, Vec{0.0, -1.0}}) {
        for (int sign : {1, -1}) {
            const auto search = make_barrier(p, r, x0, {0.0, 0.0}, sign);
            EXPECT_GT(search.spec.m, 0.0);
            EXPECT_GT(search.min_residual, 0.0);
            const auto c = verify_barrier_domination(p, r, search.spec, 1e-8);
            EXPECT_TRUE(c.passed) << "sign " << sign << " violation " << c.max_violation << " defect "
                                  << c.max_discrete_defect;
            omega += c.omega_points;
        }
    }
    EXPECT_GT(omega, 0u);
}

TEST(BarrierDomination, GeometryMismatch) {
    const SpaceTimeFunction phi = [](const Point&) { return 0.0; };
    DirichletProblem p{Grid::square(-1.0, 1.0, 17, TimeAxis{0.0, 0.1, 2}), bellman2(), DegeneracyProfile(1.0, 1.0),
                       phi, {}};
    const auto r = solve(p);
    const auto s = barrier_recipe(1.0, 0.0, 1.0, 1.0, {1.0, 0.0}, {0.0, 0.0}, 1);
    EXPECT_THROW(verify_barrier_domination(p, r, s, 1e-12), DomainError);

    auto q = ball_problem(phi, 17, 0.2, 2);
    const auto rq = solve(q);
    auto off = s;
    off.anchor = {2.5, 0.0};
    EXPECT_THROW(verify_barrier_domination(q, rq, off, 1e-12), DomainError);
    q.grid = Grid::square(-1.0, 1.0, 17, TimeAxis{0.0, 0.1, 2}).with_ball_mask({0.0, 0.0}, 0.5);
    EXPECT_THROW(verify_barrier_domination(q, solve(q), s, 1e-12), DomainError);
}

TEST(ExactSolution, Linear) {
    const auto s = ExactSolution::linear({0.5, -2.0}, 3.0);
    const Point X{{1.0, 2.0}, 7.0};
    const auto j = exact_eval(s, X, 2);
    EXPECT_DOUBLE_EQ(j.value, 0.5 - 4.0 + 3.0);
    EXPECT_EQ(j.gradient, (Vec{0.5, -2.0}));
    EXPECT_EQ(j.hessian, SymmetricMatrix::zero(2));
    EXPECT_EQ(j.time_derivative, 0.0);
}

TEST(ExactSolution, Caloric) {
    const auto heat = EllipticOperator::linear_trace(SymmetricMatrix::identity(1), 1.0, 1.0);
    const auto s = ExactSolution::caloric(SymmetricMatrix::diag(1.0), heat);
    EXPECT_DOUBLE_EQ(exact_value(s, Point{{1.0, 0.0}, 0.5}), 2.0);
    const auto j = exact_eval(s, Point{{0.3, 0.0}, 0.0}, 1);
    EXPECT_DOUBLE_EQ(j.gradient[0], 0.6);
    EXPECT_DOUBLE_EQ(j.time_derivative, heat(j.hessian));

    const auto op = bellman2();
    const auto q = SymmetricMatrix(2, 0.5, 0.2, -0.3);
    const auto s2 = ExactSolution::caloric(q, op);
    const auto j2 = exact_eval(s2, Point{{0.4, -0.1}, 0.2}, 2);
    EXPECT_NEAR(j2.time_derivative - op(j2.hessian), 0.0, 1e-15);
    const auto fd = numeric_jet(as_function(s2), Point{{0.4, -0.1}, 0.2}, 2);
    EXPECT_NEAR(fd.grad[0], j2.gradient[0], 1e-8);
    EXPECT_NEAR(fd.grad[1], j2.gradient[1], 1e-8);
    EXPECT_NEAR(fd.dt, j2.time_derivative, 1e-8);
}

TEST(ExactSolution, DegenerateProfileGammaOne) {
    const auto s = ExactSolution::degenerate_profile(1.0, 1.0);
    for (double x : {0.1, 0.5, 2.0}) {
        const auto j = exact_eval(s, Point{{x, 0.0}, 0.3}, 1);
        EXPECT_NEAR(j.gradient[0], std::sqrt(2.0 * x), 1e-14);
    }
}

TEST(ExactSolution, DegenerateProfileResidual) {
    for (double gamma : {0.5, 1.0, 2.0, 3.0}) {
        for (double c : {0.5, 1.0, 3.0}) {
            const auto s = ExactSolution::degenerate_profile(gamma, c);
            for (int i = 0; i <= 40; ++i) {
                const double x = 0.1 * std::pow(100.0, i / 40.0);
                const auto j = exact_eval(s, Point{{x, 0.0}, 0.7}, 1);
                const double res = j.time_derivative - std::pow(std::abs(j.gradient[0]), gamma) * j.hessian(0, 0);
                EXPECT_NEAR(res, 0.0, 1e-12) << "gamma " << gamma << " x " << x;
            }
        }
    }
}

TEST(ExactSolution, DegenerateProfileDomain) {
    EXPECT_THROW(ExactSolution::degenerate_profile(-1.0, 1.0), DomainError);
    EXPECT_THROW(ExactSolution::degenerate_profile(1.0, 0.0), DomainError);
    const auto s = ExactSolution::degenerate_profile(1.0, 1.0, 0.5);
    EXPECT_THROW(exact_value(s, Point{{0.4, 0.0}, 0.0}), DomainError);
    EXPECT_DOUBLE_EQ(exact_value(s, Point{{0.5, 0.0}, 2.0}), 2.0);
    EXPECT_THROW(exact_eval(s, Point{{0.5, 0.0}, 0.0}, 1), DomainError);
    // beta > 2 for negative gamma, so the vertex Hessian is finite
    const auto n = ExactSolution::degenerate_profile(-0.5, 1.0);
    EXPECT_DOUBLE_EQ(exact_eval(n, Point{{0.0, 0.0}, 0.0}, 1).hessian(0, 0), 0.0);
}

TEST(ExactSolution, RegressionThroughSolver) {
    const auto heat = EllipticOperator::linear_trace(SymmetricMatrix::identity(1), 1.0, 1.0);
    const auto cal = ExactSolution::caloric(SymmetricMatrix::diag(1.0), heat);
    DirichletProblem p{Grid::interval(-1.0, 1.0, 41, TimeAxis{0.0, 0.125, 4}), heat, DegeneracyProfile(0.0, 0.0),
                       as_function(cal), {}};
    const auto r = solve(p);
    double err = 0.0;
    for (std::size_t k = 0; k < p.grid.slices(); ++k)
        for (std::size_t i = 0; i < p.grid.size(); ++i)
            err = std::max(err, std::abs(r.solution.at(i, k) - exact_value(cal, p.grid.point(i, k))));
    EXPECT_LT(err, 1e-11);

    const auto lin = ExactSolution::linear({0.3, -0.6}, 0.5);
    auto q = ball_problem(as_function(lin), 33, 0.2, 4);
    const auto rl = solve(q);
    err = 0.0;
    for (std::size_t k = 0; k < q.grid.slices(); ++k)
        for (std::size_t i = 0; i < q.grid.size(); ++i)
            if (q.grid.in_mask(i)) err = std::max(err, std::abs(rl.solution.at(i, k) - exact_value(lin, q.grid.point(i, k))));
    EXPECT_LT(err, 1e-12);
}

TEST(OscBarrier, BranchesAndSlopes) {
    const OscBarrier pos(1.0, 0.5, 2.0, 2);
    EXPECT_FALSE(pos.negative_branch());
    EXPECT_NEAR(pos.slope(), 5.0 * 2 * 0.5 * std::sqrt(1.0 + 4.0) * 2.0, 1e-14);
    EXPECT_NEAR(pos.value(Point{{0.5, 0.5}, 0.1}), 2 * 0.5 * 0.5 + pos.slope() * 0.1, 1e-14);

    const OscBarrier neg(-0.5, 0.5, 2.0, 2);
    EXPECT_TRUE(neg.negative_branch());
    EXPECT_DOUBLE_EQ(neg.beta(), 3.0);
    EXPECT_NEAR(neg.slope(), (2.0 * 3.0 * std::pow(6.0, 0.5) + 1.0) * std::pow(0.5, 0.5), 1e-14);
    EXPECT_NEAR(neg.value(Point{{0.5, 0.0}, 0.0}), 2 * 0.5 * 0.125, 1e-15);
    EXPECT_THROW(OscBarrier(-1.0, 1.0, 1.0, 2), DomainError);
}

TEST(OscBarrier, DiscreteSupersolution) {
    // epsilon < 1; the barrier is evaluated on B_1.
    for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
        for (double A : {0.25, 1.0, 3.0}) {
            const auto op = EllipticOperator::pucci_plus(1.0, 2.0);
            const OscBarrier w(gamma, A, op.Lambda(), 2);
            const Grid g = Grid::square(-1.25, 1.25, 41, TimeAxis{0.0, 0.01, 1});
            const Scheme scheme(g, op, DegeneracyProfile(gamma, 0.5), monotone());
            const double dt = barrier_step(scheme, w.function(), {}, 0.0, 0.9);
            EXPECT_LE(osc_barrier_defect(scheme, w, 0.0, dt), 1e-12) << "gamma " << gamma << " A " << A;
        }
    }
}

TEST(OscBarrier, NegativeBranchDiscreteSupersolution) {
    const auto op = EllipticOperator::pucci_plus(1.0, 2.0);
    const OscBarrier w(-0.5, 1.0, op.Lambda(), 2);
    const Grid g = Grid::square(-1.25, 1.25, 41, TimeAxis{0.0, 0.01, 1});
    const Scheme scheme(g, op, DegeneracyProfile(-0.5, 0.5), monotone());
    const double dt = barrier_step(scheme, w.function(), {}, 0.0, 0.9);
    EXPECT_LE(osc_barrier_defect(scheme, w, 0.0, dt), 1e-12);
}

TEST(MaxPrinciple, ZeroData) {
    const auto p = ball_problem([](const Point&) { return 0.0; }, 17, 0.1, 2);
    const auto c = assert_max_principle(solve(p), 0.0);
    EXPECT_TRUE(c.passed);
    EXPECT_EQ(c.sup_interior, 0.0);
}

TEST(MaxPrinciple, RandomData) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Grid g = Grid::square(-1.0, 1.0, 17, TimeAxis{0.0, 0.02, 4});
        std::vector<double> a(g.size()), b(g.size());
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        const SpaceTimeFunction phi = [g, a, b](const Point& X) {
            const std::size_t i = *g.locate(X.x);
            return std::clamp(a[i] + b[i] * X.t / 0.08, -1.0, 1.0);
        };
        DirichletProblem p{g, bellman2(), DegeneracyProfile(1.0, 0.1), phi, {}};
        p.scheme = monotone();
        EXPECT_TRUE(assert_max_principle(solve(p), 1e-12).passed);
    }
}

TEST(MaxPrinciple, CaloricAttainedOnBoundary) {
    const auto heat = EllipticOperator::linear_trace(SymmetricMatrix::identity(1), 1.0, 1.0);
    const auto cal = ExactSolution::caloric(SymmetricMatrix::diag(1.0), heat);
    DirichletProblem p{Grid::interval(-1.0, 1.0, 41, TimeAxis{-1.0, 0.25, 4}), heat, DegeneracyProfile(0.0, 0.0),
                       as_function(cal), {}};
    p.scheme = monotone();
    const auto c = assert_max_principle(solve(p), 1e-12);
    EXPECT_TRUE(c.passed);
    // u* = x^2 + 2t on [-1,1] x [-1,0]: |u*| peaks at (0, -1) on the bottom
    EXPECT_NEAR(c.sup_boundary, 2.0, 1e-12);
    EXPECT_NEAR(c.sup_interior, 2.0, 1e-12);  // the bottom slice carries the maximum
}

TEST(GradientMax, LinearEquality) {
    const auto p = ball_problem([](const Point& X) { return 0.6 * X.x[0] + 0.8 * X.x[1]; }, 33, 0.1, 2);
    const auto c = assert_gradient_max(solve(p), 0.0);
    EXPECT_TRUE(c.passed);
    EXPECT_NEAR(c.interior_sup, 1.0, 1e-12);
    EXPECT_NEAR(c.boundary_sup, 1.0, 1e-12);
    EXPECT_EQ(c.excess, 0.0);
}

TEST(GradientMax, Caloric) {
    const auto heat = EllipticOperator::linear_trace(SymmetricMatrix::identity(1), 1.0, 1.0);
    const auto cal = ExactSolution::caloric(SymmetricMatrix::diag(1.0), heat);
    DirichletProblem p{Grid::interval(-1.0, 1.0, 65, TimeAxis{-1.0, 0.25, 4}), heat, DegeneracyProfile(0.0, 0.0),
                       as_function(cal), {}};
    const double h = p.grid.h();
    const auto c = assert_gradient_max(solve(p), gradient_tolerance(h));
    EXPECT_TRUE(c.passed);
    EXPECT_NEAR(c.boundary_sup, 2.0 - h, 1e-9);  // one-sided quotient at x = 1
    EXPECT_NEAR(c.interior_sup, 2.0 - 2.0 * h, 1e-9);
}

TEST(GradientMax, SmoothRunExcessShrinks) {
    const SpaceTimeFunction phi = [](const Point& X) { return std::sin(1.5 * X.x[0]) * std::cos(X.x[1]) + 0.3 * X.t; };
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {17, 33}) {
        auto p = ball_problem(phi, n, 0.1, 2);
        p.profile = DegeneracyProfile(1.0, 0.1);
        const auto c = assert_gradient_max(solve(p), gradient_tolerance(p.grid.h()));
        EXPECT_TRUE(c.passed) << "excess " << c.excess;
        EXPECT_LE(c.excess, prev);
        prev = c.excess;
    }
}
