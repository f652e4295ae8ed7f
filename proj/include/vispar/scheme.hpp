#pragma once

// Finite-difference discretization of g(Du) F(D^2 u) + f and the explicit
// Euler step with its stability controller.
//
// Two Hessian modes exist. CenteredHessian evaluates F on the centered
// second-difference matrix; it is second-order accurate but not monotone.
// WideStencil writes every operator as a nondecreasing function of
// directional second differences, which makes the update monotone in the
// neighbor values once the time step obeys the controller bound. In that mode
// the degeneracy factor is evaluated at an upwind gradient magnitude chosen so
// that g(Du) moves in the same direction as F when a neighbor increases.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "vispar/core.hpp"
#include "vispar/error.hpp"
#include "vispar/operators.hpp"
#include "vispar/parallel.hpp"

namespace vispar {

using SpaceTimeFunction = std::function<double(const Point&)>;

enum class GradientMode { Forward, Centered };

inline const char* to_string(GradientMode m) {
    return m == GradientMode::Forward ? "forward" : "centered";
}

struct DiscreteGradient {
    Vec p{0.0, 0.0};
    bool one_sided = false;  // fell back to a one-sided quotient at the box edge
};

/// Forward quotients u_k^h = (u(x + h e_k) - u(x)) / h, or centered ones.
/// Where the preferred neighbor is missing the other one-sided quotient is
/// used and the result is flagged.
inline DiscreteGradient discrete_gradient(std::span<const double> u, const Grid& g, std::size_t idx,
                                          GradientMode mode) {
    DiscreteGradient r;
    const double h = g.h();
    for (int a = 0; a < g.dim(); ++a) {
        const long di = a == 0 ? 1 : 0;
        const long dj = a == 1 ? 1 : 0;
        const auto fwd = g.neighbor(idx, di, dj);
        const auto bwd = g.neighbor(idx, -di, -dj);
        double v = 0.0;
        if (mode == GradientMode::Forward) {
            if (fwd) {
                v = (u[*fwd] - u[idx]) / h;
            } else {
                v = (u[idx] - u[*bwd]) / h;
                r.one_sided = true;
            }
        } else if (fwd && bwd) {
            v = (u[*fwd] - u[*bwd]) / (2.0 * h);
        } else if (fwd) {
            v = (u[*fwd] - u[idx]) / h;
            r.one_sided = true;
        } else {
            v = (u[idx] - u[*bwd]) / h;
            r.one_sided = true;
        }
        r.p[static_cast<std::size_t>(a)] = v;
    }
    return r;
}

/// Integer stencil direction with a nonnegative weight.
struct Direction {
    std::array<int, kMaxDim> offset{1, 0};
    double weight = 1.0;

    double norm2() const {
        return static_cast<double>(offset[0] * offset[0] + offset[1] * offset[1]);
    }
    friend bool operator==(const Direction&, const Direction&) = default;
};

enum class StencilKind { CenteredHessian, WideStencil };

inline const char* to_string(StencilKind k) {
    return k == StencilKind::CenteredHessian ? "centered" : "wide";
}

struct Stencil {
    StencilKind kind = StencilKind::CenteredHessian;
    std::vector<Direction> directions;  // WideStencil only; e and -e are one entry

    static Stencil centered() { return {}; }

    /// Axis directions with unit weight, plus the two diagonals (weight 0, used
    /// only to recover mixed derivatives) when requested in 2D.
    static Stencil wide(int dim, bool diagonals = false) {
        Stencil s{StencilKind::WideStencil, {}};
        s.directions.push_back({{1, 0}, 1.0});
        if (dim == 2) {
            s.directions.push_back({{0, 1}, 1.0});
            if (diagonals) {
                s.directions.push_back({{1, 1}, 0.0});
                s.directions.push_back({{1, -1}, 0.0});
            }
        }
        return s;
    }

    int width() const {
        int w = 1;
        for (const auto& d : directions) w = std::max({w, std::abs(d.offset[0]), std::abs(d.offset[1])});
        return w;
    }

    /// WideStencil must contain every axis direction.
    void validate(int dim) const {
        if (kind != StencilKind::WideStencil) return;
        for (int a = 0; a < dim; ++a) {
            const bool found = std::any_of(directions.begin(), directions.end(), [&](const Direction& d) {
                return std::abs(d.offset[static_cast<std::size_t>(a)]) == 1 &&
                       d.offset[static_cast<std::size_t>(1 - a)] == 0;
            });
            if (!found) throw DomainError("wide stencil is missing an axis direction");
        }
        for (const auto& d : directions) {
            if (d.weight < 0.0) throw DomainError("stencil weights must be nonnegative");
            if (d.norm2() == 0.0) throw DomainError("stencil direction is zero");
            if (dim == 1 && d.offset[1] != 0) throw DomainError("2D direction in a 1D stencil");
        }
    }

    friend bool operator==(const Stencil&, const Stencil&) = default;
};

/// (u(x + h e) - 2 u(x) + u(x - h e)) / (h^2 |e|^2).
inline double second_difference(std::span<const double> u, const Grid& g, std::size_t idx,
                                const std::array<int, kMaxDim>& e) {
    const auto f = g.neighbor(idx, e[0], e[1]);
    const auto b = g.neighbor(idx, -e[0], -e[1]);
    if (!f || !b) throw DomainError("second difference needs both neighbors");
    const double n2 = static_cast<double>(e[0] * e[0] + e[1] * e[1]);
    return (u[*f] - 2.0 * u[idx] + u[*b]) / (g.h() * g.h() * n2);
}

/// Discrete Hessian at an interior node.
inline SymmetricMatrix discrete_hessian(std::span<const double> u, const Grid& g, std::size_t idx,
                                        const Stencil& stencil) {
    const double uxx = second_difference(u, g, idx, {1, 0});
    if (g.dim() == 1) return SymmetricMatrix::diag(uxx);
    const double uyy = second_difference(u, g, idx, {0, 1});
    double uxy = 0.0;
    if (stencil.kind == StencilKind::CenteredHessian) {
        const auto pp = g.neighbor(idx, 1, 1);
        const auto pm = g.neighbor(idx, 1, -1);
        const auto mp = g.neighbor(idx, -1, 1);
        const auto mm = g.neighbor(idx, -1, -1);
        if (!pp || !pm || !mp || !mm) throw DomainError("cross difference needs diagonal neighbors");
        uxy = (u[*pp] - u[*pm] - u[*mp] + u[*mm]) / (4.0 * g.h() * g.h());
    } else {
        auto has = [&](int a, int b) {
            return std::any_of(stencil.directions.begin(), stencil.directions.end(),
                               [&](const Direction& d) { return d.offset[0] == a && d.offset[1] == b; });
        };
        if (has(1, 1) && has(1, -1))
            uxy = 0.5 * (second_difference(u, g, idx, {1, 1}) - second_difference(u, g, idx, {1, -1}));
    }
    return SymmetricMatrix(2, uxx, uxy, uyy);
}

namespace detail {
template <bool Plus>
double monotone_pucci(std::span<const double> u, const Grid& g, std::size_t idx,
                      std::span<const Direction> directions, double lambda, double Lambda) {
    double s = 0.0;
    for (const auto& d : directions) {
        if (d.weight == 0.0) continue;
        const double v = second_difference(u, g, idx, d.offset);
        s += d.weight * (Plus ? pucci_weight(v, lambda, Lambda) : pucci_weight(v, Lambda, lambda));
    }
    return s;
}
}  // namespace detail

/// Sum over directions of w_e (Lambda (d2_e u)^+ - lambda (d2_e u)^-): monotone
/// in the neighbor values and exact on quadratics diagonal in the directions.
inline double monotone_pucci_plus(std::span<const double> u, const Grid& g, std::size_t idx,
                                  std::span<const Direction> directions, double lambda, double Lambda) {
    detail::check_ellipticity(lambda, Lambda);
    return detail::monotone_pucci<true>(u, g, idx, directions, lambda, Lambda);
}

inline double monotone_pucci_minus(std::span<const double> u, const Grid& g, std::size_t idx,
                                   std::span<const Direction> directions, double lambda, double Lambda) {
    detail::check_ellipticity(lambda, Lambda);
    return detail::monotone_pucci<false>(u, g, idx, directions, lambda, Lambda);
}

/// Nonnegative decomposition A = sum_e w_e e e^T over integer vectors e
/// (Selling's reduction of an obtuse superbase in 2D).
inline std::vector<Direction> monotone_decomposition(const SymmetricMatrix& a) {
    if (a.dim() == 1) {
        if (a(0, 0) < 0.0) throw DomainError("coefficient must be nonnegative");
        return {{{1, 0}, a(0, 0)}};
    }
    if (a.eigenvalues()[0] <= 0.0) throw DomainError("coefficient matrix must be positive definite");
    using IVec = std::array<long, 2>;
    auto form = [&](const IVec& x, const IVec& y) {
        return a(0, 0) * static_cast<double>(x[0] * y[0]) +
               a(0, 1) * static_cast<double>(x[0] * y[1] + x[1] * y[0]) +
               a(1, 1) * static_cast<double>(x[1] * y[1]);
    };
    std::array<IVec, 3> e{IVec{1, 0}, IVec{0, 1}, IVec{-1, -1}};
    const double tol = 1e-14 * a.trace();
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        for (int i = 0; i < 3 && !changed; ++i) {
            for (int j = i + 1; j < 3 && !changed; ++j) {
                if (form(e[static_cast<std::size_t>(i)], e[static_cast<std::size_t>(j)]) > tol) {
                    const int k = 3 - i - j;
                    const IVec ei = e[static_cast<std::size_t>(i)];
                    const IVec ej = e[static_cast<std::size_t>(j)];
                    e[static_cast<std::size_t>(i)] = {-ei[0], -ei[1]};
                    e[static_cast<std::size_t>(k)] = {ei[0] - ej[0], ei[1] - ej[1]};
                    changed = true;
                }
            }
        }
        if (!changed) break;
        if (iter == 199) throw DomainError("superbase reduction did not converge");
    }
    std::vector<Direction> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double w = -form(e[static_cast<std::size_t>(i)], e[static_cast<std::size_t>(j)]);
            if (w <= tol) continue;
            const IVec ek = e[static_cast<std::size_t>(3 - i - j)];
            std::array<int, 2> v{static_cast<int>(-ek[1]), static_cast<int>(ek[0])};
            if (v[0] < 0 || (v[0] == 0 && v[1] < 0)) v = {-v[0], -v[1]};
            out.push_back({v, w});
        }
    }
    return out;
}

/// Stability control for the explicit march.
struct StepController {
    double cfl_safety = 0.9;
    double max_grad_guess = 0.0;  // running sup of the discrete |Du|

    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double min_dt = std::numeric_limits<double>::infinity();
    double max_dt = 0.0;
};

struct SchemeConfig {
    StencilKind hessian = StencilKind::CenteredHessian;
    GradientMode gradient = GradientMode::Centered;  // centered-Hessian mode only
    std::vector<Direction> pucci_directions;         // wide mode; empty means the axes

    friend bool operator==(const SchemeConfig&, const SchemeConfig&) = default;
};

struct RateEvaluation {
    double allowed_dt = std::numeric_limits<double>::infinity();
    double g_max = 0.0;
    double max_grad = 0.0;
};

/// The spatial operator on a fixed grid. Active nodes (inside the mask, with
/// every stencil neighbor on the grid) are updated; all others carry
/// Dirichlet data.
class Scheme {
public:
    Scheme(Grid grid, EllipticOperator op, DegeneracyProfile profile, SchemeConfig config = {},
           std::size_t threads = 1)
        : grid_(std::move(grid)), op_(std::move(op)), profile_(profile), config_(std::move(config)),
          threads_(std::max<std::size_t>(1, threads)) {
        if (op_.dim() != 0 && op_.dim() != grid_.dim())
            throw DomainError("operator dimension does not match grid");
        compile();
    }

    const Grid& grid() const { return grid_; }
    const EllipticOperator& op() const { return op_; }
    const DegeneracyProfile& profile() const { return profile_; }
    const SchemeConfig& config() const { return config_; }
    bool monotone() const { return config_.hessian == StencilKind::WideStencil; }
    int width() const { return width_; }
    std::size_t threads() const { return threads_; }

    const std::vector<std::size_t>& active() const { return active_; }
    /// Non-active nodes read by some active node.
    const std::vector<std::size_t>& ring() const { return ring_; }
    bool is_active(std::size_t idx) const { return active_flag_[idx] != 0; }

    /// Writes g(Du) F(D^2 u) + f into rate[i] for active i and returns the
    /// largest stable step for this state.
    RateEvaluation evaluate(std::span<const double> u, double t, const SpaceTimeFunction& source,
                            std::span<double> rate, const StepController& controller) const {
        const std::size_t n = active_.size();
        std::vector<RateEvaluation> partial(std::max<std::size_t>(threads_, 1));
        parallel_for(n, threads_, [&](std::size_t b, std::size_t e, std::size_t c) {
            RateEvaluation local;
            double min_extra = std::numeric_limits<double>::infinity();
            for (std::size_t a = b; a < e; ++a) {
                const std::size_t i = active_[a];
                double g = 1.0;
                double r = 0.0;
                double value = 0.0;
                double extra = std::numeric_limits<double>::infinity();
                if (monotone()) {
                    const double big_g = monotone_operator(u, i);
                    double up2 = 0.0, dn2 = 0.0;
                    for (int ax = 0; ax < grid_.dim(); ++ax) {
                        const long s = axis_stride_[static_cast<std::size_t>(ax)];
                        const double fp = (u[i + s] - u[i]) * inv_h_;
                        const double bp = (u[i - s] - u[i]) * inv_h_;
                        const double up = std::max({fp, bp, 0.0});
                        const double dn = std::max({-fp, -bp, 0.0});
                        up2 += up * up;
                        dn2 += dn * dn;
                    }
                    const bool use_up = (big_g >= 0.0) == (profile_.gamma() >= 0.0);
                    r = std::sqrt(use_up ? up2 : dn2);
                    if (profile_.gamma() != 0.0) {
                        g = profile_.of_norm(r);
                        const double sens = std::abs(big_g) * std::abs(profile_.slope(r)) * sqrt_dim_ * inv_h_;
                        const double denom = g * self_coeff_ + sens;
                        if (denom > 0.0) extra = controller.cfl_safety / denom;
                    }
                    value = g * big_g;
                } else {
                    const SymmetricMatrix m = centered_hessian(u, i);
                    if (profile_.gamma() != 0.0) {
                        const Vec p = gradient(u, i);
                        r = norm(p);
                        g = profile_.of_norm(r);
                    }
                    value = g * op_(m);
                }
                if (source) value += source(Point{grid_.coords(i), t});
                rate[i] = value;
                local.g_max = std::max(local.g_max, g);
                local.max_grad = std::max(local.max_grad, r);
                min_extra = std::min(min_extra, extra);
            }
            local.allowed_dt = min_extra;
            partial[c] = local;
        });
        RateEvaluation total;
        for (const auto& p : partial) {
            total.allowed_dt = std::min(total.allowed_dt, p.allowed_dt);
            total.g_max = std::max(total.g_max, p.g_max);
            total.max_grad = std::max(total.max_grad, p.max_grad);
        }
        if (profile_.gamma() > 0.0)
            total.g_max = std::max(total.g_max, profile_.of_norm(std::max(controller.max_grad_guess, total.max_grad)));
        if (total.g_max > 0.0)
            total.allowed_dt = std::min(total.allowed_dt, controller.cfl_safety / (self_coeff_ * total.g_max));
        return total;
    }

    /// Base bound cfl_safety * h^2 / (2 n Lambda g_max).
    double base_bound(double g_max, double cfl_safety) const {
        return g_max > 0.0 ? cfl_safety / (self_coeff_ * g_max) : std::numeric_limits<double>::infinity();
    }

private:
    void compile() {
        const int dim = grid_.dim();
        const long nx = static_cast<long>(grid_.nx());
        inv_h_ = 1.0 / grid_.h();
        inv_h2_ = inv_h_ * inv_h_;
        sqrt_dim_ = std::sqrt(static_cast<double>(dim));
        axis_stride_ = {1, nx};
        self_coeff_ = 2.0 * dim * op_.Lambda() * inv_h2_;

        width_ = 1;
        if (monotone()) {
            auto taps_of = [&](const std::vector<Direction>& dirs) {
                std::vector<Tap> taps;
                for (const auto& d : dirs) {
                    if (d.weight == 0.0) continue;
                    if (dim == 1 && d.offset[1] != 0) throw DomainError("2D direction on a 1D grid");
                    taps.push_back({d.offset[0] + nx * d.offset[1], d.weight, 1.0 / d.norm2()});
                    width_ = std::max({width_, std::abs(d.offset[0]), std::abs(d.offset[1])});
                }
                return taps;
            };
            switch (op_.kind()) {
                case OperatorKind::PucciPlus:
                case OperatorKind::PucciMinus: {
                    Stencil s = Stencil::wide(dim);
                    if (!config_.pucci_directions.empty()) {
                        s.directions = config_.pucci_directions;
                        s.validate(dim);
                    }
                    branches_.push_back(taps_of(s.directions));
                    break;
                }
                case OperatorKind::LinearTrace:
                case OperatorKind::SmoothBellman:
                    for (const auto& a : op_.matrices()) branches_.push_back(taps_of(monotone_decomposition(a)));
                    break;
            }
            const bool pucci = op_.kind() == OperatorKind::PucciPlus || op_.kind() == OperatorKind::PucciMinus;
            for (const auto& taps : branches_) {
                double c = 0.0;
                for (const auto& t : taps) c += 2.0 * t.weight * (pucci ? op_.Lambda() * t.inv_norm2 : 1.0);
                self_coeff_ = std::max(self_coeff_, c * inv_h2_);
            }
        }

        active_flag_.assign(grid_.size(), 0);
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (grid_.in_mask(i) && grid_.depth(i) >= static_cast<std::size_t>(width_)) {
                active_.push_back(i);
                active_flag_[i] = 1;
            }
        }
        if (active_.empty()) throw DomainError("grid has no interior node for this stencil");
        std::vector<std::uint8_t> in_ring(grid_.size(), 0);
        auto mark = [&](long j) {
            if (!active_flag_[static_cast<std::size_t>(j)]) in_ring[static_cast<std::size_t>(j)] = 1;
        };
        for (std::size_t i : active_) {
            const long li = static_cast<long>(i);
            for (long dj = -(dim == 2 ? width_ : 0); dj <= (dim == 2 ? width_ : 0); ++dj)
                for (long di = -width_; di <= width_; ++di) mark(li + di + nx * dj);
        }
        for (std::size_t i = 0; i < grid_.size(); ++i)
            if (in_ring[i]) ring_.push_back(i);
    }

    Vec gradient(std::span<const double> u, std::size_t i) const {
        Vec p{0.0, 0.0};
        for (int ax = 0; ax < grid_.dim(); ++ax) {
            const long s = axis_stride_[static_cast<std::size_t>(ax)];
            p[static_cast<std::size_t>(ax)] = config_.gradient == GradientMode::Centered
                                                  ? (u[i + s] - u[i - s]) * 0.5 * inv_h_
                                                  : (u[i + s] - u[i]) * inv_h_;
        }
        return p;
    }

    SymmetricMatrix centered_hessian(std::span<const double> u, std::size_t i) const {
        const double uxx = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2_;
        if (grid_.dim() == 1) return SymmetricMatrix::diag(uxx);
        const long s = axis_stride_[1];
        const double uyy = (u[i + s] - 2.0 * u[i] + u[i - s]) * inv_h2_;
        const double uxy = (u[i + 1 + s] - u[i + 1 - s] - u[i - 1 + s] + u[i - 1 - s]) * 0.25 * inv_h2_;
        return SymmetricMatrix(2, uxx, uxy, uyy);
    }

    double monotone_operator(std::span<const double> u, std::size_t i) const {
        auto d2 = [&](const Tap& t) { return (u[i + t.stride] - 2.0 * u[i] + u[i - t.stride]) * inv_h2_; };
        switch (op_.kind()) {
            case OperatorKind::PucciPlus:
            case OperatorKind::PucciMinus: {
                const bool plus = op_.kind() == OperatorKind::PucciPlus;
                const double lo = plus ? op_.lambda() : op_.Lambda();
                const double hi = plus ? op_.Lambda() : op_.lambda();
                double s = 0.0;
                for (const auto& t : branches_.front()) s += t.weight * detail::pucci_weight(d2(t) * t.inv_norm2, lo, hi);
                return s;
            }
            case OperatorKind::LinearTrace: {
                double s = 0.0;
                for (const auto& t : branches_.front()) s += t.weight * d2(t);
                return s;
            }
            case OperatorKind::SmoothBellman: {
                std::array<double, 16> buf{};
                std::vector<double> heap;
                std::span<double> x;
                if (branches_.size() <= buf.size()) {
                    x = std::span<double>(buf.data(), branches_.size());
                } else {
                    heap.resize(branches_.size());
                    x = heap;
                }
                const double sc = op_.scale();
                for (std::size_t k = 0; k < branches_.size(); ++k) {
                    double s = 0.0;
                    for (const auto& t : branches_[k]) s += t.weight * d2(t);
                    x[k] = sc * s;
                }
                return soft_max_mean(x, op_.theta()) / sc;
            }
        }
        return 0.0;
    }

    struct Tap {
        long stride;
        double weight;
        double inv_norm2;
    };

    Grid grid_;
    EllipticOperator op_;
    DegeneracyProfile profile_;
    SchemeConfig config_;
    std::size_t threads_;

    int width_ = 1;
    double inv_h_ = 0.0;
    double inv_h2_ = 0.0;
    double sqrt_dim_ = 1.0;
    double self_coeff_ = 0.0;
    std::array<long, kMaxDim> axis_stride_{1, 0};
    std::vector<std::vector<Tap>> branches_;
    std::vector<std::size_t> active_;
    std::vector<std::uint8_t> active_flag_;
    std::vector<std::size_t> ring_;
};

/// One forward-Euler step from time t to t + dt. Active nodes get
/// u + dt (g(Du) F(D^2 u) + f); every other node takes phi(x, t + dt).
/// Throws StepRejected when dt exceeds the controller bound and SolveAborted
/// on non-finite values.
inline std::vector<double> step(const Scheme& scheme, std::span<const double> u, double t, double dt,
                                const SpaceTimeFunction& phi, const SpaceTimeFunction& source,
                                StepController& controller) {
    const Grid& g = scheme.grid();
    if (u.size() != g.size()) throw DomainError("slice size does not match grid");
    std::vector<double> rate(g.size(), 0.0);
    const RateEvaluation ev = scheme.evaluate(u, t, source, rate, controller);
    if (dt > ev.allowed_dt * (1.0 + 1e-12)) {
        ++controller.rejected;
        throw StepRejected("time step exceeds the stability bound", ev.allowed_dt);
    }
    std::vector<double> out(u.begin(), u.end());
    for (std::size_t i : scheme.active()) {
        out[i] = u[i] + dt * rate[i];
        if (!std::isfinite(out[i])) throw SolveAborted("non-finite value produced at node " + std::to_string(i));
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!scheme.is_active(i)) out[i] = phi(Point{g.coords(i), t + dt});
    ++controller.accepted;
    controller.min_dt = std::min(controller.min_dt, dt);
    controller.max_dt = std::max(controller.max_dt, dt);
    controller.max_grad_guess = std::max(controller.max_grad_guess, ev.max_grad);
    return out;
}

}  // namespace vispar
