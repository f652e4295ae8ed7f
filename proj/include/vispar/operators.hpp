#pragma once

// Uniformly elliptic operators F(M) on symmetric matrices and the gradient
// degeneracy factor g(p), together with their product g(Du) F(D^2 u) + f.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vispar/core.hpp"
#include "vispar/error.hpp"

namespace vispar {

/// Eigenvalues this close to zero count as zero in the Pucci split.
inline constexpr double kEigenZero = 1e-14;

/// Dense symmetric n x n matrix, n in {1, 2}.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    SymmetricMatrix(int n, double a00, double a01 = 0.0, double a11 = 0.0) : n_(n) {
        if (n != 1 && n != 2) throw DomainError("matrix dimension must be 1 or 2");
        e_ = {a00, n == 2 ? a01 : 0.0, n == 2 ? a11 : 0.0};
    }

    static SymmetricMatrix zero(int n) { return SymmetricMatrix(n, 0.0); }
    static SymmetricMatrix identity(int n, double s = 1.0) { return SymmetricMatrix(n, s, 0.0, s); }
    static SymmetricMatrix diag(double a) { return SymmetricMatrix(1, a); }
    static SymmetricMatrix diag(double a, double b) { return SymmetricMatrix(2, a, 0.0, b); }

    /// Row-major entries; rejects non-symmetric input.
    static SymmetricMatrix from_rows(int n, const std::vector<double>& rows) {
        if (rows.size() != static_cast<std::size_t>(n * n))
            throw DomainError("matrix needs n*n entries");
        if (n == 1) return SymmetricMatrix(1, rows[0]);
        if (std::abs(rows[1] - rows[2]) > 1e-14 * std::max(1.0, std::abs(rows[1])))
            throw DomainError("matrix is not symmetric");
        return SymmetricMatrix(2, rows[0], rows[1], rows[3]);
    }

    int dim() const { return n_; }
    double operator()(int i, int j) const {
        if (i == 0 && j == 0) return e_[0];
        if (i == 1 && j == 1) return e_[2];
        return e_[1];
    }
    double trace() const { return e_[0] + (n_ == 2 ? e_[2] : 0.0); }

    /// tr(A M).
    double inner(const SymmetricMatrix& m) const {
        if (n_ == 1) return e_[0] * m.e_[0];
        return e_[0] * m.e_[0] + 2.0 * e_[1] * m.e_[1] + e_[2] * m.e_[2];
    }

    /// Ascending eigenvalues; the second entry is unused when n = 1.
    std::array<double, 2> eigenvalues() const {
        if (n_ == 1) return {e_[0], 0.0};
        const double mean = 0.5 * (e_[0] + e_[2]);
        const double rad = std::hypot(0.5 * (e_[0] - e_[2]), e_[1]);
        return {mean - rad, mean + rad};
    }

    SymmetricMatrix operator+(const SymmetricMatrix& o) const {
        check_same(o);
        return SymmetricMatrix(n_, e_[0] + o.e_[0], e_[1] + o.e_[1], e_[2] + o.e_[2]);
    }
    SymmetricMatrix operator-(const SymmetricMatrix& o) const {
        check_same(o);
        return SymmetricMatrix(n_, e_[0] - o.e_[0], e_[1] - o.e_[1], e_[2] - o.e_[2]);
    }
    SymmetricMatrix operator-() const { return SymmetricMatrix(n_, -e_[0], -e_[1], -e_[2]); }
    friend SymmetricMatrix operator*(double s, const SymmetricMatrix& m) {
        return SymmetricMatrix(m.n_, s * m.e_[0], s * m.e_[1], s * m.e_[2]);
    }

    friend bool operator==(const SymmetricMatrix&, const SymmetricMatrix&) = default;

private:
    void check_same(const SymmetricMatrix& o) const {
        if (o.n_ != n_) throw DomainError("matrix dimensions differ");
    }

    int n_ = 1;
    std::array<double, 3> e_{0.0, 0.0, 0.0};
};

namespace detail {
inline void check_ellipticity(double lambda, double Lambda) {
    if (!(lambda > 0.0) || !(Lambda >= lambda) || !std::isfinite(Lambda))
        throw DomainError("ellipticity constants need 0 < lambda <= Lambda");
}

inline double pucci_weight(double e, double lo, double hi) {
    if (std::abs(e) <= kEigenZero) return 0.0;
    return e > 0.0 ? hi * e : lo * e;
}
}  // namespace detail

/// M+(M) = Lambda * (positive eigenvalues) + lambda * (negative eigenvalues).
inline double pucci_plus(const SymmetricMatrix& m, double lambda, double Lambda) {
    detail::check_ellipticity(lambda, Lambda);
    const auto ev = m.eigenvalues();
    double s = detail::pucci_weight(ev[0], lambda, Lambda);
    if (m.dim() == 2) s += detail::pucci_weight(ev[1], lambda, Lambda);
    return s;
}

/// M-(M) = -M+(-M).
inline double pucci_minus(const SymmetricMatrix& m, double lambda, double Lambda) {
    detail::check_ellipticity(lambda, Lambda);
    const auto ev = m.eigenvalues();
    double s = detail::pucci_weight(ev[0], Lambda, lambda);
    if (m.dim() == 2) s += detail::pucci_weight(ev[1], Lambda, lambda);
    return s;
}

/// theta * log(mean_k exp(x_k / theta)). Vanishes when every x_k does, and
/// is bounded by max_k x_k.
inline double soft_max_mean(std::span<const double> x, double theta) {
    double top = -std::numeric_limits<double>::infinity();
    for (double v : x) top = std::max(top, v);
    double sum = 0.0;
    for (double v : x) sum += std::exp((v - top) / theta);
    return top + theta * (std::log(sum) - std::log(static_cast<double>(x.size())));
}

enum class OperatorKind { PucciPlus, PucciMinus, LinearTrace, SmoothBellman };

inline const char* to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::PucciPlus: return "pucci_plus";
        case OperatorKind::PucciMinus: return "pucci_minus";
        case OperatorKind::LinearTrace: return "linear";
        case OperatorKind::SmoothBellman: return "bellman";
    }
    return "?";
}

/// Uniformly elliptic F with constants (lambda, Lambda) and F(0) = 0.
///
/// SmoothBellman is theta * log(mean_k exp(tr(A_k M) / theta)): convex,
/// C^{1,1}, elliptic with the same constants as the family {A_k}, and within
/// theta * log K of the max-type Bellman operator max_k tr(A_k M).
///
/// Every operator carries a scale s and evaluates (1/s) F(s M); s = 1 unless
/// produced by scaled().
class EllipticOperator {
public:
    static EllipticOperator pucci_plus(double lambda, double Lambda) {
        detail::check_ellipticity(lambda, Lambda);
        return EllipticOperator(OperatorKind::PucciPlus, lambda, Lambda, {}, 0.0);
    }
    static EllipticOperator pucci_minus(double lambda, double Lambda) {
        detail::check_ellipticity(lambda, Lambda);
        return EllipticOperator(OperatorKind::PucciMinus, lambda, Lambda, {}, 0.0);
    }
    static EllipticOperator linear_trace(const SymmetricMatrix& a, double lambda, double Lambda) {
        detail::check_ellipticity(lambda, Lambda);
        check_coefficient(a, lambda, Lambda);
        return EllipticOperator(OperatorKind::LinearTrace, lambda, Lambda, {a}, 0.0);
    }
    static EllipticOperator smooth_bellman(std::vector<SymmetricMatrix> family, double theta,
                                           double lambda, double Lambda) {
        detail::check_ellipticity(lambda, Lambda);
        if (family.empty()) throw DomainError("Bellman family is empty");
        if (!(theta > 0.0) || !std::isfinite(theta))
            throw DomainError("smoothing temperature must be positive");
        for (const auto& a : family) {
            if (a.dim() != family.front().dim()) throw DomainError("Bellman family dimensions differ");
            check_coefficient(a, lambda, Lambda);
        }
        return EllipticOperator(OperatorKind::SmoothBellman, lambda, Lambda, std::move(family), theta);
    }

    OperatorKind kind() const { return kind_; }
    double lambda() const { return lambda_; }
    double Lambda() const { return Lambda_; }
    double theta() const { return theta_; }
    double scale() const { return scale_; }
    const std::vector<SymmetricMatrix>& matrices() const { return family_; }

    /// 0 for the Pucci operators, which accept any dimension.
    int dim() const { return family_.empty() ? 0 : family_.front().dim(); }

    /// Convex and C^{1,1}: the hypotheses the regularity theory needs.
    bool smooth_convex() const {
        return kind_ == OperatorKind::LinearTrace || kind_ == OperatorKind::SmoothBellman;
    }

    double operator()(const SymmetricMatrix& m) const {
        if (dim() != 0 && m.dim() != dim()) throw DomainError("operator and matrix dimensions differ");
        const SymmetricMatrix sm = scale_ == 1.0 ? m : scale_ * m;
        double v = 0.0;
        switch (kind_) {
            case OperatorKind::PucciPlus: v = vispar::pucci_plus(sm, lambda_, Lambda_); break;
            case OperatorKind::PucciMinus: v = vispar::pucci_minus(sm, lambda_, Lambda_); break;
            case OperatorKind::LinearTrace: v = family_.front().inner(sm); break;
            case OperatorKind::SmoothBellman: {
                std::array<double, 16> buf{};
                std::vector<double> heap;
                std::span<double> x;
                if (family_.size() <= buf.size()) {
                    x = std::span<double>(buf.data(), family_.size());
                } else {
                    heap.resize(family_.size());
                    x = heap;
                }
                for (std::size_t k = 0; k < family_.size(); ++k) x[k] = family_[k].inner(sm);
                v = soft_max_mean(x, theta_);
                break;
            }
        }
        return scale_ == 1.0 ? v : v / scale_;
    }

    /// M -> (1/s) F(s M); same ellipticity constants.
    EllipticOperator scaled(double s) const {
        if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("operator scale must be positive");
        EllipticOperator r = *this;
        r.scale_ *= s;
        return r;
    }

    friend bool operator==(const EllipticOperator&, const EllipticOperator&) = default;

private:
    EllipticOperator(OperatorKind kind, double lambda, double Lambda, std::vector<SymmetricMatrix> family,
                     double theta)
        : kind_(kind), lambda_(lambda), Lambda_(Lambda), family_(std::move(family)), theta_(theta) {}

    static void check_coefficient(const SymmetricMatrix& a, double lambda, double Lambda) {
        const auto ev = a.eigenvalues();
        const double lo = ev[0];
        const double hi = a.dim() == 1 ? ev[0] : ev[1];
        const double tol = 1e-12 * Lambda;
        if (lo < lambda - tol || hi > Lambda + tol)
            throw DomainError("coefficient matrix violates lambda I <= A <= Lambda I");
    }

    OperatorKind kind_;
    double lambda_;
    double Lambda_;
    std::vector<SymmetricMatrix> family_;
    double theta_ = 0.0;
    double scale_ = 1.0;
};

/// (1/s) F(s M).
inline EllipticOperator scaled_operator(const EllipticOperator& f, double s) { return f.scaled(s); }

inline double evaluate_operator(const EllipticOperator& f, const SymmetricMatrix& m) { return f(m); }

enum class DegeneracyMode { Regularized, Singular };

/// g(p) = (eps^2 + |p|^2)^{gamma/2} (Regularized) or |p|^gamma (Singular).
class DegeneracyProfile {
public:
    DegeneracyProfile(double gamma, double epsilon, DegeneracyMode mode = DegeneracyMode::Regularized)
        : gamma_(gamma), eps_(epsilon), mode_(mode) {
        if (!std::isfinite(gamma)) throw DomainError("gamma must be finite");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw DomainError("epsilon must be nonnegative");
        if (mode == DegeneracyMode::Regularized && gamma < 0.0 && epsilon == 0.0)
            throw DomainError("regularized profile with gamma < 0 requires epsilon > 0");
    }

    double gamma() const { return gamma_; }
    double epsilon() const { return eps_; }
    DegeneracyMode mode() const { return mode_; }

    /// g as a function of r = |p|.
    double of_norm(double r) const {
        if (gamma_ == 0.0) return 1.0;
        if (mode_ == DegeneracyMode::Singular) {
            if (r == 0.0) {
                if (gamma_ < 0.0)
                    throw SingularEvaluation("|p|^gamma with gamma < 0 evaluated at p = 0");
                return 0.0;
            }
            return power(r, gamma_);
        }
        const double q = eps_ * eps_ + r * r;
        if (gamma_ == 2.0) return q;
        if (gamma_ == 1.0) return std::sqrt(q);
        if (q == 0.0) return 0.0;
        return std::pow(q, 0.5 * gamma_);
    }

    double operator()(const Vec& p) const { return of_norm(norm(p)); }

    /// dg/dr at r = |p|.
    double slope(double r) const {
        if (gamma_ == 0.0) return 0.0;
        if (mode_ == DegeneracyMode::Singular) {
            if (r == 0.0) return gamma_ >= 1.0 ? (gamma_ == 1.0 ? 1.0 : 0.0)
                                               : std::numeric_limits<double>::infinity();
            return gamma_ * power(r, gamma_ - 1.0);
        }
        const double q = eps_ * eps_ + r * r;
        if (q == 0.0) return gamma_ >= 1.0 ? (gamma_ == 1.0 ? 1.0 : 0.0)
                                           : std::numeric_limits<double>::infinity();
        return gamma_ * r * std::pow(q, 0.5 * gamma_ - 1.0);
    }

    /// sup of |dg/dr| over [0, K].
    double lipschitz_bound(double K) const {
        if (gamma_ == 0.0) return 0.0;
        if (gamma_ >= 1.0) return std::abs(slope(K));
        if (mode_ == DegeneracyMode::Singular || eps_ == 0.0)
            return std::numeric_limits<double>::infinity();
        const double r_star = eps_ / std::sqrt(1.0 - gamma_);
        return std::abs(slope(std::min(K, r_star)));
    }

    friend bool operator==(const DegeneracyProfile&, const DegeneracyProfile&) = default;

private:
    static double power(double r, double g) {
        if (g == 1.0) return r;
        if (g == 2.0) return r * r;
        return std::pow(r, g);
    }

    double gamma_;
    double eps_;
    DegeneracyMode mode_;
};

inline double degeneracy(const DegeneracyProfile& profile, const Vec& p) { return profile(p); }

/// g(p) F(M) + f.
inline double rhs(const EllipticOperator& f, const DegeneracyProfile& profile, const Vec& p,
                  const SymmetricMatrix& m, double source) {
    return profile(p) * f(m) + source;
}

}  // namespace vispar
