#pragma once

// Geometric and field primitives: points, parabolic cylinders and their
// boundary parts, uniform space-time grids, and scalar fields on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vispar/error.hpp"

namespace vispar {

inline constexpr int kMaxDim = 2;

/// Spatial vector. Unused trailing components are zero when dim < kMaxDim.
using Vec = std::array<double, kMaxDim>;

/// Relative tolerance for deciding that a grid point lies on a sphere or a
/// time face.
inline constexpr double kGeometryTol = 1e-9;

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1]}; }

/// Space-time point X = (x, t).
struct Point {
    Vec x{0.0, 0.0};
    double t = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// d(X, Y) = max{|x - y|, sqrt|t - s|}.
inline double parabolic_distance(const Point& a, const Point& b) {
    return std::max(norm(a.x - b.x), std::sqrt(std::abs(a.t - b.t)));
}

/// B_r(y) x (s - sigma r^2, s]. The standard cylinder Q_r(Y) has sigma = 1;
/// the intrinsic cylinders of the gradient iteration stretch time.
class Cylinder {
public:
    Cylinder(Point center, double radius, double time_stretch = 1.0)
        : center_(center), radius_(radius), stretch_(time_stretch) {
        if (!(radius > 0.0) || !std::isfinite(radius))
            throw DomainError("cylinder radius must be positive");
        if (!(time_stretch > 0.0) || !std::isfinite(time_stretch))
            throw DomainError("cylinder time stretch must be positive");
    }

    /// Q_{r}^{(s)} = B_r x (-(s)^{-gamma} r^2, 0] shifted to `center`, where
    /// `shrink` is the gradient scale (1 - delta)^i.
    static Cylinder intrinsic(Point center, double radius, double shrink, double gamma) {
        return Cylinder(center, radius, std::pow(shrink, -gamma));
    }

    const Point& center() const { return center_; }
    double radius() const { return radius_; }
    double time_stretch() const { return stretch_; }
    double height() const { return stretch_ * radius_ * radius_; }
    double bottom_time() const { return center_.t - height(); }
    double top_time() const { return center_.t; }

    bool contains_closed(const Point& p) const {
        const double tol = kGeometryTol * std::max(1.0, radius_);
        const double ttol = kGeometryTol * std::max(1.0, height());
        return norm(p.x - center_.x) <= radius_ + tol && p.t >= bottom_time() - ttol &&
               p.t <= top_time() + ttol;
    }

    friend bool operator==(const Cylinder&, const Cylinder&) = default;

private:
    Point center_;
    double radius_;
    double stretch_;
};

enum class ParabolicBoundaryPart { Bottom, Corner, Side, Full };

/// Where a point of the closed cylinder sits.
enum class Location { Interior, Bottom, Corner, Side };

inline const char* to_string(Location l) {
    switch (l) {
        case Location::Interior: return "interior";
        case Location::Bottom: return "bottom";
        case Location::Corner: return "corner";
        case Location::Side: return "side";
    }
    return "?";
}

inline bool belongs_to(Location l, ParabolicBoundaryPart part) {
    switch (part) {
        case ParabolicBoundaryPart::Bottom: return l == Location::Bottom;
        case ParabolicBoundaryPart::Corner: return l == Location::Corner;
        case ParabolicBoundaryPart::Side: return l == Location::Side;
        case ParabolicBoundaryPart::Full: return l != Location::Interior;
    }
    return false;
}

/// Labels a point of the closed cylinder. The top rim |x - y| = r, t = s is
/// labeled Side: the final slice is part of the discrete domain.
inline Location classify(const Cylinder& c, const Point& p) {
    if (!c.contains_closed(p)) throw DomainError("point outside the closed cylinder");
    const double tol = kGeometryTol * std::max(1.0, c.radius());
    const double ttol = kGeometryTol * std::max(1.0, c.height());
    const bool on_sphere = norm(p.x - c.center().x) >= c.radius() - tol;
    const bool on_bottom = p.t <= c.bottom_time() + ttol;
    if (on_bottom) return on_sphere ? Location::Corner : Location::Bottom;
    return on_sphere ? Location::Side : Location::Interior;
}

/// Uniform time axis start, start + dt, ..., start + steps*dt.
struct TimeAxis {
    double start = 0.0;
    double dt = 1.0;
    std::size_t steps = 0;

    double end() const { return start + dt * static_cast<double>(steps); }
    double at(std::size_t k) const {
        return k == steps ? end() : start + dt * static_cast<double>(k);
    }
    std::size_t slices() const { return steps + 1; }
    friend bool operator==(const TimeAxis&, const TimeAxis&) = default;
};

/// Uniform lattice over an axis-aligned box (n = 1 or 2) times a uniform time
/// axis. An optional mask marks the points that belong to the open spatial
/// domain; unmasked points carry boundary values.
class Grid {
public:
    Grid(int dim, Vec origin, std::array<std::size_t, kMaxDim> points, double h, TimeAxis time)
        : dim_(dim), origin_(origin), n_(points), h_(h), time_(time) {
        if (dim != 1 && dim != 2) throw DomainError("grid dimension must be 1 or 2");
        if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("grid spacing must be positive");
        if (!(time.dt > 0.0) || !std::isfinite(time.dt))
            throw DomainError("time step must be positive");
        if (dim == 1) {
            n_[1] = 1;
            origin_[1] = 0.0;
        }
        if (n_[0] < 3 || (dim == 2 && n_[1] < 3))
            throw DomainError("grid needs at least three points per axis");
    }

    /// [lo, hi] sampled with `points` nodes.
    static Grid interval(double lo, double hi, std::size_t points, TimeAxis time) {
        if (!(hi > lo) || points < 3) throw DomainError("bad interval grid");
        return Grid(1, {lo, 0.0}, {points, 1}, (hi - lo) / static_cast<double>(points - 1), time);
    }

    /// [lo, hi]^2 sampled with `points` nodes per axis.
    static Grid square(double lo, double hi, std::size_t points, TimeAxis time) {
        if (!(hi > lo) || points < 3) throw DomainError("bad square grid");
        return Grid(2, {lo, lo}, {points, points}, (hi - lo) / static_cast<double>(points - 1),
                    time);
    }

    /// Copy with mask = open ball B_radius(center).
    Grid with_ball_mask(Vec center, double radius) const {
        Grid g = *this;
        g.mask_.assign(size(), 0);
        const double tol = kGeometryTol * std::max(1.0, radius);
        std::size_t count = 0;
        for (std::size_t i = 0; i < size(); ++i) {
            if (norm(coords(i) - center) < radius - tol) {
                g.mask_[i] = 1;
                ++count;
            }
        }
        if (count == 0) throw DomainError("ball mask contains no grid point");
        return g;
    }

    /// Copy with an explicit mask (one entry per node, nonzero = inside).
    Grid with_mask(std::vector<std::uint8_t> mask) const {
        if (mask.size() != size()) throw DomainError("mask size does not match grid");
        Grid g = *this;
        g.mask_ = std::move(mask);
        return g;
    }

    Grid with_time(TimeAxis time) const {
        Grid g = *this;
        if (!(time.dt > 0.0)) throw DomainError("time step must be positive");
        g.time_ = time;
        return g;
    }

    int dim() const { return dim_; }
    double h() const { return h_; }
    const Vec& origin() const { return origin_; }
    std::size_t nx() const { return n_[0]; }
    std::size_t ny() const { return n_[1]; }
    std::size_t extent(int axis) const { return n_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return n_[0] * n_[1]; }
    const TimeAxis& time() const { return time_; }
    double dt() const { return time_.dt; }
    std::size_t steps() const { return time_.steps; }
    std::size_t slices() const { return time_.slices(); }

    bool has_mask() const { return !mask_.empty(); }
    bool in_mask(std::size_t i) const { return mask_.empty() || mask_[i] != 0; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    std::size_t index(std::size_t i, std::size_t j = 0) const { return i + n_[0] * j; }
    std::array<std::size_t, kMaxDim> multi_index(std::size_t idx) const {
        return {idx % n_[0], idx / n_[0]};
    }
    Vec coords(std::size_t idx) const {
        const auto m = multi_index(idx);
        return {origin_[0] + h_ * static_cast<double>(m[0]),
                dim_ == 2 ? origin_[1] + h_ * static_cast<double>(m[1]) : 0.0};
    }
    Point point(std::size_t idx, std::size_t k) const { return {coords(idx), time_.at(k)}; }

    /// Index of the node at offset (di, dj) from `idx`, or nullopt when it
    /// falls off the box.
    std::optional<std::size_t> neighbor(std::size_t idx, long di, long dj = 0) const {
        const auto m = multi_index(idx);
        const long i = static_cast<long>(m[0]) + di;
        const long j = static_cast<long>(m[1]) + dj;
        if (i < 0 || j < 0 || i >= static_cast<long>(n_[0]) || j >= static_cast<long>(n_[1]))
            return std::nullopt;
        return index(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }

    /// Distance (in nodes) from `idx` to the nearest box face.
    std::size_t depth(std::size_t idx) const {
        const auto m = multi_index(idx);
        std::size_t d = std::min(m[0], n_[0] - 1 - m[0]);
        if (dim_ == 2) d = std::min({d, m[1], n_[1] - 1 - m[1]});
        return d;
    }

    /// Node nearest to x, or nullopt when x is not a node.
    std::optional<std::size_t> locate(const Vec& x) const {
        std::array<std::size_t, kMaxDim> m{0, 0};
        for (int a = 0; a < dim_; ++a) {
            const double s = (x[static_cast<std::size_t>(a)] - origin_[static_cast<std::size_t>(a)]) / h_;
            const double r = std::round(s);
            if (std::abs(s - r) > 1e-6 || r < 0 || r >= static_cast<double>(n_[static_cast<std::size_t>(a)]))
                return std::nullopt;
            m[static_cast<std::size_t>(a)] = static_cast<std::size_t>(r);
        }
        return index(m[0], m[1]);
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int dim_;
    Vec origin_;
    std::array<std::size_t, kMaxDim> n_;
    double h_;
    TimeAxis time_;
    std::vector<std::uint8_t> mask_;
};

/// Labels grid node (space index, time slice) relative to `cylinder`.
inline Location classify_boundary(const Grid& grid, const Cylinder& cylinder, std::size_t space_index,
                                  std::size_t time_index) {
    if (space_index >= grid.size() || time_index >= grid.slices())
        throw DomainError("grid index out of range");
    return classify(cylinder, grid.point(space_index, time_index));
}

/// Scalar values per (space node, time slice); slice k is contiguous.
class SpaceTimeField {
public:
    explicit SpaceTimeField(Grid grid, double fill = 0.0)
        : grid_(std::move(grid)), values_(grid_.size() * grid_.slices(), fill) {}

    SpaceTimeField(Grid grid, std::vector<double> values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.size() * grid_.slices())
            throw DomainError("field size does not match grid");
        for (double v : values_)
            if (!std::isfinite(v)) throw DomainError("field contains non-finite values");
    }

    const Grid& grid() const { return grid_; }
    std::span<double> slice(std::size_t k) {
        return {values_.data() + k * grid_.size(), grid_.size()};
    }
    std::span<const double> slice(std::size_t k) const {
        return {values_.data() + k * grid_.size(), grid_.size()};
    }
    double& at(std::size_t idx, std::size_t k) { return values_[k * grid_.size() + idx]; }
    double at(std::size_t idx, std::size_t k) const { return values_[k * grid_.size() + idx]; }
    const std::vector<double>& values() const { return values_; }

    double sup_norm() const {
        double s = 0.0;
        for (double v : values_) s = std::max(s, std::abs(v));
        return s;
    }

    friend bool operator==(const SpaceTimeField&, const SpaceTimeField&) = default;

private:
    Grid grid_;
    std::vector<double> values_;
};

/// Calls fn(space index, time slice) for every node inside the closed region.
template <class Fn>
void for_each_in(const Grid& grid, const Cylinder& region, Fn&& fn) {
    for (std::size_t k = 0; k < grid.slices(); ++k) {
        const double t = grid.time().at(k);
        if (!region.contains_closed(Point{region.center().x, t})) continue;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (region.contains_closed(grid.point(i, k))) fn(i, k);
    }
}

/// max - min of `field` over the grid nodes inside the closed region.
inline double oscillation(const SpaceTimeField& field, const Cylinder& region) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for_each_in(field.grid(), region, [&](std::size_t i, std::size_t k) {
        const double v = field.at(i, k);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    });
    if (hi < lo) throw DomainError("region contains no grid point");
    return hi - lo;
}

// --- vispar-grid v1 dump -------------------------------------------------

inline void write_grid_dump(std::ostream& os, const SpaceTimeField& field) {
    const Grid& g = field.grid();
    os << "vispar-grid v1 dim=" << g.dim() << " nx=" << g.nx();
    if (g.dim() == 2) os << " ny=" << g.ny();
    os << std::setprecision(17) << " nt=" << g.slices() << " h=" << g.h() << " dt=" << g.dt() << '\n';
    for (std::size_t k = 0; k < g.slices(); ++k) {
        if (k > 0) os << '\n';
        const auto s = field.slice(k);
        for (std::size_t j = 0; j < g.ny(); ++j) {
            for (std::size_t i = 0; i < g.nx(); ++i) {
                if (i > 0) os << ' ';
                os << s[g.index(i, j)];
            }
            os << '\n';
        }
    }
}

/// Reads a dump. The format carries no origin or start time, so the caller
/// supplies them.
inline SpaceTimeField read_grid_dump(std::istream& is, Vec origin, double t_start) {
    std::string header;
    if (!std::getline(is, header)) throw DomainError("empty grid dump");
    std::istringstream hs(header);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != "vispar-grid" || version != "v1") throw DomainError("not a vispar-grid v1 dump");
    int dim = 0;
    std::size_t nx = 0, ny = 1, nt = 0;
    double h = 0.0, dt = 0.0;
    std::string tok;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw DomainError("malformed header token: " + tok);
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "dim") dim = std::stoi(val);
        else if (key == "nx") nx = std::stoul(val);
        else if (key == "ny") ny = std::stoul(val);
        else if (key == "nt") nt = std::stoul(val);
        else if (key == "h") h = std::stod(val);
        else if (key == "dt") dt = std::stod(val);
        else throw DomainError("unknown header key: " + key);
    }
    if (nt == 0) throw DomainError("grid dump has no time slices");
    Grid grid(dim, origin, {nx, ny}, h, TimeAxis{t_start, dt, nt - 1});
    std::vector<double> values;
    values.reserve(grid.size() * nt);
    double v = 0.0;
    while (is >> v) values.push_back(v);
    if (values.size() != grid.size() * nt) throw DomainError("grid dump value count mismatch");
    return SpaceTimeField(std::move(grid), std::move(values));
}

}  // namespace vispar
