#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lorentz {

// Positive scalar K; the hyperboloid {x : <x,x>_L = -K, x0 > 0} has constant
// sectional curvature -1/K.
class Curvature {
public:
    explicit Curvature(double k) : k_(k) {
        if (!(k > 0.0)) throw std::invalid_argument("curvature parameter K must be > 0");
    }
    double k() const { return k_; }
    double sqrt_k() const { return std::sqrt(k_); }

private:
    double k_;
};

using Vec = std::vector<double>;

// Ambient Minkowski coordinates, d+1 entries, <x,x>_L = -K, x0 > 0.
struct HPoint {
    Vec coords;
    std::size_t ambient_dim() const { return coords.size(); }
    std::size_t dim() const { return coords.size() - 1; }
};

// Tangent vector with its base point: <base, vec>_L = 0.
struct TangentVec {
    HPoint base;
    Vec vec;
};

// Point in the open unit ball of R^d.
struct PoincarePoint {
    Vec coords;
};

// Zero-norm tangent threshold: exp of anything shorter returns the base point.
inline constexpr double kZeroTangentNorm = 1e-15;
// Two points closer than this (in arcosh argument excess) are treated as equal.
inline constexpr double kCoincidentTol = 1e-14;

inline double minkowski_inner(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw std::invalid_argument("minkowski_inner: dimension mismatch");
    if (u.size() < 2)
        throw std::invalid_argument("minkowski_inner: need ambient dimension >= 2");
    double s = -u[0] * v[0];
    for (std::size_t i = 1; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

// Minkowski norm of a spacelike vector; negative rounding noise clamped to 0.
inline double minkowski_norm(std::span<const double> v) {
    double q = minkowski_inner(v, v);
    return std::sqrt(q > 0.0 ? q : 0.0);
}

inline double euclidean_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline HPoint origin(std::size_t dim, Curvature K) {
    Vec c(dim + 1, 0.0);
    c[0] = K.sqrt_k();
    return HPoint{std::move(c)};
}

inline bool on_manifold(const HPoint& x, Curvature K, double tol = 1e-9) {
    if (x.coords.size() < 2 || x.coords[0] <= 0.0) return false;
    return std::abs(minkowski_inner(x.coords, x.coords) + K.k()) <= tol;
}

inline bool is_tangent(const TangentVec& v, double tol = 1e-9) {
    return std::abs(minkowski_inner(v.base.coords, v.vec)) <= tol;
}

// Geodesic distance sqrt(K) * arcosh(-<x,y>_L / K). The arcosh argument is
// clamped to >= 1, which absorbs rounding noise near coincident points.
inline double distance(const HPoint& x, const HPoint& y, Curvature K) {
    double arg = -minkowski_inner(x.coords, y.coords) / K.k();
    if (arg < 1.0) arg = 1.0;
    return K.sqrt_k() * std::acosh(arg);
}

// x0 recomputed from the spatial part: (sqrt(K + ||x_1:d||^2), x_1:d).
inline HPoint project_to_hyperboloid(const Vec& raw, Curvature K) {
    if (raw.size() < 2)
        throw std::invalid_argument("project_to_hyperboloid: need ambient dimension >= 2");
    Vec out = raw;
    double tail_sq = 0.0;
    for (std::size_t i = 1; i < out.size(); ++i) tail_sq += out[i] * out[i];
    out[0] = std::sqrt(K.k() + tail_sq);
    return HPoint{std::move(out)};
}

// v + (<x,v>_L / K) x, the Minkowski-orthogonal projection onto T_x.
inline TangentVec project_to_tangent(const HPoint& x, const Vec& raw, Curvature K) {
    double a = minkowski_inner(x.coords, raw) / K.k();
    Vec out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] + a * x.coords[i];
    return TangentVec{x, std::move(out)};
}

// exp_x(v) = cosh(||v||_L/sqrt(K)) x + sqrt(K) sinh(||v||_L/sqrt(K)) v/||v||_L,
// re-projected onto the hyperboloid afterwards.
inline HPoint exp_map(const TangentVec& v, Curvature K) {
    double n = minkowski_norm(v.vec);
    if (n < kZeroTangentNorm) return v.base;
    double t = n / K.sqrt_k();
    double a = std::cosh(t);
    double b = K.sqrt_k() * std::sinh(t) / n;
    Vec out(v.vec.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a * v.base.coords[i] + b * v.vec[i];
    return project_to_hyperboloid(out, K);
}

// log_x(y) = d(x,y) * u / ||u||_L with u = y + (1/K)<x,y>_L x. Coincident
// arguments give the zero tangent vector.
inline TangentVec log_map(const HPoint& x, const HPoint& y, Curvature K) {
    double inner = minkowski_inner(x.coords, y.coords);
    double arg = -inner / K.k();
    if (arg - 1.0 < kCoincidentTol)
        return TangentVec{x, Vec(x.coords.size(), 0.0)};
    Vec u(x.coords.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = y.coords[i] + (inner / K.k()) * x.coords[i];
    double nu = minkowski_norm(u);
    double d = distance(x, y, K);
    Vec out(u.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d * u[i] / nu;
    return project_to_tangent(x, out, K);
}

// gamma(t) = cosh(t/sqrt(K)) x + sqrt(K) sinh(t/sqrt(K)) u for unit u.
inline HPoint geodesic(const HPoint& x, const TangentVec& u, double t, Curvature K) {
    double uu = minkowski_inner(u.vec, u.vec);
    if (std::abs(uu - 1.0) > 1e-8)
        throw std::invalid_argument("geodesic: direction must satisfy <u,u>_L = 1");
    double s = t / K.sqrt_k();
    double a = std::cosh(s);
    double b = K.sqrt_k() * std::sinh(s);
    Vec out(x.coords.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a * x.coords[i] + b * u.vec[i];
    return project_to_hyperboloid(out, K);
}

// P_{x->y}(v) = v - <log_x(y), v>_L / d(x,y)^2 * (log_x(y) + log_y(x)).
// The printed formula is for K = 1; the same algebraic form holds for all K
// with K-general log maps and distance.
inline TangentVec parallel_transport(const HPoint& x, const HPoint& y,
                                     const TangentVec& v, Curvature K) {
    double arg = -minkowski_inner(x.coords, y.coords) / K.k();
    if (arg - 1.0 < kCoincidentTol) return TangentVec{y, v.vec};
    TangentVec lx = log_map(x, y, K);
    TangentVec ly = log_map(y, x, K);
    double d = distance(x, y, K);
    double coef = minkowski_inner(lx.vec, v.vec) / (d * d);
    Vec out(v.vec.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = v.vec[i] - coef * (lx.vec[i] + ly.vec[i]);
    return project_to_tangent(y, out, K);
}

// Diffeomorphism onto the unit ball. For general K the hyperboloid is first
// rescaled to K = 1, so the output ball is always the unit ball.
inline PoincarePoint to_poincare(const HPoint& x, Curvature K) {
    double rk = K.sqrt_k();
    Vec p(x.coords.size() - 1);
    double denom = x.coords[0] / rk + 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = (x.coords[i + 1] / rk) / denom;
    return PoincarePoint{std::move(p)};
}

inline HPoint from_poincare(const PoincarePoint& p, Curvature K) {
    double sq = 0.0;
    for (double c : p.coords) sq += c * c;
    if (sq >= 1.0)
        throw std::invalid_argument("from_poincare: point must lie inside the unit ball");
    double denom = 1.0 - sq;
    Vec out(p.coords.size() + 1);
    out[0] = (1.0 + sq) / denom;
    for (std::size_t i = 0; i < p.coords.size(); ++i) out[i + 1] = 2.0 * p.coords[i] / denom;
    double rk = K.sqrt_k();
    for (double& c : out) c *= rk;
    return project_to_hyperboloid(out, K);
}

// Distance in the unit-ball model with curvature -1.
inline double poincare_distance(const PoincarePoint& p, const PoincarePoint& q) {
    if (p.coords.size() != q.coords.size())
        throw std::invalid_argument("poincare_distance: dimension mismatch");
    double diff_sq = 0.0, p_sq = 0.0, q_sq = 0.0;
    for (std::size_t i = 0; i < p.coords.size(); ++i) {
        double d = p.coords[i] - q.coords[i];
        diff_sq += d * d;
        p_sq += p.coords[i] * p.coords[i];
        q_sq += q.coords[i] * q.coords[i];
    }
    double arg = 1.0 + 2.0 * diff_sq / ((1.0 - p_sq) * (1.0 - q_sq));
    if (arg < 1.0) arg = 1.0;
    return std::acosh(arg);
}

}  // namespace lorentz
