#pragma once

#include <cstddef>

#include "lorentz/autodiff.hpp"
#include "lorentz/manifold.hpp"

namespace lorentz {

// Differentiable hyperboloid operations over tape Vars. Points are rank-1
// ambient vectors of length d+1; the curvature K is a positive scalar Var so
// gradients also flow into trainable curvature parameters.
//
// No value branches except at exactly coincident points, where the true total
// derivative is zero; everywhere else singularities are handled by clamps so
// the tape structure stays smooth.

inline bool hyp_coincident(const Var& x, const Var& y, const Var& k) {
    double inner = -x.value().data[0] * y.value().data[0];
    for (std::size_t i = 1; i < x.value().size(); ++i)
        inner += x.value().data[i] * y.value().data[i];
    return -inner / k.value().data[0] - 1.0 < kCoincidentTol;
}

// (sqrt(K), 0, ..., 0)
inline Var hyp_origin(Tape& t, std::size_t dim, const Var& k) {
    return concat(sqrt(k), t.constant(Tensor::zeros({dim})));
}

// Recompute x0 from the spatial part; keeps points exactly on the manifold.
inline Var hyp_project(const Var& p, const Var& k) {
    std::size_t d = p.value().size() - 1;
    Var tail = slice(p, 1, d);
    Var x0 = sqrt(add(k, dot(tail, tail)));
    return concat(x0, tail);
}

// v + (<x,v>_L / K) x
inline Var hyp_project_tangent(const Var& x, const Var& v, const Var& k) {
    Var a = div(minkowski_inner(x, v), k);
    return add(v, scale(a, x));
}

// sqrt(K) * arcosh(-<x,y>_L / K)
inline Var hyp_distance(const Var& x, const Var& y, const Var& k) {
    Var arg = neg(div(minkowski_inner(x, y), k));
    return mul(sqrt(k), arcosh(arg));
}

// Minkowski norm of a spacelike vector, clamped away from zero so that
// v -> exp_x(v) has exact identity Jacobian at v = 0.
inline Var hyp_tangent_norm(const Var& v) {
    return sqrt(clamp_min(minkowski_inner(v, v), 1e-30));
}

// exp_x(v) = cosh(||v||_L/sqrt(K)) x + sqrt(K) sinh(||v||_L/sqrt(K)) v/||v||_L
inline Var hyp_exp_map(const Var& x, const Var& v, const Var& k) {
    Var rk = sqrt(k);
    Var n = hyp_tangent_norm(v);
    Var theta = div(n, rk);
    Var a = cosh(theta);
    Var b = div(mul(rk, sinh(theta)), n);
    return hyp_project(add(scale(a, x), scale(b, v)), k);
}

// log_x(y) = d(x,y) * u / ||u||_L with u = y + (<x,y>_L/K) x. Coincident
// inputs return the zero tangent vector (the exact total derivative there).
inline Var hyp_log_map(const Var& x, const Var& y, const Var& k) {
    Tape& t = *x.tape();
    if (hyp_coincident(x, y, k))
        return t.constant(Tensor::zeros(x.value().shape));
    Var inner = minkowski_inner(x, y);
    Var u = add(y, scale(div(inner, k), x));
    Var nu = hyp_tangent_norm(u);
    Var dist = mul(sqrt(k), arcosh(neg(div(inner, k))));
    Var out = scale(div(dist, nu), u);
    return hyp_project_tangent(x, out, k);
}

// Tangent vectors at the origin have zero time component; this returns the
// spatial part of log_o(y) directly: d(o,y) * y_1:d / ||y_1:d||_2.
inline Var hyp_log_origin_tail(const Var& y, const Var& k) {
    std::size_t d = y.value().size() - 1;
    Var rk = sqrt(k);
    Var tail = slice(y, 1, d);
    Var tn = clamp_min(l2_norm(tail), 1e-15);
    Var arg = div(slice(y, 0, 1), rk);
    Var dist = mul(rk, arcosh(arg));
    return scale(div(dist, tn), tail);
}

// exp_o((0, u)) = (sqrt(K) cosh(||u||_2/sqrt(K)), sqrt(K) sinh(...) u/||u||_2)
inline Var hyp_exp_origin(const Var& u, const Var& k) {
    Var rk = sqrt(k);
    Var n = clamp_min(l2_norm(u), 1e-15);
    Var theta = div(n, rk);
    Var x0 = mul(rk, cosh(theta));
    Var tail = scale(div(mul(rk, sinh(theta)), n), u);
    return hyp_project(concat(x0, tail), k);
}

// P_{x->y}(v) = v - <log_x(y), v>_L / d(x,y)^2 * (log_x(y) + log_y(x)),
// with K-general log maps and distance. Identity when x and y coincide.
inline Var hyp_parallel_transport(const Var& x, const Var& y, const Var& v, const Var& k) {
    if (hyp_coincident(x, y, k)) return v;
    Var lx = hyp_log_map(x, y, k);
    Var ly = hyp_log_map(y, x, k);
    Var dist = hyp_distance(x, y, k);
    Var d2 = clamp_min(mul(dist, dist), 1e-30);
    Var coef = div(minkowski_inner(lx, v), d2);
    Var out = sub(v, scale(coef, add(lx, ly)));
    return hyp_project_tangent(y, out, k);
}

}  // namespace lorentz
