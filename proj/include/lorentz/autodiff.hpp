#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lorentz/tensor.hpp"

namespace lorentz {

class Tape;

// Handle to a tape node. Cheap to copy; values are immutable once recorded.
class Var {
public:
    Var() : tape_(nullptr), id_(0) {}
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    const Tensor& value() const;
    bool requires_grad() const;

private:
    Tape* tape_;
    std::size_t id_;
};

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// them exactly once in reverse insertion order. A tape is confined to one
// thread; independent tapes may run concurrently.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, requires_grad});
        return Var(this, nodes_.size() - 1);
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var scalar_constant(double v) { return constant(Tensor::scalar(v)); }

    // Op plumbing. `bw` reads the node's output gradient and accumulates
    // analytic vector-Jacobian products into the inputs' gradients.
    Var record(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, requires_grad});
        return Var(this, nodes_.size() - 1);
    }

    void set_backward(const Var& v, std::function<void(Tape&)> bw) {
        nodes_[v.id()].backward = std::move(bw);
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    Tensor& grad_ref(std::size_t id) { return nodes_[id].grad; }

    // Gradient of the last backward() loss w.r.t. `v`; zero tensor for nodes
    // off the path to the loss or when backward has not run.
    const Tensor& grad(const Var& v) {
        Node& n = nodes_[v.id()];
        if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    void backward(const Var& loss) {
        if (loss.tape() != this)
            throw std::invalid_argument("backward: var belongs to another tape");
        if (!value(loss.id()).is_scalar())
            throw std::invalid_argument("backward: loss must be a scalar");
        const std::size_t top = loss.id();
        for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
        nodes_[top].grad.data[0] = 1.0;
        for (std::size_t i = top + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.requires_grad && n.backward) n.backward(*this);
        }
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;
        bool requires_grad;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.value().size() == 1 && b.value().size() == 1) return;  // scalars of any rank
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
}

inline Tape& tape_of(const Var& a, const Var& b, const char* op) {
    if (a.tape() != b.tape())
        throw std::invalid_argument(std::string(op) + ": vars from different tapes");
    return *a.tape();
}

template <typename Fwd, typename Deriv>
Var unary_op(const Var& a, Fwd f, Deriv dfdx) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    Tensor out = Tensor::zeros(av.shape);
    for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = f(av.data[i]);
    Var o = t.record(std::move(out), a.requires_grad());
    if (a.requires_grad()) {
        std::size_t aid = a.id(), oid = o.id();
        t.set_backward(o, [aid, oid, dfdx](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& x = t.value(aid);
            Tensor& ga = t.grad_ref(aid);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * dfdx(x.data[i]);
        });
    }
    return o;
}

}  // namespace detail

// ---- arithmetic ------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    Tape& t = detail::tape_of(a, b, "add");
    detail::check_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
    Var o = t.record(std::move(out), a.requires_grad() || b.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), bid = b.id(), oid = o.id();
        t.set_backward(o, [aid, bid, oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gb = t.grad_ref(bid);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
        });
    }
    return o;
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = detail::tape_of(a, b, "sub");
    detail::check_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
    Var o = t.record(std::move(out), a.requires_grad() || b.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), bid = b.id(), oid = o.id();
        t.set_backward(o, [aid, bid, oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gb = t.grad_ref(bid);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] -= g.data[i];
            }
        });
    }
    return o;
}

inline Var mul(const Var& a, const Var& b) {
    Tape& t = detail::tape_of(a, b, "mul");
    detail::check_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
    Var o = t.record(std::move(out), a.requires_grad() || b.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), bid = b.id(), oid = o.id();
        t.set_backward(o, [aid, bid, oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& av = t.value(aid);
            const Tensor& bv = t.value(bid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gb = t.grad_ref(bid);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i] * bv.data[i];
                gb.data[i] += g.data[i] * av.data[i];
            }
        });
    }
    return o;
}

inline Var div(const Var& a, const Var& b) {
    Tape& t = detail::tape_of(a, b, "div");
    detail::check_same_shape(a, b, "div");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= b.value().data[i];
    Var o = t.record(std::move(out), a.requires_grad() || b.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), bid = b.id(), oid = o.id();
        t.set_backward(o, [aid, bid, oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& av = t.value(aid);
            const Tensor& bv = t.value(bid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gb = t.grad_ref(bid);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i] / bv.data[i];
                gb.data[i] -= g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
            }
        });
    }
    return o;
}

inline Var neg(const Var& a) {
    return detail::unary_op(a, [](double x) { return -x; }, [](double) { return -1.0; });
}

inline Var add_scalar(const Var& a, double c) {
    return detail::unary_op(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

inline Var mul_scalar(const Var& a, double c) {
    return detail::unary_op(a, [c](double x) { return x * c; }, [c](double) { return c; });
}

// Scalar Var broadcast against a tensor Var: out = s * x.
inline Var scale(const Var& s, const Var& x) {
    Tape& t = detail::tape_of(s, x, "scale");
    if (!s.value().is_scalar()) throw std::invalid_argument("scale: first arg must be scalar");
    double sv = s.value().data[0];
    Tensor out = x.value();
    for (double& d : out.data) d *= sv;
    Var o = t.record(std::move(out), s.requires_grad() || x.requires_grad());
    if (o.requires_grad()) {
        std::size_t sid = s.id(), xid = x.id(), oid = o.id();
        t.set_backward(o, [sid, xid, oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& xv = t.value(xid);
            double sv = t.value(sid).data[0];
            Tensor& gs = t.grad_ref(sid);
            Tensor& gx = t.grad_ref(xid);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                acc += g.data[i] * xv.data[i];
                gx.data[i] += g.data[i] * sv;
            }
            gs.data[0] += acc;
        });
    }
    return o;
}

// ---- linear algebra --------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    Tape& t = detail::tape_of(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() + " x " +
                                    bv.shape_str());
    const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av_ip = av.data[i * k + p];
            if (av_ip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j)
                out.data[i * n + j] += av_ip * bv.data[p * n + j];
        }
    Var o = t.record(std::move(out), a.requires_grad() || b.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), bid = b.id(), oid = o.id();
        t.set_backward(o, [aid, bid, oid, m, k, n](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& av = t.value(aid);
            const Tensor& bv = t.value(bid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gb = t.grad_ref(bid);
            // dA += G B^T, dB += A^T G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += g.data[i * n + j] * bv.data[p * n + j];
                    ga.data[i * k + p] += acc;
                }
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += av.data[i * k + p] * g.data[i * n + j];
                    gb.data[p * n + j] += acc;
                }
        });
    }
    return o;
}

inline Var matvec(const Var& a, const Var& x) {
    Tape& t = detail::tape_of(a, x, "matvec");
    const Tensor& av = a.value();
    const Tensor& xv = x.value();
    if (av.rank() != 2 || xv.rank() != 1 || av.shape[1] != xv.shape[0])
        throw std::invalid_argument("matvec: incompatible shapes " + av.shape_str() + " x " +
                                    xv.shape_str());
    const std::size_t m = av.shape[0], k = av.shape[1];
    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += av.data[i * k + p] * xv.data[p];
        out.data[i] = acc;
    }
    Var o = t.record(std::move(out), a.requires_grad() || x.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), xid = x.id(), oid = o.id();
        t.set_backward(o, [aid, xid, oid, m, k](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& av = t.value(aid);
            const Tensor& xv = t.value(xid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gx = t.grad_ref(xid);
            for (std::size_t i = 0; i < m; ++i) {
                double gi = g.data[i];
                if (gi == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p) {
                    ga.data[i * k + p] += gi * xv.data[p];
                    gx.data[p] += gi * av.data[i * k + p];
                }
            }
        });
    }
    return o;
}

// Euclidean inner product of two equally shaped tensors -> scalar.
inline Var dot(const Var& a, const Var& b) {
    Tape& t = detail::tape_of(a, b, "dot");
    detail::check_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i)
        acc += a.value().data[i] * b.value().data[i];
    Var o = t.record(Tensor::scalar(acc), a.requires_grad() || b.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), bid = b.id(), oid = o.id();
        t.set_backward(o, [aid, bid, oid](Tape& t) {
            double g = t.grad_ref(oid).data[0];
            const Tensor& av = t.value(aid);
            const Tensor& bv = t.value(bid);
            Tensor& ga = t.grad_ref(aid);
            Tensor& gb = t.grad_ref(bid);
            for (std::size_t i = 0; i < av.size(); ++i) {
                ga.data[i] += g * bv.data[i];
                gb.data[i] += g * av.data[i];
            }
        });
    }
    return o;
}

// Minkowski inner product <u,v>_L = -u0 v0 + sum_{i>=1} ui vi as a
// differentiable primitive over rank-1 ambient vectors.
inline Var minkowski_inner(const Var& u, const Var& v) {
    Tape& t = detail::tape_of(u, v, "minkowski_inner");
    detail::check_same_shape(u, v, "minkowski_inner");
    const Tensor& uv = u.value();
    const Tensor& vv = v.value();
    if (uv.rank() != 1 || uv.size() < 2)
        throw std::invalid_argument("minkowski_inner: need rank-1 ambient vectors");
    double acc = -uv.data[0] * vv.data[0];
    for (std::size_t i = 1; i < uv.size(); ++i) acc += uv.data[i] * vv.data[i];
    Var o = t.record(Tensor::scalar(acc), u.requires_grad() || v.requires_grad());
    if (o.requires_grad()) {
        std::size_t uid = u.id(), vid = v.id(), oid = o.id();
        t.set_backward(o, [uid, vid, oid](Tape& t) {
            double g = t.grad_ref(oid).data[0];
            const Tensor& uv = t.value(uid);
            const Tensor& vv = t.value(vid);
            Tensor& gu = t.grad_ref(uid);
            Tensor& gv = t.grad_ref(vid);
            gu.data[0] -= g * vv.data[0];
            gv.data[0] -= g * uv.data[0];
            for (std::size_t i = 1; i < uv.size(); ++i) {
                gu.data[i] += g * vv.data[i];
                gv.data[i] += g * uv.data[i];
            }
        });
    }
    return o;
}

// ---- shape ops --------------------------------------------------------------

// Concatenation of scalars/vectors into one vector.
inline Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input");
    Tape& t = *parts[0].tape();
    std::vector<double> data;
    std::vector<std::size_t> offsets;
    bool rg = false;
    for (const Var& p : parts) {
        if (p.tape() != &t) throw std::invalid_argument("concat: vars from different tapes");
        if (p.value().rank() > 1) throw std::invalid_argument("concat: rank-1 inputs only");
        offsets.push_back(data.size());
        data.insert(data.end(), p.value().data.begin(), p.value().data.end());
        rg = rg || p.requires_grad();
    }
    Var o = t.record(Tensor::vector(std::move(data)), rg);
    if (rg) {
        std::vector<std::size_t> ids;
        for (const Var& p : parts) ids.push_back(p.id());
        std::size_t oid = o.id();
        t.set_backward(o, [ids = std::move(ids), offsets = std::move(offsets), oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            for (std::size_t p = 0; p < ids.size(); ++p) {
                Tensor& gp = t.grad_ref(ids[p]);
                for (std::size_t i = 0; i < gp.size(); ++i)
                    gp.data[i] += g.data[offsets[p] + i];
            }
        });
    }
    return o;
}

inline Var concat(const Var& a, const Var& b) {
    const Var parts[2] = {a, b};
    return concat(std::span<const Var>(parts, 2));
}

inline Var slice(const Var& a, std::size_t start, std::size_t len) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (av.rank() != 1 || start + len > av.size())
        throw std::invalid_argument("slice: out of range");
    Tensor out = Tensor::zeros({len});
    for (std::size_t i = 0; i < len; ++i) out.data[i] = av.data[start + i];
    Var o = t.record(std::move(out), a.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), oid = o.id();
        t.set_backward(o, [aid, oid, start, len](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            Tensor& ga = t.grad_ref(aid);
            for (std::size_t i = 0; i < len; ++i) ga.data[start + i] += g.data[i];
        });
    }
    return o;
}

inline Var sum(const Var& a) {
    Tape& t = *a.tape();
    double acc = 0.0;
    for (double x : a.value().data) acc += x;
    Var o = t.record(Tensor::scalar(acc), a.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), oid = o.id();
        t.set_backward(o, [aid, oid](Tape& t) {
            double g = t.grad_ref(oid).data[0];
            Tensor& ga = t.grad_ref(aid);
            for (double& x : ga.data) x += g;
        });
    }
    return o;
}

// ---- elementwise nonlinearities ---------------------------------------------

inline Var sqrt(const Var& a) {
    return detail::unary_op(
        a, [](double x) { return std::sqrt(x); },
        [](double x) {
            double r = std::sqrt(x);
            return r > 1e-150 ? 0.5 / r : 0.0;
        });
}

inline Var exp(const Var& a) {
    return detail::unary_op(a, [](double x) { return std::exp(x); },
                            [](double x) { return std::exp(x); });
}

inline Var log(const Var& a) {
    return detail::unary_op(a, [](double x) { return std::log(x); },
                            [](double x) { return 1.0 / x; });
}

inline Var cosh(const Var& a) {
    return detail::unary_op(a, [](double x) { return std::cosh(x); },
                            [](double x) { return std::sinh(x); });
}

inline Var sinh(const Var& a) {
    return detail::unary_op(a, [](double x) { return std::sinh(x); },
                            [](double x) { return std::cosh(x); });
}

// Forward clamps the argument to >= 1; derivative magnitude is capped at 1e8
// near the branch point so training stays finite near coincident points.
inline Var arcosh(const Var& a) {
    return detail::unary_op(
        a,
        [](double x) { return std::acosh(x < 1.0 ? 1.0 : x); },
        [](double x) {
            double xc = x < 1.0 ? 1.0 : x;
            double q = xc * xc - 1.0;
            if (q <= 0.0) return 1e8;
            double d = 1.0 / std::sqrt(q);
            return d > 1e8 ? 1e8 : d;
        });
}

inline Var arsinh(const Var& a) {
    return detail::unary_op(a, [](double x) { return std::asinh(x); },
                            [](double x) { return 1.0 / std::sqrt(x * x + 1.0); });
}

inline Var tanh(const Var& a) {
    return detail::unary_op(a, [](double x) { return std::tanh(x); },
                            [](double x) {
                                double th = std::tanh(x);
                                return 1.0 - th * th;
                            });
}

inline Var relu(const Var& a) {
    return detail::unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                            [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& a) {
    return detail::unary_op(
        a,
        [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double x) {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        });
}

// Numerically stable log(1 + e^x); derivative is the logistic sigmoid.
inline Var softplus(const Var& a) {
    return detail::unary_op(
        a,
        [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
        [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Var clamp(const Var& a, double lo, double hi) {
    return detail::unary_op(
        a,
        [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Var clamp_min(const Var& a, double lo) {
    return clamp(a, lo, std::numeric_limits<double>::infinity());
}

// Euclidean norm -> scalar; zero subgradient at the origin.
inline Var l2_norm(const Var& a) {
    Tape& t = *a.tape();
    double acc = 0.0;
    for (double x : a.value().data) acc += x * x;
    double n = std::sqrt(acc);
    Var o = t.record(Tensor::scalar(n), a.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), oid = o.id();
        t.set_backward(o, [aid, oid](Tape& t) {
            double g = t.grad_ref(oid).data[0];
            double n = t.value(oid).data[0];
            if (n <= 1e-30) return;
            const Tensor& av = t.value(aid);
            Tensor& ga = t.grad_ref(aid);
            for (std::size_t i = 0; i < av.size(); ++i)
                ga.data[i] += g * av.data[i] / n;
        });
    }
    return o;
}

// Softmax over a rank-1 vector, stabilized by max subtraction.
inline Var softmax(const Var& a) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (av.rank() != 1 || av.size() == 0)
        throw std::invalid_argument("softmax: need a non-empty rank-1 vector");
    double mx = av.data[0];
    for (double x : av.data) mx = std::max(mx, x);
    Tensor out = Tensor::zeros(av.shape);
    double z = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        out.data[i] = std::exp(av.data[i] - mx);
        z += out.data[i];
    }
    for (double& x : out.data) x /= z;
    Var o = t.record(std::move(out), a.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), oid = o.id();
        t.set_backward(o, [aid, oid](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& w = t.value(oid);
            Tensor& ga = t.grad_ref(aid);
            double gw = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) gw += g.data[i] * w.data[i];
            for (std::size_t i = 0; i < g.size(); ++i)
                ga.data[i] += w.data[i] * (g.data[i] - gw);
        });
    }
    return o;
}

// Row-wise masked softmax over a rank-2 matrix. Entries with mask == 0 get
// weight 0 and receive no gradient; each row must have at least one unmasked
// entry.
inline Var softmax_rows(const Var& a, const Tensor& mask) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (av.rank() != 2) throw std::invalid_argument("softmax_rows: need a rank-2 matrix");
    if (!av.same_shape(mask))
        throw std::invalid_argument("softmax_rows: mask shape mismatch");
    const std::size_t rows = av.shape[0], cols = av.shape[1];
    Tensor out = Tensor::zeros(av.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c)
            if (mask.data[r * cols + c] != 0.0) mx = std::max(mx, av.data[r * cols + c]);
        if (mx == -std::numeric_limits<double>::infinity())
            throw std::invalid_argument("softmax_rows: fully masked row");
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
            if (mask.data[r * cols + c] != 0.0) {
                out.data[r * cols + c] = std::exp(av.data[r * cols + c] - mx);
                z += out.data[r * cols + c];
            }
        for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] /= z;
    }
    Var o = t.record(std::move(out), a.requires_grad());
    if (o.requires_grad()) {
        std::size_t aid = a.id(), oid = o.id();
        t.set_backward(o, [aid, oid, rows, cols, mask](Tape& t) {
            const Tensor& g = t.grad_ref(oid);
            const Tensor& w = t.value(oid);
            Tensor& ga = t.grad_ref(aid);
            for (std::size_t r = 0; r < rows; ++r) {
                double gw = 0.0;
                for (std::size_t c = 0; c < cols; ++c)
                    gw += g.data[r * cols + c] * w.data[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c)
                    if (mask.data[r * cols + c] != 0.0)
                        ga.data[r * cols + c] +=
                            w.data[r * cols + c] * (g.data[r * cols + c] - gw);
            }
        });
    }
    return o;
}

}  // namespace lorentz
