#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorentz/autodiff.hpp"
#include "lorentz/rng.hpp"
#include "lorentz/tensor.hpp"

namespace lorentz {

// All trainable parameters are Euclidean tensors; manifold constraints are
// kept by the forward ops, not the optimizer.
struct Param {
    std::string name;
    Tensor value;
    bool trainable = true;
};

struct ParamSet {
    std::vector<Param> params;

    std::size_t add(std::string name, Tensor value, bool trainable = true) {
        params.push_back(Param{std::move(name), std::move(value), trainable});
        return params.size() - 1;
    }
    Param& operator[](std::size_t i) { return params[i]; }
    const Param& operator[](std::size_t i) const { return params[i]; }
    std::size_t size() const { return params.size(); }

    std::vector<Tensor> snapshot() const {
        std::vector<Tensor> s;
        s.reserve(params.size());
        for (const auto& p : params) s.push_back(p.value);
        return s;
    }
    void restore(const std::vector<Tensor>& s) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value = s[i];
    }
};

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Standard Adam with bias correction; weight decay is added to the gradient
// (L2 style). Deterministic given identical state and gradients.
class Adam {
public:
    Adam(AdamConfig cfg, const ParamSet& ps) : cfg_(cfg) {
        m_.reserve(ps.size());
        v_.reserve(ps.size());
        for (const auto& p : ps.params) {
            m_.push_back(Tensor::zeros(p.value.shape));
            v_.push_back(Tensor::zeros(p.value.shape));
        }
    }

    void step(ParamSet& ps, const std::vector<Tensor>& grads) {
        if (grads.size() != ps.size())
            throw std::invalid_argument("adam: gradient count mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i)
            for (double g : grads[i].data)
                if (!std::isfinite(g))
                    throw std::runtime_error("adam: non-finite gradient in parameter '" +
                                             ps[i].name + "'");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (!ps[i].trainable) continue;
            auto& p = ps[i].value.data;
            auto& m = m_[i].data;
            auto& v = v_[i].data;
            const auto& g0 = grads[i].data;
            for (std::size_t j = 0; j < p.size(); ++j) {
                double g = g0[j] + cfg_.weight_decay * p[j];
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m[j] / bc1;
                double vhat = v[j] / bc2;
                p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    long step_count() const { return step_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long step_ = 0;
};

// ---- trainable curvature ---------------------------------------------------

// K = softplus(raw) + eps keeps curvature strictly positive with an
// unconstrained Euclidean parameter.
inline constexpr double kCurvatureFloor = 1e-4;

inline double softplus_value(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double curvature_from_raw(double raw) {
    return softplus_value(raw) + kCurvatureFloor;
}

inline double raw_from_curvature(double k) {
    double y = k - kCurvatureFloor;
    if (!(y > 0.0))
        throw std::invalid_argument("curvature init must exceed the floor " +
                                    std::to_string(kCurvatureFloor));
    return y > 30.0 ? y : std::log(std::expm1(y));
}

// Tape-side counterpart of curvature_from_raw.
inline Var curvature_var(const Var& raw) {
    return add_scalar(softplus(raw), kCurvatureFloor);
}

// ---- DropConnect ------------------------------------------------------------

// i.i.d. Bernoulli(1-rate) 0/1 mask; multiplied into Euclidean weights during
// training, never at evaluation, and without inverse-rate rescaling.
inline Tensor dropconnect_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("dropconnect: rate must be in [0,1)");
    Tensor mask = Tensor::full(shape, 1.0);
    if (rate == 0.0) return mask;
    for (double& x : mask.data) x = rng.uniform() < rate ? 0.0 : 1.0;
    return mask;
}

// ---- early stopping ----------------------------------------------------------

// Higher metric is better; stop after `patience` epochs without improvement.
struct EarlyStop {
    int patience = 100;
    double best = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int epochs_since_improvement = 0;

    // Returns true when `metric` improves on the best seen so far.
    bool update(double metric, int epoch) {
        if (metric > best) {
            best = metric;
            best_epoch = epoch;
            epochs_since_improvement = 0;
            return true;
        }
        ++epochs_since_improvement;
        return false;
    }

    bool should_stop() const { return epochs_since_improvement >= patience; }
};

}  // namespace lorentz
