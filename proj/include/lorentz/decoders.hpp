#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lorentz/hyp_ops.hpp"
#include "lorentz/manifold.hpp"

namespace lorentz {

struct FermiDiracParams {
    double r = 2.0;  // distance offset
    double t = 1.0;  // temperature, > 0
};

inline void validate(const FermiDiracParams& p) {
    if (!(p.t > 0.0)) throw std::invalid_argument("fermi-dirac: temperature t must be > 0");
}

// p((i,j) in E) = [exp((d^2 - r)/t) + 1]^-1, evaluated from a squared distance.
inline double fermi_dirac_prob(double dist_sq, const FermiDiracParams& p) {
    validate(p);
    double z = (dist_sq - p.r) / p.t;
    if (z > 700.0) return 0.0;  // exp would overflow; score underflows to 0
    return 1.0 / (std::exp(z) + 1.0);
}

inline double fermi_dirac_score(const HPoint& xi, const HPoint& xj, const FermiDiracParams& p,
                                Curvature K) {
    double d = distance(xi, xj, K);
    return fermi_dirac_prob(d * d, p);
}

// Differentiable form; [exp((d^2-r)/t)+1]^-1 == sigmoid((r - d^2)/t).
inline Var fermi_dirac_prob(const Var& dist_sq, const Var& r, const Var& t) {
    return sigmoid(div(sub(r, dist_sq), t));
}

inline Var fermi_dirac_score(const Var& xi, const Var& xj, const Var& r, const Var& t,
                             const Var& k) {
    Var d = hyp_distance(xi, xj, k);
    return fermi_dirac_prob(mul(d, d), r, t);
}

// Squared Euclidean distance variant used by the flat-space baseline.
inline Var fermi_dirac_score_euclidean(const Var& xi, const Var& xj, const Var& r,
                                       const Var& t) {
    Var diff = sub(xi, xj);
    return fermi_dirac_prob(dot(diff, diff), r, t);
}

// Scores are clamped to [1e-7, 1-1e-7] inside the cross-entropy so the loss
// stays finite for saturated predictions.
inline constexpr double kScoreClamp = 1e-7;

// Mean binary cross-entropy of probability Vars against {1 on pos, 0 on neg}.
inline Var binary_cross_entropy(std::span<const Var> pos_probs,
                                std::span<const Var> neg_probs) {
    if (pos_probs.empty() && neg_probs.empty())
        throw std::invalid_argument("binary_cross_entropy: no examples");
    Tape& t = *(pos_probs.empty() ? neg_probs[0] : pos_probs[0]).tape();
    Var acc = t.scalar_constant(0.0);
    for (const Var& p : pos_probs)
        acc = sub(acc, log(clamp(p, kScoreClamp, 1.0 - kScoreClamp)));
    for (const Var& p : neg_probs)
        acc = sub(acc, log(clamp(add_scalar(neg(p), 1.0), kScoreClamp, 1.0 - kScoreClamp)));
    return mul_scalar(acc, 1.0 / double(pos_probs.size() + neg_probs.size()));
}

using EdgeList = std::vector<std::pair<int, int>>;

// Cross-entropy link-prediction loss with explicit negative samples.
inline Var lp_loss(std::span<const Var> embeddings, const EdgeList& positives,
                   const EdgeList& negatives, const Var& r, const Var& t, const Var& k) {
    std::vector<Var> pos, neg;
    pos.reserve(positives.size());
    neg.reserve(negatives.size());
    for (auto [i, j] : positives)
        pos.push_back(fermi_dirac_score(embeddings[i], embeddings[j], r, t, k));
    for (auto [i, j] : negatives)
        neg.push_back(fermi_dirac_score(embeddings[i], embeddings[j], r, t, k));
    return binary_cross_entropy(pos, neg);
}

inline Var lp_loss_euclidean(std::span<const Var> embeddings, const EdgeList& positives,
                             const EdgeList& negatives, const Var& r, const Var& t) {
    std::vector<Var> pos, neg;
    pos.reserve(positives.size());
    neg.reserve(negatives.size());
    for (auto [i, j] : positives)
        pos.push_back(fermi_dirac_score_euclidean(embeddings[i], embeddings[j], r, t));
    for (auto [i, j] : negatives)
        neg.push_back(fermi_dirac_score_euclidean(embeddings[i], embeddings[j], r, t));
    return binary_cross_entropy(pos, neg);
}

// ---- node classification head ---------------------------------------------------

struct NcHead {
    Tensor W_cls;  // classes x d
    Tensor b_cls;  // classes
};

// logits = W_cls . log_o(x)_1:d + b_cls
inline Var nc_logits(const Var& x, const Var& W_cls, const Var& b_cls, const Var& k) {
    return add(matvec(W_cls, hyp_log_origin_tail(x, k)), b_cls);
}

inline Var nc_logits_euclidean(const Var& x, const Var& W_cls, const Var& b_cls) {
    return add(matvec(W_cls, x), b_cls);
}

// Mean softmax cross-entropy; rows shifted by their max (a recorded constant,
// so shift invariance is exact).
inline Var softmax_cross_entropy(std::span<const Var> logits, std::span<const int> labels) {
    if (logits.empty()) throw std::invalid_argument("softmax_cross_entropy: no examples");
    if (logits.size() != labels.size())
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    Tape& t = *logits[0].tape();
    Var acc = t.scalar_constant(0.0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const Tensor& lv = logits[i].value();
        int y = labels[i];
        if (y < 0 || std::size_t(y) >= lv.size())
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        double mx = lv.data[0];
        for (double v : lv.data) mx = std::max(mx, v);
        Var shifted = add_scalar(logits[i], -mx);
        Var lse = log(sum(exp(shifted)));
        acc = add(acc, sub(lse, slice(shifted, std::size_t(y), 1)));
    }
    return mul_scalar(acc, 1.0 / double(logits.size()));
}

// NC objective with link-prediction regularization: CE + lambda * lp_term.
inline Var nc_loss(const Var& cross_entropy, double lambda, const Var& lp_term) {
    if (lambda < 0.0) throw std::invalid_argument("nc_loss: lambda must be >= 0");
    if (lambda == 0.0) return cross_entropy;
    return add(cross_entropy, mul_scalar(lp_term, lambda));
}

// ---- curvature rescaling (executable form of the invariance theorem) ------------

// Edge set reconstructed with the decoder's distance-threshold criterion:
// (i,j) is an edge iff d(h_i, h_j) <= r + t log((1-b)/b).
inline EdgeList reconstruct_edges(const std::vector<HPoint>& points, Curvature K,
                                  const FermiDiracParams& p, double b) {
    validate(p);
    if (!(b > 0.0 && b < 1.0))
        throw std::invalid_argument("reconstruct_edges: threshold b must be in (0,1)");
    double tau = p.r + p.t * std::log((1.0 - b) / b);
    EdgeList edges;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if (distance(points[i], points[j], K) <= tau)
                edges.emplace_back(int(i), int(j));
    return edges;
}

struct RescaledEmbedding {
    std::vector<HPoint> points;
    FermiDiracParams params;
};

// h' = sqrt(K'/K) h maps H^{d,K} onto H^{d,K'} and scales all distances by
// sqrt(K'/K); choosing r' = s r, t' = s t keeps the thresholded reconstruction
// identical for every b in (0,1).
inline RescaledEmbedding theorem1_rescale(const std::vector<HPoint>& points, Curvature K,
                                          Curvature K_new, const FermiDiracParams& p) {
    validate(p);
    double s = std::sqrt(K_new.k() / K.k());
    RescaledEmbedding out;
    out.points.reserve(points.size());
    for (const HPoint& h : points) {
        Vec c = h.coords;
        for (double& v : c) v *= s;
        out.points.push_back(HPoint{std::move(c)});
    }
    out.params = FermiDiracParams{s * p.r, s * p.t};
    return out;
}

}  // namespace lorentz
