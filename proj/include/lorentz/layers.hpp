#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorentz/hyp_ops.hpp"

namespace lorentz {

// Activations must satisfy sigma(0) = 0 so that tangent vectors at the
// origin stay tangent vectors at the origin.
enum class Activation { Identity, Relu, Tanh };

inline Activation parse_activation(const std::string& name) {
    if (name == "identity" || name == "none") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw std::invalid_argument("activation '" + name +
                                "' is not supported (needs sigma(0)=0; use relu/tanh/identity)");
}

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

inline Var apply_activation(const Var& v, Activation a) {
    switch (a) {
        case Activation::Identity: return v;
        case Activation::Relu: return relu(v);
        case Activation::Tanh: return tanh(v);
    }
    throw std::logic_error("unreachable");
}

enum class AggLocus { Center, Origin };

struct ModelConfig {
    std::vector<std::size_t> dims;  // output dimension of each layer
    Activation activation = Activation::Relu;
    double dropconnect = 0.0;
    bool dropconnect_on_attention = true;
    bool use_attention = true;
    bool trainable_curvature = true;
    AggLocus locus = AggLocus::Center;
    double init_curvature = 1.0;

    void validate() const {
        if (dims.empty()) throw std::invalid_argument("model: need at least one layer");
        for (std::size_t d : dims)
            if (d == 0) throw std::invalid_argument("model: layer dims must be positive");
        if (!(dropconnect >= 0.0 && dropconnect < 1.0))
            throw std::invalid_argument("model: dropconnect rate must be in [0,1)");
        if (!(init_curvature > 0.0))
            throw std::invalid_argument("model: init_curvature must be > 0");
    }
};

// Neighborhoods N(i) + {i}; the self node comes first, then sorted neighbors.
struct NeighborLists {
    std::vector<std::vector<int>> lists;
    std::size_t size() const { return lists.size(); }
};

inline NeighborLists build_neighbors(std::size_t n,
                                     const std::vector<std::pair<int, int>>& edges) {
    NeighborLists nl;
    nl.lists.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) nl.lists[i].push_back(int(i));
    for (auto [a, b] : edges) {
        nl.lists[a].push_back(b);
        nl.lists[b].push_back(a);
    }
    for (auto& l : nl.lists) std::sort(l.begin() + 1, l.end());
    return nl;
}

// ---- spec'd layer primitives -------------------------------------------------

// exp_o^K((0, x)): Euclidean input row lifted onto the hyperboloid.
inline Var feature_to_hyperbolic(Tape& t, const Tensor& x_euc, const Var& k) {
    if (x_euc.rank() != 1) throw std::invalid_argument("feature_to_hyperbolic: rank-1 input");
    return hyp_exp_origin(t.constant(x_euc), k);
}

// W (x) x = exp_o(W log_o(x)); W acts on the spatial tangent coordinates.
inline Var hyp_linear(const Var& W, const Var& x, const Var& k) {
    return hyp_exp_origin(matvec(W, hyp_log_origin_tail(x, k)), k);
}

// x (+) b = exp_x(P_{o->x}((0, b)))
inline Var hyp_bias_add(const Var& x, const Var& b, const Var& k) {
    Tape& t = *x.tape();
    std::size_t d = b.value().size();
    if (x.value().size() != d + 1)
        throw std::invalid_argument("hyp_bias_add: bias/point dimension mismatch");
    Var o = hyp_origin(t, d, k);
    Var bt = concat(t.scalar_constant(0.0), b);
    Var moved = hyp_parallel_transport(o, x, bt, k);
    return hyp_exp_map(x, moved, k);
}

namespace detail {

// GAT-style scorer: one linear layer on the concatenated tangent coordinates.
inline Var attention_from_tails(const Var& att, const Var& tail_i,
                                std::span<const Var> tail_js) {
    if (tail_js.empty())
        throw std::invalid_argument("attention: empty neighborhood");
    std::vector<Var> logits;
    logits.reserve(tail_js.size());
    for (const Var& tj : tail_js) logits.push_back(dot(att, concat(tail_i, tj)));
    return softmax(concat(std::span<const Var>(logits)));
}

}  // namespace detail

// w_ij = Softmax_j(att . (log_o(x_i) || log_o(x_j)))
inline Var hyp_attention_weights(const Var& x_i, std::span<const Var> neighbors,
                                 const Var& att, const Var& k) {
    if (neighbors.empty())
        throw std::invalid_argument("hyp_attention_weights: empty neighborhood");
    Var ti = hyp_log_origin_tail(x_i, k);
    std::vector<Var> tails;
    tails.reserve(neighbors.size());
    for (const Var& nj : neighbors) tails.push_back(hyp_log_origin_tail(nj, k));
    return detail::attention_from_tails(att, ti, tails);
}

// AGG(x)_i = exp_{x_i}(sum_j w_ij log_{x_i}(x_j)); the Origin variant does the
// weighted average in T_o instead.
inline Var hyp_aggregate(const Var& x_i, std::span<const Var> neighbors, const Var& weights,
                         const Var& k, AggLocus locus = AggLocus::Center) {
    if (neighbors.empty()) throw std::invalid_argument("hyp_aggregate: empty neighborhood");
    if (weights.value().size() != neighbors.size())
        throw std::invalid_argument("hyp_aggregate: weight count mismatch");
    if (locus == AggLocus::Center) {
        Var acc = scale(slice(weights, 0, 1), hyp_log_map(x_i, neighbors[0], k));
        for (std::size_t j = 1; j < neighbors.size(); ++j)
            acc = add(acc, scale(slice(weights, j, 1), hyp_log_map(x_i, neighbors[j], k)));
        return hyp_exp_map(x_i, acc, k);
    }
    Var acc = scale(slice(weights, 0, 1), hyp_log_origin_tail(neighbors[0], k));
    for (std::size_t j = 1; j < neighbors.size(); ++j)
        acc = add(acc, scale(slice(weights, j, 1), hyp_log_origin_tail(neighbors[j], k)));
    return hyp_exp_origin(acc, k);
}

// sigma^{(x)}(x) = exp_o^{K_out}(sigma(log_o^{K_in}(x))); valid because tangent
// spaces at the north pole are shared across curvatures.
inline Var hyp_activation(const Var& x, const Var& k_in, const Var& k_out, Activation act) {
    Var tail = hyp_log_origin_tail(x, k_in);
    return hyp_exp_origin(apply_activation(tail, act), k_out);
}

// ---- full layers --------------------------------------------------------------

struct HgcnLayerVars {
    Var W;    // d_out x d_in
    Var b;    // d_out
    Var att;  // 2 * d_out
    Var k_in;
    Var k_out;
    const Tensor* w_mask = nullptr;    // DropConnect masks, training only
    const Tensor* att_mask = nullptr;
};

inline std::vector<Var> hgcn_layer(const HgcnLayerVars& lv, const std::vector<Var>& x,
                                   const NeighborLists& nbrs, Activation act,
                                   bool use_attention, AggLocus locus) {
    Tape& t = *lv.W.tape();
    const std::size_t n = x.size();
    Var W = lv.w_mask ? mul(lv.W, t.constant(*lv.w_mask)) : lv.W;
    Var att = lv.att_mask ? mul(lv.att, t.constant(*lv.att_mask)) : lv.att;
    const std::size_t d_out = lv.b.value().size();
    Var o = hyp_origin(t, d_out, lv.k_in);
    Var zero = t.scalar_constant(0.0);
    Var bt = concat(zero, lv.b);

    // h_i = (W (x) x_i) (+) b
    std::vector<Var> h;
    h.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Var z = hyp_exp_origin(matvec(W, hyp_log_origin_tail(x[i], lv.k_in)), lv.k_in);
        Var moved = hyp_parallel_transport(o, z, bt, lv.k_in);
        h.push_back(hyp_exp_map(z, moved, lv.k_in));
    }

    // attention operates on the post-bias embeddings mapped to T_o
    std::vector<Var> tails;
    tails.reserve(n);
    for (std::size_t i = 0; i < n; ++i) tails.push_back(hyp_log_origin_tail(h[i], lv.k_in));

    std::vector<Var> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& nb = nbrs.lists[i];
        Var weights;
        if (use_attention) {
            std::vector<Var> nbr_tails;
            nbr_tails.reserve(nb.size());
            for (int j : nb) nbr_tails.push_back(tails[j]);
            weights = detail::attention_from_tails(att, tails[i], nbr_tails);
        } else {
            weights = t.constant(Tensor::full({nb.size()}, 1.0 / double(nb.size())));
        }
        Var y;
        if (locus == AggLocus::Center) {
            Var acc = scale(slice(weights, 0, 1), hyp_log_map(h[i], h[nb[0]], lv.k_in));
            for (std::size_t j = 1; j < nb.size(); ++j)
                acc = add(acc, scale(slice(weights, j, 1), hyp_log_map(h[i], h[nb[j]], lv.k_in)));
            y = hyp_exp_map(h[i], acc, lv.k_in);
        } else {
            Var acc = scale(slice(weights, 0, 1), tails[nb[0]]);
            for (std::size_t j = 1; j < nb.size(); ++j)
                acc = add(acc, scale(slice(weights, j, 1), tails[nb[j]]));
            y = hyp_exp_origin(acc, lv.k_in);
        }
        out.push_back(hyp_activation(y, lv.k_in, lv.k_out, act));
    }
    return out;
}

// Stacks layers; lifts Euclidean feature rows with the first layer's input
// curvature. Returns one hyperboloid point per node.
inline std::vector<Var> hgcn_forward(Tape& t, const Tensor& features,
                                     std::span<const HgcnLayerVars> layers,
                                     const NeighborLists& nbrs, Activation act,
                                     bool use_attention, AggLocus locus) {
    if (layers.empty()) throw std::invalid_argument("hgcn_forward: no layers");
    if (features.rank() != 2 || features.shape[0] != nbrs.size())
        throw std::invalid_argument("hgcn_forward: features must be n x d");
    const std::size_t n = features.shape[0], d = features.shape[1];
    std::vector<Var> x;
    x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor row = Tensor::zeros({d});
        for (std::size_t c = 0; c < d; ++c) row.data[c] = features.at(i, c);
        x.push_back(hyp_exp_origin(t.constant(std::move(row)), layers[0].k_in));
    }
    for (const auto& lv : layers) x = hgcn_layer(lv, x, nbrs, act, use_attention, locus);
    return x;
}

// ---- Euclidean GCN baseline -----------------------------------------------------

struct GcnLayerVars {
    Var W;  // d_out x d_in
    Var b;  // d_out
    const Tensor* w_mask = nullptr;
};

// Symmetric-normalized coefficients over N(i) + {i}: 1/sqrt(deg_i deg_j).
inline std::vector<std::vector<double>> gcn_norm_coeffs(const NeighborLists& nbrs) {
    std::vector<std::vector<double>> c(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
        c[i].reserve(nbrs.lists[i].size());
        for (int j : nbrs.lists[i])
            c[i].push_back(1.0 / std::sqrt(double(nbrs.lists[i].size()) *
                                           double(nbrs.lists[j].size())));
    }
    return c;
}

inline std::vector<Var> gcn_forward(Tape& t, const Tensor& features,
                                    std::span<const GcnLayerVars> layers,
                                    const NeighborLists& nbrs, Activation act) {
    if (layers.empty()) throw std::invalid_argument("gcn_forward: no layers");
    if (features.rank() != 2 || features.shape[0] != nbrs.size())
        throw std::invalid_argument("gcn_forward: features must be n x d");
    const std::size_t n = features.shape[0], d = features.shape[1];
    auto coeffs = gcn_norm_coeffs(nbrs);
    std::vector<Var> x;
    x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor row = Tensor::zeros({d});
        for (std::size_t c = 0; c < d; ++c) row.data[c] = features.at(i, c);
        x.push_back(t.constant(std::move(row)));
    }
    for (const auto& lv : layers) {
        Var W = lv.w_mask ? mul(lv.W, t.constant(*lv.w_mask)) : lv.W;
        std::vector<Var> z;
        z.reserve(n);
        for (std::size_t i = 0; i < n; ++i) z.push_back(add(matvec(W, x[i]), lv.b));
        std::vector<Var> y;
        y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& nb = nbrs.lists[i];
            Var acc = mul_scalar(z[nb[0]], coeffs[i][0]);
            for (std::size_t j = 1; j < nb.size(); ++j)
                acc = add(acc, mul_scalar(z[nb[j]], coeffs[i][j]));
            y.push_back(apply_activation(acc, act));
        }
        x = std::move(y);
    }
    return x;
}

}  // namespace lorentz
