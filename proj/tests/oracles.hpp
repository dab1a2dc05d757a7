#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "lorentz/manifold.hpp"
#include "lorentz/rng.hpp"
#include "lorentz/tensor.hpp"

namespace oracles {

// Central finite differences over every entry of every listed parameter
// tensor. `loss` must recompute the loss value from the tensors' current
// contents each call.
inline std::vector<lorentz::Tensor> finite_difference_grads(
    std::vector<lorentz::Tensor*> params, const std::function<double()>& loss,
    double h = 1e-5) {
    std::vector<lorentz::Tensor> grads;
    for (lorentz::Tensor* p : params) {
        lorentz::Tensor g = lorentz::Tensor::zeros(p->shape);
        for (std::size_t i = 0; i < p->size(); ++i) {
            double keep = p->data[i];
            p->data[i] = keep + h;
            double up = loss();
            p->data[i] = keep - h;
            double down = loss();
            p->data[i] = keep;
            g.data[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// Relative error with a floor: tiny gradients are compared absolutely.
inline double grad_rel_error(const std::vector<lorentz::Tensor>& analytic,
                             const std::vector<lorentz::Tensor>& fd) {
    double worst = 0.0;
    for (std::size_t p = 0; p < analytic.size(); ++p)
        for (std::size_t i = 0; i < analytic[p].size(); ++i) {
            double a = analytic[p].data[i], b = fd[p].data[i];
            double denom = std::max({std::abs(a), std::abs(b), 1e-3});
            worst = std::max(worst, std::abs(a - b) / denom);
        }
    return worst;
}

// O(n^2) pair-counting AUC: P(score+ > score-) + 1/2 P(tie).
inline double pair_counting_auc(std::span<const double> scores, std::span<const int> labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] <= 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] > 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / double(pairs);
}

// Brute-force Gromov delta with its own BFS and an ordered 4-tuple sweep.
inline double brute_force_delta(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<int>& d = dist[s];
        d[s] = 0;
        std::vector<int> q{int(s)};
        for (std::size_t head = 0; head < q.size(); ++head) {
            int u = q[head];
            for (int v : adj[u])
                if (d[v] < 0) {
                    d[v] = d[u] + 1;
                    q.push_back(v);
                }
        }
    }
    double best = 0.0;
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t z = 0; z < n; ++z)
                for (std::size_t w = 0; w < n; ++w) {
                    if (x == y || x == z || x == w || y == z || y == w || z == w) continue;
                    if (dist[x][y] < 0 || dist[z][w] < 0 || dist[x][z] < 0 ||
                        dist[y][w] < 0 || dist[x][w] < 0 || dist[y][z] < 0)
                        continue;  // different components
                    int s1 = dist[x][y] + dist[z][w];
                    int s2 = dist[x][z] + dist[y][w];
                    int s3 = dist[x][w] + dist[y][z];
                    int hi = std::max({s1, s2, s3});
                    int lo = std::min({s1, s2, s3});
                    int mid = s1 + s2 + s3 - hi - lo;
                    best = std::max(best, double(hi - mid) / 2.0);
                }
    return best;
}

// Random point on H^{d,K} built directly from the membership equation:
// draw a spatial part, set x0 = sqrt(K + ||tail||^2).
inline lorentz::HPoint random_hpoint(lorentz::Rng& rng, std::size_t d, lorentz::Curvature K,
                                     double spread = 1.0) {
    lorentz::Vec c(d + 1, 0.0);
    double sq = 0.0;
    for (std::size_t i = 1; i <= d; ++i) {
        c[i] = spread * rng.normal();
        sq += c[i] * c[i];
    }
    c[0] = std::sqrt(K.k() + sq);
    return lorentz::HPoint{std::move(c)};
}

// Random tangent vector at x: Minkowski-orthogonalize a raw draw, then
// rescale to a uniform norm in (0, max_norm] so points stay in the region
// where the membership identity is representable in double precision.
inline lorentz::TangentVec random_tangent(lorentz::Rng& rng, const lorentz::HPoint& x,
                                          lorentz::Curvature K, double max_norm = 2.0) {
    lorentz::Vec raw(x.coords.size());
    for (double& v : raw) v = rng.normal();
    lorentz::TangentVec t = lorentz::project_to_tangent(x, raw, K);
    double n = lorentz::minkowski_norm(t.vec);
    if (n < 1e-12) return t;
    double target = rng.uniform(0.0, max_norm);
    for (double& v : t.vec) v *= target / n;
    return t;
}

// Random connected tree on n nodes: each node attaches to a uniform earlier node.
inline std::vector<std::pair<int, int>> random_tree(lorentz::Rng& rng, std::size_t n) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 1; i < n; ++i) {
        int p = int(rng.below(i));
        edges.emplace_back(p, int(i));
    }
    return edges;
}

// Random simple connected graph: a random tree plus `extra` random chords.
inline std::vector<std::pair<int, int>> random_connected_graph(lorentz::Rng& rng,
                                                               std::size_t n,
                                                               std::size_t extra) {
    auto edges = random_tree(rng, n);
    std::set<std::pair<int, int>> have(edges.begin(), edges.end());
    std::size_t attempts = 0;
    while (extra > 0 && attempts < 50 * n) {
        ++attempts;
        int a = int(rng.below(n)), b = int(rng.below(n));
        if (a == b) continue;
        std::pair<int, int> e{std::min(a, b), std::max(a, b)};
        if (have.insert(e).second) {
            edges.push_back(e);
            --extra;
        }
    }
    return edges;
}

}  // namespace oracles
