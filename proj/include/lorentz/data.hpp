#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lorentz/rng.hpp"
#include "lorentz/tensor.hpp"

namespace lorentz {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Undirected graph: edges stored as (i, j) with i < j, deduplicated; dense
// node features, optional integer labels.
struct Graph {
    std::size_t n = 0;
    std::vector<std::pair<int, int>> edges;
    Tensor features;  // n x d
    std::vector<int> labels;
    bool has_labels = false;

    std::size_t feature_dim() const { return features.rank() == 2 ? features.shape[1] : 0; }
};

inline void validate_graph(const Graph& g) {
    if (g.features.rank() != 2 || g.features.shape[0] != g.n)
        throw std::invalid_argument("graph: feature row count must equal node count");
    std::set<std::pair<int, int>> seen;
    for (auto [i, j] : g.edges) {
        if (!(0 <= i && i < j && std::size_t(j) < g.n))
            throw std::invalid_argument("graph: edge (" + std::to_string(i) + "," +
                                        std::to_string(j) + ") out of range or not i<j");
        if (!seen.insert({i, j}).second)
            throw std::invalid_argument("graph: duplicate edge");
    }
    if (g.has_labels && g.labels.size() != g.n)
        throw std::invalid_argument("graph: label count must equal node count");
}

// ---- file loading ------------------------------------------------------------
// Edge file: one "i<TAB>j" pair per line. Feature file: CSV, one row per node,
// no header. Label file: one integer per line. Locale-independent parsing.

namespace detail {

inline double parse_double(std::string_view tok, const std::string& file, std::size_t line) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e)
        throw ParseError(file + ":" + std::to_string(line) + ": malformed number '" +
                         std::string(tok) + "'");
    return v;
}

inline long parse_int(std::string_view tok, const std::string& file, std::size_t line) {
    long v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw ParseError(file + ":" + std::to_string(line) + ": malformed integer '" +
                         std::string(tok) + "'");
    return v;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

}  // namespace detail

inline Graph load_graph(const std::string& edge_path, const std::string& feature_path,
                        const std::string& label_path = "") {
    Graph g;

    {
        std::ifstream in(feature_path);
        if (!in) throw ParseError("cannot open feature file '" + feature_path + "'");
        std::string line;
        std::size_t lineno = 0, dim = 0;
        std::vector<double> values;
        while (std::getline(in, line)) {
            ++lineno;
            std::string_view sv = detail::trim(line);
            if (sv.empty()) continue;
            std::size_t cols = 0;
            std::size_t start = 0;
            std::string s(sv);
            while (start <= s.size()) {
                std::size_t comma = s.find(',', start);
                std::string_view tok = detail::trim(
                    std::string_view(s).substr(start, comma == std::string::npos
                                                          ? std::string::npos
                                                          : comma - start));
                values.push_back(detail::parse_double(tok, feature_path, lineno));
                ++cols;
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (dim == 0)
                dim = cols;
            else if (cols != dim)
                throw ParseError(feature_path + ":" + std::to_string(lineno) +
                                 ": expected " + std::to_string(dim) + " columns, got " +
                                 std::to_string(cols));
            ++g.n;
        }
        if (g.n == 0) throw ParseError(feature_path + ": no feature rows");
        g.features = Tensor({g.n, dim}, std::move(values));
    }

    {
        std::ifstream in(edge_path);
        if (!in) throw ParseError("cannot open edge file '" + edge_path + "'");
        std::string line;
        std::size_t lineno = 0;
        std::set<std::pair<int, int>> seen;
        while (std::getline(in, line)) {
            ++lineno;
            std::string_view sv = detail::trim(line);
            if (sv.empty()) continue;
            std::size_t tab = sv.find_first_of(" \t");
            if (tab == std::string_view::npos)
                throw ParseError(edge_path + ":" + std::to_string(lineno) +
                                 ": expected 'i<TAB>j'");
            long a = detail::parse_int(detail::trim(sv.substr(0, tab)), edge_path, lineno);
            long b = detail::parse_int(detail::trim(sv.substr(tab + 1)), edge_path, lineno);
            if (a == b)
                throw ParseError(edge_path + ":" + std::to_string(lineno) +
                                 ": self-loops are not allowed");
            if (a < 0 || b < 0 || std::size_t(a) >= g.n || std::size_t(b) >= g.n)
                throw ParseError(edge_path + ":" + std::to_string(lineno) +
                                 ": node index out of range (n=" + std::to_string(g.n) + ")");
            std::pair<int, int> e{int(std::min(a, b)), int(std::max(a, b))};
            if (seen.insert(e).second) g.edges.push_back(e);
        }
        std::sort(g.edges.begin(), g.edges.end());
    }

    if (!label_path.empty()) {
        std::ifstream in(label_path);
        if (!in) throw ParseError("cannot open label file '" + label_path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string_view sv = detail::trim(line);
            if (sv.empty()) continue;
            g.labels.push_back(int(detail::parse_int(sv, label_path, lineno)));
        }
        if (g.labels.size() != g.n)
            throw ParseError(label_path + ": expected " + std::to_string(g.n) +
                             " labels, got " + std::to_string(g.labels.size()));
        g.has_labels = true;
    }

    validate_graph(g);
    return g;
}

// ---- synthetic disease trees ---------------------------------------------------

struct DiseaseTreeConfig {
    std::size_t n = 300;
    std::size_t feature_dim = 16;
    double beta = 0.9;         // infection probability scale
    int branch_min = 2;        // children per node drawn uniformly from
    int branch_max = 3;        // [branch_min, branch_max]
    double susc_min = 0.0;     // susceptibility range
    double susc_max = 1.0;
    // Correlation of a child's noise features with its parent's. At 0 the
    // noise is i.i.d. per node and held-out tree edges carry no feature
    // signal at all, which makes edge prediction on a tree degenerate; the
    // hereditary default gives features whose similarity decays with tree
    // distance, matching how infection susceptibility spreads along contact
    // chains.
    double feature_inheritance = 0.9;
};

// Random tree with SIR-style propagation from the root: a child is infected
// when its parent is and a coin with probability beta * susceptibility lands
// heads. Feature slot 0 carries the susceptibility; the remaining slots are
// standard-normal noise inherited along the tree with the configured
// correlation. Deterministic per seed.
inline Graph generate_disease_tree(const DiseaseTreeConfig& cfg, std::uint64_t seed) {
    if (cfg.n < 2) throw std::invalid_argument("disease tree: need at least 2 nodes");
    if (cfg.feature_dim < 1) throw std::invalid_argument("disease tree: need feature_dim >= 1");
    if (cfg.branch_min < 1 || cfg.branch_max < cfg.branch_min)
        throw std::invalid_argument("disease tree: bad branching range");
    if (!(cfg.feature_inheritance >= 0.0 && cfg.feature_inheritance < 1.0))
        throw std::invalid_argument("disease tree: feature_inheritance must be in [0,1)");
    Rng rng(seed);
    Rng tree_rng = rng.substream("tree");
    Rng feat_rng = rng.substream("features");
    Rng sir_rng = rng.substream("infection");

    Graph g;
    g.n = cfg.n;
    std::vector<int> parent(cfg.n, -1);
    std::queue<int> frontier;
    frontier.push(0);
    int next_id = 1;
    while (std::size_t(next_id) < cfg.n) {
        int p = frontier.front();
        frontier.pop();
        int kids = cfg.branch_min +
                   int(tree_rng.below(std::uint64_t(cfg.branch_max - cfg.branch_min + 1)));
        for (int c = 0; c < kids && std::size_t(next_id) < cfg.n; ++c) {
            parent[next_id] = p;
            g.edges.emplace_back(p, next_id);
            frontier.push(next_id);
            ++next_id;
        }
    }

    std::vector<double> susceptibility(cfg.n);
    g.features = Tensor::zeros({cfg.n, cfg.feature_dim});
    const double rho = cfg.feature_inheritance;
    const double fresh = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        susceptibility[i] = feat_rng.uniform(cfg.susc_min, cfg.susc_max);
        g.features.at(i, 0) = susceptibility[i];
        for (std::size_t j = 1; j < cfg.feature_dim; ++j) {
            double noise = feat_rng.normal();
            g.features.at(i, j) =
                i == 0 ? noise : rho * g.features.at(parent[i], j) + fresh * noise;
        }
    }

    g.labels.assign(cfg.n, 0);
    g.labels[0] = 1;
    for (std::size_t i = 1; i < cfg.n; ++i) {
        // node ids are assigned in BFS order, so parent[i] < i is already labeled
        if (g.labels[parent[i]] == 1 &&
            sir_rng.uniform() < cfg.beta * susceptibility[i])
            g.labels[i] = 1;
    }
    g.has_labels = true;
    validate_graph(g);
    return g;
}

// ---- edge splits ----------------------------------------------------------------

struct LpSplit {
    std::vector<std::pair<int, int>> train_pos, val_pos, test_pos;
    std::vector<std::pair<int, int>> val_neg, test_neg;
};

struct NcSplit {
    std::vector<int> train, val, test;
};

// Uniform random partition of the edge set; val/test negatives are sampled
// uniformly from non-edges, one per positive.
inline LpSplit split_edges(const Graph& g, std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_edges: ratios must sum to 1");
    const std::size_t m = g.edges.size();
    const std::size_t n_val = std::size_t(std::floor(double(m) * ratios[1]));
    const std::size_t n_test = std::size_t(std::floor(double(m) * ratios[2]));
    if (n_val < 1 || n_test < 1 || n_val + n_test >= m)
        throw std::invalid_argument("split_edges: too few edges for the requested ratios");

    Rng rng(seed);
    Rng shuffle_rng = rng.substream("edge-shuffle");
    Rng neg_rng = rng.substream("negatives");

    std::vector<std::pair<int, int>> shuffled = g.edges;
    shuffle_rng.shuffle(shuffled);

    LpSplit split;
    split.val_pos.assign(shuffled.begin(), shuffled.begin() + n_val);
    split.test_pos.assign(shuffled.begin() + n_val, shuffled.begin() + n_val + n_test);
    split.train_pos.assign(shuffled.begin() + n_val + n_test, shuffled.end());

    std::set<std::pair<int, int>> forbidden(g.edges.begin(), g.edges.end());
    auto sample_negatives = [&](std::size_t count, std::vector<std::pair<int, int>>& out) {
        const double max_pairs = double(g.n) * double(g.n - 1) / 2.0;
        if (double(forbidden.size()) + double(count) > max_pairs)
            throw std::invalid_argument("split_edges: not enough non-edges to sample");
        while (out.size() < count) {
            int a = int(neg_rng.below(g.n));
            int b = int(neg_rng.below(g.n));
            if (a == b) continue;
            std::pair<int, int> e{std::min(a, b), std::max(a, b)};
            if (forbidden.insert(e).second) out.push_back(e);
        }
    };
    sample_negatives(n_val, split.val_neg);
    sample_negatives(n_test, split.test_neg);
    return split;
}

inline NcSplit split_nodes(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_nodes: ratios must sum to 1");
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = int(i);
    Rng rng(seed);
    Rng shuffle_rng = rng.substream("node-shuffle");
    shuffle_rng.shuffle(order);
    const std::size_t n_val = std::size_t(std::floor(double(n) * ratios[1]));
    const std::size_t n_test = std::size_t(std::floor(double(n) * ratios[2]));
    if (n_val < 1 || n_test < 1 || n_val + n_test >= n)
        throw std::invalid_argument("split_nodes: too few nodes for the requested ratios");
    NcSplit s;
    s.val.assign(order.begin(), order.begin() + n_val);
    s.test.assign(order.begin() + n_val, order.begin() + n_val + n_test);
    s.train.assign(order.begin() + n_val + n_test, order.end());
    return s;
}

// Uniform negative pairs for training-time loss terms, resampled every epoch;
// excludes all true edges and self pairs.
inline std::vector<std::pair<int, int>> sample_negative_edges(
    std::size_t n, const std::set<std::pair<int, int>>& edge_set, std::size_t count,
    Rng& rng) {
    std::vector<std::pair<int, int>> out;
    std::set<std::pair<int, int>> chosen;
    const double max_pairs = double(n) * double(n - 1) / 2.0;
    if (double(edge_set.size()) + double(count) > max_pairs)
        throw std::invalid_argument("sample_negative_edges: not enough non-edges");
    while (out.size() < count) {
        int a = int(rng.below(n));
        int b = int(rng.below(n));
        if (a == b) continue;
        std::pair<int, int> e{std::min(a, b), std::max(a, b)};
        if (edge_set.count(e) || !chosen.insert(e).second) continue;
        out.push_back(e);
    }
    return out;
}

// ---- Gromov delta-hyperbolicity ----------------------------------------------

struct DeltaResult {
    double delta = 0.0;
    std::size_t component_nodes = 0;  // size of the component measured
    bool disconnected = false;
};

namespace detail {

inline std::vector<std::vector<int>> adjacency(std::size_t n,
                                               const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    return adj;
}

inline std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adj, int src) {
    std::vector<int> dist(adj.size(), -1);
    std::deque<int> q{src};
    dist[src] = 0;
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (int v : adj[u])
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
    }
    return dist;
}

inline std::vector<int> largest_component(const std::vector<std::vector<int>>& adj) {
    std::vector<int> comp(adj.size(), -1);
    std::vector<int> best;
    int c = 0;
    for (std::size_t s = 0; s < adj.size(); ++s) {
        if (comp[s] >= 0) continue;
        std::vector<int> nodes;
        std::deque<int> q{int(s)};
        comp[s] = c;
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            nodes.push_back(u);
            for (int v : adj[u])
                if (comp[v] < 0) {
                    comp[v] = c;
                    q.push_back(v);
                }
        }
        if (nodes.size() > best.size()) best = nodes;
        ++c;
    }
    std::sort(best.begin(), best.end());
    return best;
}

// Four-point condition: (largest - second largest of the three pair sums)/2.
inline double four_point_delta(int dxy, int dzw, int dxz, int dyw, int dxw, int dyz) {
    int s1 = dxy + dzw, s2 = dxz + dyw, s3 = dxw + dyz;
    int hi = std::max({s1, s2, s3});
    int mid = s1 + s2 + s3 - hi - std::min({s1, s2, s3});
    return double(hi - mid) / 2.0;
}

}  // namespace detail

inline constexpr std::size_t kDeltaExactLimit = 300;

// Exact mode enumerates all 4-subsets of the largest connected component
// (O(n^4), guarded); sampled mode takes the max over random 4-subsets, a
// lower bound on the exact value.
inline DeltaResult delta_hyperbolicity(const Graph& g, bool exact,
                                       std::size_t sample_count = 100000,
                                       std::uint64_t seed = 0) {
    DeltaResult res;
    auto adj = detail::adjacency(g.n, g.edges);
    std::vector<int> comp = detail::largest_component(adj);
    res.component_nodes = comp.size();
    res.disconnected = comp.size() != g.n;
    if (comp.size() < 4) return res;

    if (exact) {
        if (comp.size() > kDeltaExactLimit)
            throw std::invalid_argument(
                "delta_hyperbolicity: component too large for exact mode (n > " +
                std::to_string(kDeltaExactLimit) + "); use sampled mode");
        const std::size_t nc = comp.size();
        std::vector<std::vector<int>> dist(nc);
        {
            std::vector<int> index(g.n, -1);
            for (std::size_t i = 0; i < nc; ++i) index[comp[i]] = int(i);
            for (std::size_t i = 0; i < nc; ++i) {
                std::vector<int> full = detail::bfs_distances(adj, comp[i]);
                dist[i].resize(nc);
                for (std::size_t j = 0; j < nc; ++j) dist[i][j] = full[comp[j]];
            }
        }
        double best = 0.0;
        for (std::size_t x = 0; x < nc; ++x)
            for (std::size_t y = x + 1; y < nc; ++y)
                for (std::size_t z = y + 1; z < nc; ++z)
                    for (std::size_t w = z + 1; w < nc; ++w)
                        best = std::max(best, detail::four_point_delta(
                                                  dist[x][y], dist[z][w], dist[x][z],
                                                  dist[y][w], dist[x][w], dist[y][z]));
        res.delta = best;
        return res;
    }

    Rng rng(seed);
    std::map<int, std::vector<int>> cache;
    auto dist_row = [&](int u) -> const std::vector<int>& {
        auto it = cache.find(u);
        if (it == cache.end()) it = cache.emplace(u, detail::bfs_distances(adj, u)).first;
        return it->second;
    };
    double best = 0.0;
    for (std::size_t s = 0; s < sample_count; ++s) {
        int ids[4];
        for (int i = 0; i < 4;) {
            int cand = comp[rng.below(comp.size())];
            bool dup = false;
            for (int j = 0; j < i; ++j) dup = dup || ids[j] == cand;
            if (!dup) ids[i++] = cand;
        }
        const auto& dx = dist_row(ids[0]);
        const auto& dy = dist_row(ids[1]);
        const auto& dz = dist_row(ids[2]);
        best = std::max(best, detail::four_point_delta(dx[ids[1]], dz[ids[3]], dx[ids[2]],
                                                       dy[ids[3]], dx[ids[3]], dy[ids[2]]));
    }
    res.delta = best;
    return res;
}

// ---- evaluation metrics ---------------------------------------------------------

// Area under the ROC curve via the rank statistic with tie averaging.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l > 0 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: undefined, needs both classes present");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (double(i + 1) + double(j + 1)) / 2.0;  // 1-based ranks
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t t = 0; t < labels.size(); ++t)
        if (labels[t] > 0) pos_rank_sum += rank[t];
    return (pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) /
           (double(n_pos) * double(n_neg));
}

// F1 of the positive class for binary predictions.
inline double f1_binary(std::span<const int> pred, std::span<const int> labels) {
    if (pred.size() != labels.size()) throw std::invalid_argument("f1_binary: size mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] > 0, l = labels[i] > 0;
        if (p && l) ++tp;
        else if (p && !l) ++fp;
        else if (!p && l) ++fn;
    }
    double denom = double(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : double(2 * tp) / denom;
}

inline double accuracy(std::span<const int> pred, std::span<const int> labels) {
    if (pred.size() != labels.size()) throw std::invalid_argument("accuracy: size mismatch");
    if (pred.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    return double(hit) / double(pred.size());
}

}  // namespace lorentz
