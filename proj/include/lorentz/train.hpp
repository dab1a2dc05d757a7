#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lorentz/data.hpp"
#include "lorentz/decoders.hpp"
#include "lorentz/layers.hpp"
#include "lorentz/manifold.hpp"
#include "lorentz/optim.hpp"
#include "lorentz/rng.hpp"

namespace lorentz {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainSettings {
    int epochs = 500;
    int patience = 100;
};

struct DatasetSpec {
    bool synthetic = true;
    DiseaseTreeConfig disease;
    std::uint64_t disease_seed = 1234;
    std::string edges_path, features_path, labels_path;
    // Row-normalize features to unit L2 norm before lifting. Keeps lifted
    // points near the origin, where the Fermi-Dirac decoder operates at its
    // design scale instead of saturating.
    bool normalize_features = true;
};

struct RunConfig {
    std::string task = "lp";     // lp | nc
    std::string model = "hgcn";  // hgcn | gcn
    DatasetSpec dataset;
    ModelConfig model_cfg;
    AdamConfig adam;
    TrainSettings training;
    std::vector<std::uint64_t> seeds;
    std::array<double, 3> split_ratios{0.85, 0.05, 0.10};
    double lambda_lp = 0.0;
    FermiDiracParams fermi_dirac;
    std::string output_dir;

    void validate() const {
        if (task != "lp" && task != "nc") throw ConfigError("task must be 'lp' or 'nc'");
        if (model != "hgcn" && model != "gcn")
            throw ConfigError("model must be 'hgcn' or 'gcn'");
        if (seeds.empty()) throw ConfigError("seeds must be non-empty");
        if (output_dir.empty()) throw ConfigError("output_dir is required");
        if (training.epochs < 1 || training.patience < 1)
            throw ConfigError("training.epochs and training.patience must be >= 1");
        if (lambda_lp < 0.0) throw ConfigError("lambda_lp must be >= 0");
        if (!(fermi_dirac.t > 0.0)) throw ConfigError("fermi_dirac.t must be > 0");
        double s = split_ratios[0] + split_ratios[1] + split_ratios[2];
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("split_ratios must sum to 1");
        model_cfg.validate();
        if (!dataset.synthetic && dataset.edges_path.empty())
            throw ConfigError("dataset.files.edges is required");
        if (!dataset.synthetic && dataset.features_path.empty())
            throw ConfigError("dataset.files.features is required");
    }
};

// ---- config parsing (strict: unknown keys are rejected) -----------------------

namespace cfg_detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

}  // namespace cfg_detail

inline RunConfig parse_run_config(const json& j) {
    using cfg_detail::check_keys;
    using cfg_detail::get_or;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j,
               {"task", "model", "dataset", "model_config", "optimizer", "training", "seeds",
                "split_ratios", "lambda_lp", "fermi_dirac", "output_dir"},
               "config root");

    RunConfig cfg;
    cfg.task = get_or<std::string>(j, "task", "lp");
    cfg.model = get_or<std::string>(j, "model", "hgcn");

    if (!j.contains("dataset")) throw ConfigError("dataset is required");
    const json& ds = j.at("dataset");
    check_keys(ds, {"disease", "files", "normalize_features"}, "dataset");
    cfg.dataset.normalize_features = get_or<bool>(ds, "normalize_features", true);
    if (ds.contains("disease") == ds.contains("files"))
        throw ConfigError("dataset needs exactly one of 'disease' or 'files'");
    if (ds.contains("disease")) {
        const json& d = ds.at("disease");
        check_keys(d,
                   {"nodes", "feature_dim", "beta", "branch_min", "branch_max",
                    "susceptibility_min", "susceptibility_max", "feature_inheritance",
                    "seed"},
                   "dataset.disease");
        cfg.dataset.synthetic = true;
        cfg.dataset.disease.n = get_or<std::size_t>(d, "nodes", 300);
        cfg.dataset.disease.feature_dim = get_or<std::size_t>(d, "feature_dim", 16);
        cfg.dataset.disease.beta = get_or<double>(d, "beta", 0.9);
        cfg.dataset.disease.branch_min = get_or<int>(d, "branch_min", 2);
        cfg.dataset.disease.branch_max = get_or<int>(d, "branch_max", 3);
        cfg.dataset.disease.susc_min = get_or<double>(d, "susceptibility_min", 0.0);
        cfg.dataset.disease.susc_max = get_or<double>(d, "susceptibility_max", 1.0);
        cfg.dataset.disease.feature_inheritance = get_or<double>(d, "feature_inheritance", 0.9);
        cfg.dataset.disease_seed = get_or<std::uint64_t>(d, "seed", 1234);
    } else {
        const json& f = ds.at("files");
        check_keys(f, {"edges", "features", "labels"}, "dataset.files");
        cfg.dataset.synthetic = false;
        cfg.dataset.edges_path = get_or<std::string>(f, "edges", "");
        cfg.dataset.features_path = get_or<std::string>(f, "features", "");
        cfg.dataset.labels_path = get_or<std::string>(f, "labels", "");
    }

    if (j.contains("model_config")) {
        const json& m = j.at("model_config");
        check_keys(m,
                   {"dims", "activation", "dropconnect", "dropconnect_on_attention",
                    "use_attention", "trainable_curvature", "aggregation", "init_curvature"},
                   "model_config");
        cfg.model_cfg.dims = get_or<std::vector<std::size_t>>(m, "dims", {16, 16});
        cfg.model_cfg.activation =
            parse_activation(get_or<std::string>(m, "activation", "relu"));
        cfg.model_cfg.dropconnect = get_or<double>(m, "dropconnect", 0.0);
        cfg.model_cfg.dropconnect_on_attention =
            get_or<bool>(m, "dropconnect_on_attention", true);
        cfg.model_cfg.use_attention = get_or<bool>(m, "use_attention", true);
        cfg.model_cfg.trainable_curvature = get_or<bool>(m, "trainable_curvature", true);
        std::string agg = get_or<std::string>(m, "aggregation", "center");
        if (agg != "center" && agg != "origin")
            throw ConfigError("model_config.aggregation must be 'center' or 'origin'");
        cfg.model_cfg.locus = agg == "center" ? AggLocus::Center : AggLocus::Origin;
        cfg.model_cfg.init_curvature = get_or<double>(m, "init_curvature", 1.0);
    } else {
        cfg.model_cfg.dims = {16, 16};
    }

    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o, {"lr", "weight_decay", "beta1", "beta2", "eps"}, "optimizer");
        cfg.adam.lr = get_or<double>(o, "lr", 0.01);
        cfg.adam.weight_decay = get_or<double>(o, "weight_decay", 0.0);
        cfg.adam.beta1 = get_or<double>(o, "beta1", 0.9);
        cfg.adam.beta2 = get_or<double>(o, "beta2", 0.999);
        cfg.adam.eps = get_or<double>(o, "eps", 1e-8);
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        check_keys(t, {"epochs", "patience"}, "training");
        cfg.training.epochs = get_or<int>(t, "epochs", 500);
        cfg.training.patience = get_or<int>(t, "patience", 100);
    }

    if (!j.contains("seeds")) throw ConfigError("seeds is required");
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

    if (j.contains("split_ratios")) {
        auto v = j.at("split_ratios").get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError("split_ratios must have 3 entries");
        cfg.split_ratios = {v[0], v[1], v[2]};
    } else if (cfg.task == "nc") {
        cfg.split_ratios = {0.70, 0.15, 0.15};
    }

    cfg.lambda_lp = get_or<double>(j, "lambda_lp", 0.0);

    if (j.contains("fermi_dirac")) {
        const json& f = j.at("fermi_dirac");
        check_keys(f, {"r", "t"}, "fermi_dirac");
        cfg.fermi_dirac.r = get_or<double>(f, "r", 2.0);
        cfg.fermi_dirac.t = get_or<double>(f, "t", 1.0);
    }

    cfg.output_dir = get_or<std::string>(j, "output_dir", "");
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

// ---- checkpoints ----------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'L', 'R', 'T', 'Z', 'C', 'K', 'P', '1'};

struct Checkpoint {
    json header;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

inline void save_checkpoint(const std::string& path, json header,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
    json tens = json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        tens.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.size();
    }
    header["tensors"] = tens;
    header["version"] = 1;
    std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw TrainError("cannot write checkpoint '" + path + "'");
    out.write(kCheckpointMagic, 8);
    std::uint64_t len = head.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(head.data(), std::streamsize(head.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  std::streamsize(t.size() * sizeof(double)));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrainError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw TrainError("'" + path + "' is not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string head(len, '\0');
    in.read(head.data(), std::streamsize(len));
    if (!in) throw TrainError("truncated checkpoint header in '" + path + "'");
    Checkpoint ckpt;
    ckpt.header = json::parse(head);
    for (const json& t : ckpt.header.at("tensors")) {
        std::vector<std::size_t> shape = t.at("shape").get<std::vector<std::size_t>>();
        Tensor tensor = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(tensor.data.data()),
                std::streamsize(tensor.size() * sizeof(double)));
        if (!in) throw TrainError("truncated checkpoint payload in '" + path + "'");
        ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(tensor));
    }
    return ckpt;
}

// ---- per-seed results -------------------------------------------------------------

struct SeedOutcome {
    std::uint64_t seed = 0;
    double primary = 0.0;  // test metric (roc_auc for lp, f1/accuracy for nc)
    double accuracy = 0.0;
    double f1 = 0.0;
    double val_best = 0.0;
    int best_epoch = -1;
    int stopped_epoch = -1;
    std::vector<double> curvatures;
};

struct RunReport {
    std::string task, model, metric;
    std::size_t n_nodes = 0, n_edges = 0;
    std::vector<SeedOutcome> seeds;
    double mean = 0.0;
    double stddev = 0.0;
    double wall_seconds = 0.0;  // kept out of report.json so runs are byte-identical
};

// ---- training engine ----------------------------------------------------------------

namespace train_detail {

inline double softplus_inv_floor(double t) {
    // inverse of t = softplus(raw) + floor
    double y = t - kCurvatureFloor;
    if (!(y > 0.0)) throw ConfigError("fermi_dirac.t too small for the positive floor");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

inline Vec log_origin_tail_plain(const Vec& y, double k) {
    double rk = std::sqrt(k);
    Vec tail(y.begin() + 1, y.end());
    double tn = 0.0;
    for (double c : tail) tn += c * c;
    tn = std::sqrt(tn);
    double arg = y[0] / rk;
    double dist = rk * std::acosh(arg < 1.0 ? 1.0 : arg);
    if (tn < 1e-15) return Vec(tail.size(), 0.0);
    for (double& c : tail) c *= dist / tn;
    return tail;
}

struct ParamIndex {
    struct Layer {
        std::size_t W, b, att;
    };
    std::vector<Layer> layers;
    std::vector<std::size_t> k_raws;  // L+1 entries (hgcn only)
    std::size_t fd_r = 0, fd_traw = 0;
    std::size_t W_cls = SIZE_MAX, b_cls = SIZE_MAX;
};

struct Instance {
    const RunConfig* cfg;
    const Graph* graph;
    NeighborLists nbrs;  // message-passing neighborhoods
    std::set<std::pair<int, int>> edge_set;
    int n_classes = 0;

    ParamSet params;
    ParamIndex idx;

    bool hyperbolic() const { return cfg->model == "hgcn"; }

    void init_params(Rng& init_rng) {
        const auto& mc = cfg->model_cfg;
        std::size_t d_in = graph->feature_dim();
        for (std::size_t l = 0; l < mc.dims.size(); ++l) {
            std::size_t d_out = mc.dims[l];
            double a = std::sqrt(6.0 / double(d_in + d_out));
            Tensor W = Tensor::zeros({d_out, d_in});
            for (double& x : W.data) x = init_rng.uniform(-a, a);
            ParamIndex::Layer li;
            li.W = params.add("layer" + std::to_string(l) + ".W", std::move(W));
            li.b = params.add("layer" + std::to_string(l) + ".b", Tensor::zeros({d_out}));
            double aa = std::sqrt(6.0 / double(2 * d_out + 1));
            Tensor att = Tensor::zeros({2 * d_out});
            for (double& x : att.data) x = init_rng.uniform(-aa, aa);
            li.att = params.add("layer" + std::to_string(l) + ".att", std::move(att),
                                /*trainable=*/hyperbolic() && mc.use_attention);
            idx.layers.push_back(li);
            d_in = d_out;
        }
        if (hyperbolic()) {
            for (std::size_t l = 0; l <= mc.dims.size(); ++l)
                idx.k_raws.push_back(params.add(
                    "curvature" + std::to_string(l) + ".raw",
                    Tensor::scalar(raw_from_curvature(mc.init_curvature)),
                    /*trainable=*/mc.trainable_curvature));
        }
        idx.fd_r = params.add("decoder.r", Tensor::scalar(cfg->fermi_dirac.r));
        idx.fd_traw =
            params.add("decoder.t_raw", Tensor::scalar(softplus_inv_floor(cfg->fermi_dirac.t)));
        if (cfg->task == "nc") {
            std::size_t d_last = mc.dims.back();
            double a = std::sqrt(6.0 / double(d_last + n_classes));
            Tensor W = Tensor::zeros({std::size_t(n_classes), d_last});
            for (double& x : W.data) x = init_rng.uniform(-a, a);
            idx.W_cls = params.add("head.W_cls", std::move(W));
            idx.b_cls = params.add("head.b_cls", Tensor::zeros({std::size_t(n_classes)}));
        }
    }

    struct Forward {
        std::vector<Var> leaves;
        std::vector<Var> emb;
        Var k_last;  // hgcn only
        Var fd_r, fd_t;
    };

    Forward forward(Tape& tape, bool training, Rng* dc_rng) const {
        const auto& mc = cfg->model_cfg;
        Forward f;
        for (const auto& p : params.params) f.leaves.push_back(tape.leaf(p.value, p.trainable));
        std::vector<Tensor> masks;  // must outlive the layer calls below
        const bool masked = training && mc.dropconnect > 0.0;
        if (masked) {
            for (const auto& li : idx.layers) {
                masks.push_back(dropconnect_mask(params[li.W].value.shape, mc.dropconnect,
                                                 *dc_rng));
                if (mc.dropconnect_on_attention)
                    masks.push_back(dropconnect_mask(params[li.att].value.shape,
                                                     mc.dropconnect, *dc_rng));
            }
        }
        if (hyperbolic()) {
            std::vector<Var> ks;
            for (std::size_t ki : idx.k_raws) ks.push_back(curvature_var(f.leaves[ki]));
            std::vector<HgcnLayerVars> layers;
            std::size_t mi = 0;
            for (std::size_t l = 0; l < idx.layers.size(); ++l) {
                HgcnLayerVars lv{f.leaves[idx.layers[l].W], f.leaves[idx.layers[l].b],
                                 f.leaves[idx.layers[l].att], ks[l], ks[l + 1]};
                if (masked) {
                    lv.w_mask = &masks[mi++];
                    if (mc.dropconnect_on_attention) lv.att_mask = &masks[mi++];
                }
                layers.push_back(lv);
            }
            f.emb = hgcn_forward(tape, graph->features, layers, nbrs, mc.activation,
                                 mc.use_attention, mc.locus);
            f.k_last = ks.back();
        } else {
            std::vector<GcnLayerVars> layers;
            std::size_t mi = 0;
            for (std::size_t l = 0; l < idx.layers.size(); ++l) {
                GcnLayerVars lv{f.leaves[idx.layers[l].W], f.leaves[idx.layers[l].b]};
                if (masked) {
                    lv.w_mask = &masks[mi++];
                    if (mc.dropconnect_on_attention) ++mi;  // att masks unused by gcn
                }
                layers.push_back(lv);
            }
            f.emb = gcn_forward(tape, graph->features, layers, nbrs, mc.activation);
        }
        f.fd_r = f.leaves[idx.fd_r];
        f.fd_t = add_scalar(softplus(f.leaves[idx.fd_traw]), kCurvatureFloor);
        return f;
    }

    Var lp_term(const Forward& f, const EdgeList& pos, const EdgeList& neg) const {
        if (hyperbolic()) return lp_loss(f.emb, pos, neg, f.fd_r, f.fd_t, f.k_last);
        return lp_loss_euclidean(f.emb, pos, neg, f.fd_r, f.fd_t);
    }

    Var nc_term(const Forward& f, std::span<const int> nodes) const {
        std::vector<Var> logits;
        std::vector<int> labels;
        logits.reserve(nodes.size());
        for (int v : nodes) {
            if (hyperbolic())
                logits.push_back(nc_logits(f.emb[v], f.leaves[idx.W_cls],
                                           f.leaves[idx.b_cls], f.k_last));
            else
                logits.push_back(nc_logits_euclidean(f.emb[v], f.leaves[idx.W_cls],
                                                     f.leaves[idx.b_cls]));
            labels.push_back(graph->labels[v]);
        }
        return softmax_cross_entropy(logits, labels);
    }

    // ---- plain (no-tape) evaluation helpers ----

    double fd_t_value() const {
        return softplus_value(params[idx.fd_traw].value.data[0]) + kCurvatureFloor;
    }
    double fd_r_value() const { return params[idx.fd_r].value.data[0]; }
    double k_last_value() const {
        return curvature_from_raw(params[idx.k_raws.back()].value.data[0]);
    }
    std::vector<double> curvature_values() const {
        std::vector<double> ks;
        for (std::size_t ki : idx.k_raws)
            ks.push_back(curvature_from_raw(params[ki].value.data[0]));
        return ks;
    }

    double edge_score(const std::vector<Vec>& emb, int i, int j) const {
        FermiDiracParams p{fd_r_value(), fd_t_value()};
        if (hyperbolic()) {
            Curvature K(k_last_value());
            return fermi_dirac_score(HPoint{emb[i]}, HPoint{emb[j]}, p, K);
        }
        double d2 = 0.0;
        for (std::size_t c = 0; c < emb[i].size(); ++c) {
            double d = emb[i][c] - emb[j][c];
            d2 += d * d;
        }
        return fermi_dirac_prob(d2, p);
    }

    double lp_auc(const std::vector<Vec>& emb, const EdgeList& pos, const EdgeList& neg) const {
        std::vector<double> scores;
        std::vector<int> labels;
        for (auto [i, j] : pos) {
            scores.push_back(edge_score(emb, i, j));
            labels.push_back(1);
        }
        for (auto [i, j] : neg) {
            scores.push_back(edge_score(emb, i, j));
            labels.push_back(0);
        }
        return roc_auc(scores, labels);
    }

    std::vector<int> nc_predict(const std::vector<Vec>& emb,
                                std::span<const int> nodes) const {
        const Tensor& W = params[idx.W_cls].value;
        const Tensor& b = params[idx.b_cls].value;
        std::vector<int> preds;
        preds.reserve(nodes.size());
        for (int v : nodes) {
            Vec in = hyperbolic() ? log_origin_tail_plain(emb[v], k_last_value()) : emb[v];
            int best = 0;
            double best_val = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < n_classes; ++c) {
                double z = b.data[c];
                for (std::size_t q = 0; q < in.size(); ++q) z += W.at(c, q) * in[q];
                if (z > best_val) {
                    best_val = z;
                    best = c;
                }
            }
            preds.push_back(best);
        }
        return preds;
    }
};

inline std::vector<Vec> values_of(const std::vector<Var>& emb) {
    std::vector<Vec> out;
    out.reserve(emb.size());
    for (const Var& e : emb) out.push_back(e.value().data);
    return out;
}

}  // namespace train_detail

// Trains one seed end to end and returns the outcome plus the best-epoch
// embeddings (rows) for export.
struct SeedArtifacts {
    SeedOutcome outcome;
    std::vector<Vec> embeddings;  // best-epoch, evaluation forward
    std::vector<std::pair<std::string, Tensor>> parameters;  // best-epoch values
};

inline SeedArtifacts train_one_seed(const RunConfig& cfg, const Graph& graph,
                                    std::uint64_t seed) {
    using namespace train_detail;
    Rng master(seed);
    Rng init_rng = master.substream("init");
    Rng dc_rng = master.substream("dropconnect");
    Rng samp_rng = master.substream("sampling");
    Rng split_rng = master.substream("splits");

    Instance inst;
    inst.cfg = &cfg;
    inst.graph = &graph;
    inst.edge_set.insert(graph.edges.begin(), graph.edges.end());

    LpSplit lp_split;
    NcSplit nc_split;
    const bool is_lp = cfg.task == "lp";
    if (is_lp) {
        lp_split = split_edges(graph, cfg.split_ratios, split_rng.next_u64());
        inst.nbrs = build_neighbors(graph.n, lp_split.train_pos);  // leakage guard
    } else {
        if (!graph.has_labels) throw ConfigError("nc task requires labels");
        nc_split = split_nodes(graph.n, cfg.split_ratios, split_rng.next_u64());
        inst.nbrs = build_neighbors(graph.n, graph.edges);
        int mx = 0;
        for (int l : graph.labels) {
            if (l < 0) throw ConfigError("labels must be non-negative");
            mx = std::max(mx, l);
        }
        inst.n_classes = mx + 1;
    }
    inst.init_params(init_rng);

    Adam adam(cfg.adam, inst.params);
    EarlyStop stop;
    stop.patience = cfg.training.patience;
    std::vector<Tensor> best_params = inst.params.snapshot();

    auto eval_embeddings = [&](Tape& tape) {
        auto f = inst.forward(tape, /*training=*/false, nullptr);
        return values_of(f.emb);
    };

    auto val_labels = [&]() {
        std::vector<int> ls;
        for (int v : nc_split.val) ls.push_back(graph.labels[v]);
        return ls;
    };

    int epoch = 0;
    for (; epoch < cfg.training.epochs; ++epoch) {
        Tape tape;
        auto f = inst.forward(tape, /*training=*/true, &dc_rng);

        Var loss;
        if (is_lp) {
            EdgeList negs = sample_negative_edges(graph.n, inst.edge_set,
                                                  lp_split.train_pos.size(), samp_rng);
            loss = inst.lp_term(f, lp_split.train_pos, negs);
        } else {
            Var ce = inst.nc_term(f, nc_split.train);
            if (cfg.lambda_lp > 0.0) {
                EdgeList negs = sample_negative_edges(graph.n, inst.edge_set,
                                                      graph.edges.size(), samp_rng);
                loss = nc_loss(ce, cfg.lambda_lp, inst.lp_term(f, graph.edges, negs));
            } else {
                loss = ce;
            }
        }
        if (!std::isfinite(loss.value().data[0]))
            throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                             " (seed " + std::to_string(seed) + ")");
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(inst.params.size());
        for (std::size_t i = 0; i < inst.params.size(); ++i)
            grads.push_back(tape.grad(f.leaves[i]));
        try {
            adam.step(inst.params, grads);
        } catch (const std::runtime_error& e) {
            throw TrainError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             " (seed " + std::to_string(seed) + ")");
        }

        // validation with unmasked weights
        double val_metric;
        {
            Tape eval_tape;
            std::vector<Vec> emb = eval_embeddings(eval_tape);
            if (is_lp) {
                val_metric = inst.lp_auc(emb, lp_split.val_pos, lp_split.val_neg);
            } else {
                auto preds = inst.nc_predict(emb, nc_split.val);
                auto labels = val_labels();
                val_metric = inst.n_classes == 2 ? f1_binary(preds, labels)
                                                 : accuracy(preds, labels);
            }
        }
        if (stop.update(val_metric, epoch)) best_params = inst.params.snapshot();
        if (stop.should_stop()) break;
    }

    inst.params.restore(best_params);

    SeedArtifacts art;
    art.outcome.seed = seed;
    art.outcome.best_epoch = stop.best_epoch;
    art.outcome.stopped_epoch = std::min(epoch, cfg.training.epochs - 1);
    art.outcome.val_best = stop.best;
    if (inst.hyperbolic()) art.outcome.curvatures = inst.curvature_values();

    Tape final_tape;
    art.embeddings = eval_embeddings(final_tape);
    for (const auto& p : inst.params.params) art.parameters.emplace_back(p.name, p.value);
    if (is_lp) {
        art.outcome.primary = inst.lp_auc(art.embeddings, lp_split.test_pos, lp_split.test_neg);
    } else {
        auto preds = inst.nc_predict(art.embeddings, nc_split.test);
        std::vector<int> labels;
        for (int v : nc_split.test) labels.push_back(graph.labels[v]);
        art.outcome.accuracy = accuracy(preds, labels);
        art.outcome.f1 = inst.n_classes == 2 ? f1_binary(preds, labels) : art.outcome.accuracy;
        art.outcome.primary = inst.n_classes == 2 ? art.outcome.f1 : art.outcome.accuracy;
    }
    return art;
}

// ---- orchestration + artifacts -----------------------------------------------------

namespace train_detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_embeddings_csv(const std::string& path, const std::vector<Vec>& emb,
                                 bool hyperbolic, double k_last) {
    std::ofstream out(path);
    if (!out) throw TrainError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < emb.size(); ++i) {
        out << i;
        if (hyperbolic) {
            PoincarePoint p = to_poincare(HPoint{emb[i]}, Curvature(k_last));
            for (double c : p.coords) out << "," << format_double(c);
        } else {
            for (double c : emb[i]) out << "," << format_double(c);
        }
        out << "\n";
    }
}

}  // namespace train_detail

inline Graph load_dataset(const RunConfig& cfg) {
    Graph g = cfg.dataset.synthetic
                  ? generate_disease_tree(cfg.dataset.disease, cfg.dataset.disease_seed)
                  : load_graph(cfg.dataset.edges_path, cfg.dataset.features_path,
                               cfg.dataset.labels_path);
    if (cfg.dataset.normalize_features) {
        const std::size_t d = g.feature_dim();
        for (std::size_t i = 0; i < g.n; ++i) {
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) sq += g.features.at(i, c) * g.features.at(i, c);
            if (sq > 0.0) {
                double inv = 1.0 / std::sqrt(sq);
                for (std::size_t c = 0; c < d; ++c) g.features.at(i, c) *= inv;
            }
        }
    }
    return g;
}

// Full `train` command: trains every seed (optionally on worker threads),
// writes report.json, per-seed embeddings and checkpoints, and a timing
// sidecar. report.json is byte-identical across reruns of the same config.
inline RunReport run_train(const RunConfig& cfg, unsigned workers = 1) {
    auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    Graph graph = load_dataset(cfg);
    if (cfg.task == "nc" && !graph.has_labels)
        throw ConfigError("nc task requires a labeled dataset");

    std::filesystem::create_directories(cfg.output_dir);

    std::vector<SeedArtifacts> arts(cfg.seeds.size());
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cfg.seeds.size()) return;
            try {
                arts[i] = train_one_seed(cfg, graph, cfg.seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < std::min<unsigned>(workers, cfg.seeds.size()); ++w)
            pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    RunReport report;
    report.task = cfg.task;
    report.model = cfg.model;
    report.n_nodes = graph.n;
    report.n_edges = graph.edges.size();
    report.metric = cfg.task == "lp" ? "roc_auc" : "f1_or_accuracy";
    if (cfg.task == "nc") {
        int mx = 0;
        for (int l : graph.labels) mx = std::max(mx, l);
        report.metric = mx + 1 == 2 ? "f1" : "accuracy";
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < arts.size(); ++i) {
        report.seeds.push_back(arts[i].outcome);
        sum += arts[i].outcome.primary;
    }
    report.mean = sum / double(arts.size());
    double ss = 0.0;
    for (const auto& o : report.seeds) ss += (o.primary - report.mean) * (o.primary - report.mean);
    report.stddev = report.seeds.size() > 1 ? std::sqrt(ss / double(report.seeds.size() - 1))
                                            : 0.0;

    // per-seed artifacts
    for (std::size_t i = 0; i < arts.size(); ++i) {
        const auto& art = arts[i];
        std::string tag = std::to_string(cfg.seeds[i]);
        bool hyp = cfg.model == "hgcn";
        double k_last = hyp ? art.outcome.curvatures.back() : 0.0;
        train_detail::write_embeddings_csv(cfg.output_dir + "/embeddings_" + tag + ".csv",
                                           art.embeddings, hyp, k_last);

        json header{{"model", cfg.model},
                    {"task", cfg.task},
                    {"seed", cfg.seeds[i]},
                    {"geometry", hyp ? "hyperboloid" : "euclidean"},
                    {"curvatures", art.outcome.curvatures}};
        std::vector<std::pair<std::string, Tensor>> tensors;
        Tensor emb = Tensor::zeros({art.embeddings.size(), art.embeddings[0].size()});
        for (std::size_t r = 0; r < art.embeddings.size(); ++r)
            for (std::size_t c = 0; c < art.embeddings[r].size(); ++c)
                emb.at(r, c) = art.embeddings[r][c];
        tensors.emplace_back("embeddings", std::move(emb));
        for (const auto& p : art.parameters) tensors.push_back(p);
        save_checkpoint(cfg.output_dir + "/checkpoint_" + tag + ".ckpt", header, tensors);
    }

    // report.json: deterministic (sorted keys, no timing)
    json seeds = json::array();
    for (const auto& o : report.seeds) {
        json s{{"seed", o.seed},
               {"best_epoch", o.best_epoch},
               {"stopped_epoch", o.stopped_epoch},
               {"val_best", o.val_best},
               {"curvatures", o.curvatures}};
        if (cfg.task == "lp") {
            s["test_roc_auc"] = o.primary;
        } else {
            s["test_f1"] = o.f1;
            s["test_accuracy"] = o.accuracy;
        }
        seeds.push_back(s);
    }
    json j{{"task", report.task},
           {"model", report.model},
           {"metric", report.metric},
           {"dataset", {{"nodes", report.n_nodes}, {"edges", report.n_edges}}},
           {"seed_count", report.seeds.size()},
           {"seeds", seeds},
           {"mean", report.mean},
           {"std", report.stddev}};
    {
        std::ofstream out(cfg.output_dir + "/report.json");
        if (!out) throw TrainError("cannot write report.json");
        out << j.dump(2) << "\n";
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        std::ofstream out(cfg.output_dir + "/timing.txt");
        out << "wall_seconds " << report.wall_seconds << "\n";
    }
    return report;
}

// ---- export command -----------------------------------------------------------------

// Writes node_id,p1,...,pd rows of Poincare-ball coordinates for a
// hyperboloid checkpoint.
inline void export_poincare(const std::string& ckpt_path, const std::string& out_csv) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.header.value("geometry", "") != "hyperboloid")
        throw TrainError("checkpoint '" + ckpt_path +
                         "' does not hold hyperboloid embeddings");
    const Tensor* emb = ckpt.find("embeddings");
    if (!emb || emb->rank() != 2)
        throw TrainError("checkpoint '" + ckpt_path + "' has no embeddings tensor");
    std::vector<double> ks = ckpt.header.at("curvatures").get<std::vector<double>>();
    if (ks.empty()) throw TrainError("checkpoint is missing curvatures");
    Curvature K(ks.back());
    std::ofstream out(out_csv);
    if (!out) throw TrainError("cannot write '" + out_csv + "'");
    const std::size_t n = emb->shape[0], w = emb->shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        Vec row(w);
        for (std::size_t c = 0; c < w; ++c) row[c] = emb->at(i, c);
        PoincarePoint p = to_poincare(HPoint{std::move(row)}, K);
        out << i;
        for (double c : p.coords) out << "," << train_detail::format_double(c);
        out << "\n";
    }
}

}  // namespace lorentz
