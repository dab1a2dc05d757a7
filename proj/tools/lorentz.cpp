// Command-line front end: train models, measure Gromov delta-hyperbolicity,
// and export Poincare-disk coordinates from checkpoints.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lorentz/data.hpp"
#include "lorentz/train.hpp"

namespace {

unsigned sweep_workers() {
    const char* env = std::getenv("LORENTZ_THREADS");
    if (!env) return 1;
    long v = std::strtol(env, nullptr, 10);
    return v > 1 ? unsigned(v) : 1u;
}

int cmd_train(const std::string& config_path) {
    lorentz::RunConfig cfg = lorentz::load_run_config(config_path);
    lorentz::RunReport report = lorentz::run_train(cfg, sweep_workers());
    std::printf("task=%s model=%s metric=%s mean=%.6f std=%.6f seeds=%zu\n",
                report.task.c_str(), report.model.c_str(), report.metric.c_str(),
                report.mean, report.stddev, report.seeds.size());
    std::printf("report: %s/report.json (%.1fs)\n", cfg.output_dir.c_str(),
                report.wall_seconds);
    return 0;
}

int cmd_hyperbolicity(const std::string& edges_path, bool exact_flag, long samples) {
    // the edge file alone defines the graph; synthesize unit features
    std::vector<std::pair<int, int>> edges;
    long max_node = -1;
    {
        std::ifstream in(edges_path);
        if (!in) throw lorentz::ParseError("cannot open edge file '" + edges_path + "'");
        std::string line;
        std::size_t lineno = 0;
        std::set<std::pair<int, int>> seen;
        while (std::getline(in, line)) {
            ++lineno;
            std::string_view sv = lorentz::detail::trim(line);
            if (sv.empty()) continue;
            std::size_t tab = sv.find_first_of(" \t");
            if (tab == std::string_view::npos)
                throw lorentz::ParseError(edges_path + ":" + std::to_string(lineno) +
                                          ": expected 'i<TAB>j'");
            long a = lorentz::detail::parse_int(lorentz::detail::trim(sv.substr(0, tab)),
                                                edges_path, lineno);
            long b = lorentz::detail::parse_int(lorentz::detail::trim(sv.substr(tab + 1)),
                                                edges_path, lineno);
            if (a == b)
                throw lorentz::ParseError(edges_path + ":" + std::to_string(lineno) +
                                          ": self-loops are not allowed");
            if (a < 0 || b < 0)
                throw lorentz::ParseError(edges_path + ":" + std::to_string(lineno) +
                                          ": negative node index");
            max_node = std::max({max_node, a, b});
            std::pair<int, int> e{int(std::min(a, b)), int(std::max(a, b))};
            if (seen.insert(e).second) edges.push_back(e);
        }
    }
    lorentz::Graph g;
    g.n = std::size_t(max_node + 1);
    g.edges = std::move(edges);
    g.features = lorentz::Tensor::zeros({g.n, 1});

    bool exact = samples <= 0 ? true : exact_flag;
    lorentz::DeltaResult res =
        lorentz::delta_hyperbolicity(g, exact, samples > 0 ? std::size_t(samples) : 0, 0);
    if (res.disconnected)
        std::fprintf(stderr,
                     "warning: graph is disconnected; using largest component "
                     "(%zu of %zu nodes)\n",
                     res.component_nodes, g.n);
    lorentz::json out{{"n", g.n},
                      {"m", g.edges.size()},
                      {"delta", res.delta},
                      {"mode", exact ? "exact" : "sampled"}};
    std::cout << out.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperbolic graph convolutional networks on the Lorentz hyperboloid"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "Train a model from a JSON config");
    train->add_option("--config", config_path, "Path to the run config")->required();

    std::string edges_path;
    bool exact = false;
    long samples = -1;
    auto* hyp = app.add_subcommand("hyperbolicity", "Gromov delta-hyperbolicity of a graph");
    hyp->add_option("--edges", edges_path, "Edge list file (i<TAB>j per line)")->required();
    auto* exact_opt = hyp->add_flag("--exact", exact, "Enumerate all 4-tuples (default)");
    auto* samples_opt =
        hyp->add_option("--samples", samples, "Sampled mode with this many 4-tuples");
    exact_opt->excludes(samples_opt);

    std::string ckpt_path, out_path;
    auto* exp = app.add_subcommand("export", "Export Poincare-disk coordinates");
    exp->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
    exp->add_option("--out", out_path, "Output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path);
        if (hyp->parsed()) return cmd_hyperbolicity(edges_path, samples <= 0, samples);
        if (exp->parsed()) {
            lorentz::export_poincare(ckpt_path, out_path);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
