#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lorentz/decoders.hpp"
#include "lorentz/layers.hpp"
#include "lorentz/optim.hpp"
#include "oracles.hpp"

using namespace lorentz;

namespace {

constexpr double kCosh1 = 1.5430806348152437785;
constexpr double kSinh1 = 1.1752011936438014569;

Var point_var(Tape& t, const HPoint& x, bool rg = false) {
    return t.leaf(Tensor::vector(x.coords), rg);
}

HPoint as_hpoint(const Var& v) { return HPoint{v.value().data}; }

void check_close(const Vec& a, const Vec& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == Catch::Approx(b[i]).margin(tol).epsilon(tol));
}

}  // namespace

TEST_CASE("feature lifting", "[layers]") {
    Tape t;
    Var k = t.scalar_constant(1.0);

    SECTION("zero features map to the origin") {
        Var p = feature_to_hyperbolic(t, Tensor::vector({0.0, 0.0, 0.0}), k);
        check_close(p.value().data, {1.0, 0.0, 0.0, 0.0}, 1e-15);
        Var k4 = t.scalar_constant(4.0);
        Var p4 = feature_to_hyperbolic(t, Tensor::vector({0.0}), k4);
        check_close(p4.value().data, {2.0, 0.0}, 1e-15);
    }

    SECTION("one-dimensional closed form") {
        Var p = feature_to_hyperbolic(t, Tensor::vector({1.0}), k);
        check_close(p.value().data, {kCosh1, kSinh1}, 1e-14);
    }

    SECTION("outputs live on the manifold") {
        Rng rng(7);
        for (int it = 0; it < 100; ++it) {
            Curvature K(rng.uniform(0.25, 4.0));
            Var kv = t.scalar_constant(K.k());
            Tensor row = Tensor::zeros({4});
            for (double& x : row.data) x = rng.normal();
            Var p = feature_to_hyperbolic(t, row, kv);
            CHECK(on_manifold(as_hpoint(p), K, 1e-9));
        }
    }
}

TEST_CASE("hyperboloid linear transform", "[layers]") {
    Tape t;
    Rng rng(11);
    Curvature K(1.0);
    Var k = t.scalar_constant(1.0);
    HPoint x = oracles::random_hpoint(rng, 3, K);
    Var xv = point_var(t, x);

    SECTION("identity matrix is the identity map") {
        Var y = hyp_linear(t.constant(Tensor::identity(3)), xv, k);
        check_close(y.value().data, x.coords, 1e-9);
    }

    SECTION("zero matrix sends everything to the origin") {
        Var y = hyp_linear(t.constant(Tensor::zeros({3, 3})), xv, k);
        check_close(y.value().data, origin(3, K).coords, 1e-12);
    }

    SECTION("2I doubles the tangent representation") {
        TangentVec v = oracles::random_tangent(rng, origin(3, K), K);
        HPoint p = exp_map(v, K);
        Tensor two_i = Tensor::identity(3);
        for (std::size_t i = 0; i < 3; ++i) two_i.at(i, i) = 2.0;
        Var y = hyp_linear(t.constant(two_i), point_var(t, p), k);
        TangentVec v2{origin(3, K), Vec(4)};
        for (int i = 0; i < 4; ++i) v2.vec[i] = 2.0 * v.vec[i];
        HPoint expected = exp_map(v2, K);
        check_close(y.value().data, expected.coords, 1e-9);
        CHECK(on_manifold(as_hpoint(y), K, 1e-9));
    }

    SECTION("shape mismatch rejected") {
        CHECK_THROWS_AS(hyp_linear(t.constant(Tensor::zeros({2, 4})), xv, k),
                        std::invalid_argument);
    }
}

TEST_CASE("hyperboloid bias addition", "[layers]") {
    Tape t;
    Rng rng(13);
    Curvature K(1.0);
    Var k = t.scalar_constant(1.0);

    SECTION("zero bias is the identity") {
        HPoint x = oracles::random_hpoint(rng, 3, K);
        Var y = hyp_bias_add(point_var(t, x), t.constant(Tensor::zeros({3})), k);
        check_close(y.value().data, x.coords, 1e-12);
    }

    SECTION("at the origin the transport is the identity") {
        Vec b{0.3, -0.5, 0.2};
        Var y = hyp_bias_add(point_var(t, origin(3, K)), t.constant(Tensor::vector(b)), k);
        HPoint expected = exp_map(TangentVec{origin(3, K), {0.0, 0.3, -0.5, 0.2}}, K);
        check_close(y.value().data, expected.coords, 1e-12);
    }

    SECTION("bias moves the point by exactly ||(0,b)||_L") {
        for (int it = 0; it < 50; ++it) {
            Curvature Kr(rng.uniform(0.25, 4.0));
            Var kv = t.scalar_constant(Kr.k());
            HPoint x = oracles::random_hpoint(rng, 3, Kr);
            Vec b{rng.normal(), rng.normal(), rng.normal()};
            Var y = hyp_bias_add(point_var(t, x), t.constant(Tensor::vector(b)), kv);
            double expected = euclidean_norm(b);  // ||(0,b)||_L = ||b||_2
            CHECK(distance(x, as_hpoint(y), Kr) == Catch::Approx(expected).epsilon(1e-8));
            CHECK(on_manifold(as_hpoint(y), Kr, 1e-8));
        }
    }
}

TEST_CASE("attention weights", "[layers]") {
    Tape t;
    Rng rng(17);
    Curvature K(1.0);
    Var k = t.scalar_constant(1.0);
    HPoint xi = oracles::random_hpoint(rng, 3, K);
    Var xiv = point_var(t, xi);

    SECTION("single neighbor gets weight 1") {
        std::vector<Var> nbrs{point_var(t, oracles::random_hpoint(rng, 3, K))};
        Var att = t.constant(Tensor::vector({0.2, -0.3, 0.4, 0.1, 0.5, -0.2}));
        Var w = hyp_attention_weights(xiv, nbrs, att, k);
        CHECK(w.value().size() == 1);
        CHECK(w.value().data[0] == 1.0);
    }

    SECTION("zero parameters give uniform weights") {
        std::vector<Var> nbrs;
        for (int j = 0; j < 4; ++j) nbrs.push_back(point_var(t, oracles::random_hpoint(rng, 3, K)));
        Var att = t.constant(Tensor::zeros({6}));
        Var w = hyp_attention_weights(xiv, nbrs, att, k);
        for (double x : w.value().data) CHECK(x == Catch::Approx(0.25).margin(1e-15));
    }

    SECTION("identical neighbors share weight equally") {
        HPoint y = oracles::random_hpoint(rng, 3, K);
        std::vector<Var> nbrs{point_var(t, y), point_var(t, y)};
        Tensor att = Tensor::zeros({6});
        for (double& a : att.data) a = rng.normal();
        Var w = hyp_attention_weights(xiv, nbrs, t.constant(att), k);
        CHECK(w.value().data[0] == Catch::Approx(0.5).margin(1e-12));
        CHECK(w.value().data[1] == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("weights form a probability distribution") {
        std::vector<Var> nbrs;
        for (int j = 0; j < 6; ++j) nbrs.push_back(point_var(t, oracles::random_hpoint(rng, 3, K)));
        Tensor att = Tensor::zeros({6});
        for (double& a : att.data) a = rng.normal();
        Var w = hyp_attention_weights(xiv, nbrs, t.constant(att), k);
        double s = 0.0;
        for (double x : w.value().data) {
            CHECK(x > 0.0);
            s += x;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    SECTION("empty neighborhood rejected") {
        std::vector<Var> none;
        Var att = t.constant(Tensor::zeros({6}));
        CHECK_THROWS_AS(hyp_attention_weights(xiv, none, att, k), std::invalid_argument);
    }
}

TEST_CASE("hyperbolic aggregation", "[layers]") {
    Tape t;
    Rng rng(19);
    Curvature K(1.0);
    Var k = t.scalar_constant(1.0);
    HPoint xi = oracles::random_hpoint(rng, 3, K);
    Var xiv = point_var(t, xi);

    SECTION("aggregating only yourself is the identity") {
        std::vector<Var> nbrs{xiv};
        Var w = t.constant(Tensor::vector({1.0}));
        Var y = hyp_aggregate(xiv, nbrs, w, k);
        check_close(y.value().data, xi.coords, 1e-12);
    }

    SECTION("single neighbor with weight 1 lands on the neighbor") {
        HPoint yj = oracles::random_hpoint(rng, 3, K);
        std::vector<Var> nbrs{point_var(t, yj)};
        Var y = hyp_aggregate(xiv, nbrs, t.constant(Tensor::vector({1.0})), k);
        check_close(y.value().data, yj.coords, 1e-9);
    }

    SECTION("duplicated neighbor with split weights lands on the neighbor") {
        HPoint yj = oracles::random_hpoint(rng, 3, K);
        std::vector<Var> nbrs{point_var(t, yj), point_var(t, yj)};
        Var y = hyp_aggregate(xiv, nbrs, t.constant(Tensor::vector({0.5, 0.5})), k);
        check_close(y.value().data, yj.coords, 1e-9);
    }

    SECTION("origin locus variant stays on the manifold") {
        std::vector<Var> nbrs;
        for (int j = 0; j < 3; ++j) nbrs.push_back(point_var(t, oracles::random_hpoint(rng, 3, K)));
        Var w = t.constant(Tensor::full({3}, 1.0 / 3.0));
        Var y = hyp_aggregate(xiv, nbrs, w, k, AggLocus::Origin);
        CHECK(on_manifold(as_hpoint(y), K, 1e-9));
    }
}

TEST_CASE("curvature-varying activation", "[layers]") {
    Tape t;
    Rng rng(23);
    Curvature K(1.0);
    Var k = t.scalar_constant(1.0);

    SECTION("identity activation with equal curvatures is the identity") {
        HPoint x = oracles::random_hpoint(rng, 3, K);
        Var y = hyp_activation(point_var(t, x), k, k, Activation::Identity);
        check_close(y.value().data, x.coords, 1e-9);
    }

    SECTION("origin is a fixed point for any activation and curvature pair") {
        Var k_out = t.scalar_constant(2.5);
        for (Activation a : {Activation::Identity, Activation::Relu, Activation::Tanh}) {
            Var y = hyp_activation(point_var(t, origin(3, K)), k, k_out, a);
            check_close(y.value().data, origin(3, Curvature(2.5)).coords, 1e-12);
        }
    }

    SECTION("relu on an all-negative tangent lands on the origin") {
        HPoint x = exp_map(TangentVec{origin(2, K), {0.0, -0.8, -0.3}}, K);
        Var y = hyp_activation(point_var(t, x), k, k, Activation::Relu);
        check_close(y.value().data, origin(2, K).coords, 1e-12);
    }

    SECTION("output lands on the target-curvature manifold") {
        Curvature K_out(3.0);
        Var ko = t.scalar_constant(3.0);
        for (int it = 0; it < 50; ++it) {
            HPoint x = oracles::random_hpoint(rng, 3, K);
            Var y = hyp_activation(point_var(t, x), k, ko, Activation::Tanh);
            CHECK(on_manifold(as_hpoint(y), K_out, 1e-9));
        }
    }

    SECTION("activations that move zero are rejected in config") {
        CHECK_THROWS_AS(parse_activation("sigmoid"), std::invalid_argument);
        CHECK_THROWS_AS(parse_activation("gelu"), std::invalid_argument);
    }
}

namespace {

// Two-layer HGCN + Fermi-Dirac LP loss with every parameter trainable;
// used for end-to-end gradient checks against finite differences.
struct TinyHgcn {
    Tensor features;
    NeighborLists nbrs;
    EdgeList pos, neg;
    bool attention = true;
    AggLocus locus = AggLocus::Center;
    Activation act = Activation::Tanh;
    std::vector<Tensor> p;  // W0,b0,att0,W1,b1,att1,kraw0,kraw1,kraw2,r,traw

    static TinyHgcn make(Rng& rng, bool attention, AggLocus locus) {
        TinyHgcn m;
        m.attention = attention;
        m.locus = locus;
        const std::size_t n = 5, d = 3, h = 3, out = 2;
        m.features = Tensor::zeros({n, d});
        for (double& x : m.features.data) x = rng.normal();
        m.nbrs = build_neighbors(n, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
        m.pos = {{0, 1}, {2, 3}};
        m.neg = {{0, 2}, {1, 4}};
        auto rand_tensor = [&](std::vector<std::size_t> shape, double s) {
            Tensor t = Tensor::zeros(std::move(shape));
            for (double& x : t.data) x = s * rng.normal();
            return t;
        };
        m.p.push_back(rand_tensor({h, d}, 0.5));      // W0
        m.p.push_back(rand_tensor({h}, 0.3));         // b0
        m.p.push_back(rand_tensor({2 * h}, 0.4));     // att0
        m.p.push_back(rand_tensor({out, h}, 0.5));    // W1
        m.p.push_back(rand_tensor({out}, 0.3));       // b1
        m.p.push_back(rand_tensor({2 * out}, 0.4));   // att1
        m.p.push_back(Tensor::scalar(raw_from_curvature(1.0) + 0.2 * rng.normal()));
        m.p.push_back(Tensor::scalar(raw_from_curvature(1.0) + 0.2 * rng.normal()));
        m.p.push_back(Tensor::scalar(raw_from_curvature(1.0) + 0.2 * rng.normal()));
        m.p.push_back(Tensor::scalar(1.0 + 0.5 * rng.uniform()));  // r
        m.p.push_back(Tensor::scalar(0.3 * rng.normal()));         // t raw
        return m;
    }

    std::vector<Var> forward(Tape& t, std::vector<Var>& leaves, Var& k_out) const {
        leaves.clear();
        for (const auto& x : p) leaves.push_back(t.leaf(x, true));
        Var k0 = curvature_var(leaves[6]);
        Var k1 = curvature_var(leaves[7]);
        Var k2 = curvature_var(leaves[8]);
        HgcnLayerVars l0{leaves[0], leaves[1], leaves[2], k0, k1};
        HgcnLayerVars l1{leaves[3], leaves[4], leaves[5], k1, k2};
        const HgcnLayerVars layers[2] = {l0, l1};
        k_out = k2;
        return hgcn_forward(t, features, layers, nbrs, act, attention, locus);
    }

    Var build(Tape& t, std::vector<Var>* leaves_out = nullptr) const {
        std::vector<Var> leaves;
        Var k2;
        auto emb = forward(t, leaves, k2);
        Var r = leaves[9];
        Var tt = add_scalar(softplus(leaves[10]), 1e-4);
        Var loss = lp_loss(emb, pos, neg, r, tt, k2);
        if (leaves_out) *leaves_out = leaves;
        return loss;
    }

    // Smallest arcosh argument excess over all embedding pairs; finite
    // differences are only valid away from the branch point, so instances
    // below a floor are rejected and resampled.
    double min_pair_excess() const {
        Tape t;
        std::vector<Var> leaves;
        Var k2;
        auto emb = forward(t, leaves, k2);
        double k = k2.value().data[0];
        double best = 1e300;
        for (std::size_t i = 0; i < emb.size(); ++i)
            for (std::size_t j = i + 1; j < emb.size(); ++j) {
                const auto& a = emb[i].value().data;
                const auto& b = emb[j].value().data;
                double inner = -a[0] * b[0];
                for (std::size_t c = 1; c < a.size(); ++c) inner += a[c] * b[c];
                best = std::min(best, -inner / k - 1.0);
            }
        return best;
    }

    static TinyHgcn make_regular(Rng& rng, bool attention, AggLocus locus) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            TinyHgcn m = make(rng, attention, locus);
            if (m.min_pair_excess() > 1e-3) return m;
        }
        throw std::runtime_error("could not sample a well-separated instance");
    }

    double loss_value() const {
        Tape t;
        return build(t).value().data[0];
    }
};

}  // namespace

TEST_CASE("full hgcn layer behaviour", "[layers]") {
    SECTION("identity configuration reproduces lifted features") {
        Tape t;
        Rng rng(29);
        const std::size_t n = 4, d = 3;
        Tensor features = Tensor::zeros({n, d});
        for (double& x : features.data) x = rng.normal();
        Var k = t.scalar_constant(1.0);
        HgcnLayerVars lv{t.constant(Tensor::identity(d)), t.constant(Tensor::zeros({d})),
                         t.constant(Tensor::zeros({2 * d})), k, k};
        const HgcnLayerVars layers[1] = {lv};
        NeighborLists nbrs = build_neighbors(n, {});  // self-loops only
        auto emb = hgcn_forward(t, features, layers, nbrs, Activation::Identity, true,
                                AggLocus::Center);
        for (std::size_t i = 0; i < n; ++i) {
            Tensor row = Tensor::zeros({d});
            for (std::size_t c = 0; c < d; ++c) row.data[c] = features.at(i, c);
            Var lifted = feature_to_hyperbolic(t, row, k);
            check_close(emb[i].value().data, lifted.value().data, 1e-9);
        }
    }

    SECTION("all outputs stay on the manifold") {
        Rng rng(31);
        TinyHgcn m = TinyHgcn::make(rng, true, AggLocus::Center);
        Tape t;
        std::vector<Var> leaves;
        Var k2;
        auto emb = m.forward(t, leaves, k2);
        Curvature K_out(k2.value().data[0]);
        for (const Var& e : emb) CHECK(on_manifold(as_hpoint(e), K_out, 1e-7));
    }

    SECTION("attention off equals zeroed attention parameters") {
        Rng rng(37);
        TinyHgcn m = TinyHgcn::make(rng, true, AggLocus::Center);
        TinyHgcn uniform = m;
        for (double& x : uniform.p[2].data) x = 0.0;
        for (double& x : uniform.p[5].data) x = 0.0;
        TinyHgcn off = uniform;
        off.attention = false;
        CHECK(uniform.loss_value() == Catch::Approx(off.loss_value()).epsilon(1e-14));
    }
}

TEST_CASE("hgcn gradients match finite differences", "[layers][grad]") {
    Rng rng(41);
    for (int it = 0; it < 3; ++it) {
        TinyHgcn m =
            TinyHgcn::make_regular(rng, it != 1, it == 2 ? AggLocus::Origin : AggLocus::Center);
        Tape t;
        std::vector<Var> leaves;
        Var loss = m.build(t, &leaves);
        t.backward(loss);
        std::vector<Tensor> analytic;
        for (const Var& l : leaves) analytic.push_back(t.grad(l));
        std::vector<Tensor*> ptrs;
        for (auto& x : m.p) ptrs.push_back(&x);
        auto fd = oracles::finite_difference_grads(ptrs, [&]() { return m.loss_value(); });
        CHECK(oracles::grad_rel_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("gcn baseline", "[layers]") {
    SECTION("identity weights on a lone node reproduce relu of features") {
        Tape t;
        Tensor features = Tensor::matrix(1, 3, {0.5, -0.2, 1.5});
        GcnLayerVars lv{t.constant(Tensor::identity(3)), t.constant(Tensor::zeros({3}))};
        const GcnLayerVars layers[1] = {lv};
        auto out = gcn_forward(t, features, layers, build_neighbors(1, {}), Activation::Relu);
        REQUIRE(out.size() == 1);
        check_close(out[0].value().data, {0.5, 0.0, 1.5}, 1e-15);
    }

    SECTION("row count preserved") {
        Tape t;
        Rng rng(43);
        Tensor features = Tensor::zeros({6, 3});
        for (double& x : features.data) x = rng.normal();
        GcnLayerVars lv{t.constant(Tensor::zeros({2, 3})), t.constant(Tensor::zeros({2}))};
        const GcnLayerVars layers[1] = {lv};
        auto out =
            gcn_forward(t, features, layers, build_neighbors(6, {{0, 1}, {2, 3}}), Activation::Relu);
        CHECK(out.size() == 6);
        CHECK(out[0].value().size() == 2);
    }

    SECTION("gradients match finite differences") {
        Rng rng(47);
        Tensor features = Tensor::zeros({5, 3});
        for (double& x : features.data) x = rng.normal();
        NeighborLists nbrs = build_neighbors(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
        EdgeList pos{{0, 1}, {1, 2}}, neg{{0, 3}, {2, 4}};
        std::vector<Tensor> p;
        auto rand_tensor = [&](std::vector<std::size_t> shape, double s) {
            Tensor t = Tensor::zeros(std::move(shape));
            for (double& x : t.data) x = s * rng.normal();
            return t;
        };
        p.push_back(rand_tensor({3, 3}, 0.6));  // W0
        p.push_back(rand_tensor({3}, 0.3));     // b0
        p.push_back(rand_tensor({2, 3}, 0.6));  // W1
        p.push_back(rand_tensor({2}, 0.3));     // b1
        p.push_back(Tensor::scalar(1.2));       // r
        p.push_back(Tensor::scalar(0.1));       // t raw

        auto build = [&](Tape& t, std::vector<Var>* lv) {
            std::vector<Var> leaves;
            for (const auto& x : p) leaves.push_back(t.leaf(x, true));
            GcnLayerVars l0{leaves[0], leaves[1]};
            GcnLayerVars l1{leaves[2], leaves[3]};
            const GcnLayerVars layers[2] = {l0, l1};
            auto emb = gcn_forward(t, features, layers, nbrs, Activation::Tanh);
            Var tt = add_scalar(softplus(leaves[5]), 1e-4);
            Var loss = lp_loss_euclidean(emb, pos, neg, leaves[4], tt);
            if (lv) *lv = leaves;
            return loss;
        };
        Tape t;
        std::vector<Var> leaves;
        Var loss = build(t, &leaves);
        t.backward(loss);
        std::vector<Tensor> analytic;
        for (const Var& l : leaves) analytic.push_back(t.grad(l));
        std::vector<Tensor*> ptrs;
        for (auto& x : p) ptrs.push_back(&x);
        auto fd = oracles::finite_difference_grads(ptrs, [&]() {
            Tape tt2;
            return build(tt2, nullptr).value().data[0];
        });
        CHECK(oracles::grad_rel_error(analytic, fd) < 1e-4);
    }
}
