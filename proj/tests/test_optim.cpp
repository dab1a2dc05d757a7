#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "lorentz/optim.hpp"
#include "oracles.hpp"

using namespace lorentz;

TEST_CASE("adam updates", "[optim]") {
    SECTION("zero gradient leaves parameters unchanged") {
        ParamSet ps;
        ps.add("w", Tensor::vector({1.0, -2.0, 3.0}));
        Adam adam(AdamConfig{}, ps);
        adam.step(ps, {Tensor::zeros({3})});
        CHECK(ps[0].value.data == std::vector<double>{1.0, -2.0, 3.0});
    }

    SECTION("first step matches the hand-computed update") {
        // m=(1-b1)g, v=(1-b2)g^2, mhat=g, vhat=g^2 -> step = lr*g/(|g|+eps)
        ParamSet ps;
        ps.add("w", Tensor::scalar(2.0));
        AdamConfig cfg;
        cfg.lr = 0.1;
        Adam adam(cfg, ps);
        adam.step(ps, {Tensor::scalar(0.3)});
        double expected = 2.0 - 0.1 * 0.3 / (0.3 + 1e-8);
        CHECK(ps[0].value.data[0] == Catch::Approx(expected).epsilon(1e-15));
        CHECK(ps[0].value.data[0] == Catch::Approx(2.0 - 0.0999999966666667778).epsilon(1e-12));
    }

    SECTION("identical runs are bit-identical") {
        auto run = [] {
            Rng rng(5);
            ParamSet ps;
            ps.add("w", Tensor::vector({0.5, -0.5}));
            AdamConfig cfg;
            cfg.lr = 0.03;
            cfg.weight_decay = 0.01;
            Adam adam(cfg, ps);
            for (int e = 0; e < 50; ++e) {
                Tensor g = Tensor::vector({rng.normal(), rng.normal()});
                adam.step(ps, {g});
            }
            return ps[0].value.data;
        };
        auto a = run(), b = run();
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    }

    SECTION("lr = 0 leaves parameters bit-identical") {
        ParamSet ps;
        ps.add("w", Tensor::vector({0.123456789, -9.87654321}));
        auto before = ps[0].value.data;
        AdamConfig cfg;
        cfg.lr = 0.0;
        Adam adam(cfg, ps);
        adam.step(ps, {Tensor::vector({5.0, -3.0})});
        CHECK(std::memcmp(before.data(), ps[0].value.data.data(),
                          before.size() * sizeof(double)) == 0);
    }

    SECTION("non-finite gradients abort with the parameter name") {
        ParamSet ps;
        ps.add("layer0.W", Tensor::scalar(1.0));
        Adam adam(AdamConfig{}, ps);
        Tensor bad = Tensor::scalar(std::nan(""));
        CHECK_THROWS_WITH(adam.step(ps, {bad}), Catch::Matchers::ContainsSubstring("layer0.W"));
    }

    SECTION("non-trainable parameters receive zero updates") {
        ParamSet ps;
        ps.add("k_raw", Tensor::scalar(0.54), /*trainable=*/false);
        Adam adam(AdamConfig{}, ps);
        adam.step(ps, {Tensor::scalar(123.0)});
        CHECK(ps[0].value.data[0] == 0.54);
    }
}

TEST_CASE("curvature parameterization", "[optim]") {
    SECTION("strictly positive for any raw value") {
        for (double raw : {-50.0, -5.0, 0.0, 3.0, 40.0})
            CHECK(curvature_from_raw(raw) > kCurvatureFloor * 0.999);
    }

    SECTION("raw/curvature round trip") {
        for (double k : {0.01, 0.5, 1.0, 2.0, 7.5})
            CHECK(curvature_from_raw(raw_from_curvature(k)) == Catch::Approx(k).epsilon(1e-12));
        CHECK_THROWS_AS(raw_from_curvature(0.5 * kCurvatureFloor), std::invalid_argument);
    }

    SECTION("tape-side value agrees with the plain value and stays positive under training") {
        Rng rng(7);
        ParamSet ps;
        std::size_t idx = ps.add("k_raw", Tensor::scalar(raw_from_curvature(1.0)));
        AdamConfig cfg;
        cfg.lr = 0.5;  // aggressive on purpose
        Adam adam(cfg, ps);
        for (int e = 0; e < 200; ++e) {
            Tape t;
            Var raw = t.leaf(ps[idx].value, true);
            Var k = curvature_var(raw);
            CHECK(k.value().data[0] ==
                  Catch::Approx(curvature_from_raw(ps[idx].value.data[0])).epsilon(1e-14));
            CHECK(k.value().data[0] > 0.0);
            // push the raw value hard in a random direction
            adam.step(ps, {Tensor::scalar(rng.normal())});
        }
    }
}

TEST_CASE("dropconnect masks", "[optim]") {
    SECTION("rate 0 gives all ones") {
        Rng rng(11);
        Tensor m = dropconnect_mask({4, 5}, 0.0, rng);
        for (double x : m.data) CHECK(x == 1.0);
    }

    SECTION("ones fraction matches the keep rate") {
        Rng rng(13);
        Tensor m = dropconnect_mask({100000}, 0.5, rng);
        double ones = 0;
        for (double x : m.data) ones += x;
        CHECK(ones / 1e5 == Catch::Approx(0.5).margin(0.01));
    }

    SECTION("same seed, same mask") {
        Rng a(17), b(17);
        Tensor ma = dropconnect_mask({64}, 0.3, a);
        Tensor mb = dropconnect_mask({64}, 0.3, b);
        CHECK(ma.data == mb.data);
    }

    SECTION("rate 1 rejected") {
        Rng rng(19);
        CHECK_THROWS_AS(dropconnect_mask({4}, 1.0, rng), std::invalid_argument);
    }
}

TEST_CASE("early stopping", "[optim]") {
    SECTION("strictly improving metric never stops") {
        EarlyStop es;
        for (int e = 0; e < 1000; ++e) {
            es.update(double(e), e);
            CHECK_FALSE(es.should_stop());
        }
    }

    SECTION("constant metric stops after patience epochs") {
        EarlyStop es;
        int stop_epoch = -1;
        for (int e = 0; e < 500; ++e) {
            es.update(0.5, e);
            if (es.should_stop()) {
                stop_epoch = e;
                break;
            }
        }
        CHECK(stop_epoch == 100);  // first improvement at 0, stop 100 epochs later
        CHECK(es.best_epoch == 0);
    }

    SECTION("late improvement resets the counter and is remembered") {
        EarlyStop es;
        int stop_epoch = -1;
        for (int e = 0; e < 500; ++e) {
            double metric = e == 50 ? 0.9 : 0.5;
            es.update(metric, e);
            if (es.should_stop()) {
                stop_epoch = e;
                break;
            }
        }
        CHECK(stop_epoch == 150);
        CHECK(es.best_epoch == 50);
        CHECK(es.best == 0.9);
    }
}
