#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "awrkit/error.hpp"
#include "awrkit/nn/adam.hpp"
#include "awrkit/nn/model.hpp"
#include "awrkit/nn/ops.hpp"
#include "awrkit/random.hpp"

using namespace awrkit;
using namespace awrkit::nn;

namespace {

Tensor random_tensor(CounterRng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(-1, 1);
    return t;
}

double scalar(Var v) { return v.value()[0]; }

} // namespace

TEST_CASE("conv2d examples") {
    SUBCASE("1x1 unit kernel is the identity") {
        Tape tape;
        CounterRng rng(1);
        const Tensor x = random_tensor(rng, {2, 1, 5, 4});
        const Var y = conv2d(tape.constant(x), tape.constant(Tensor({1, 1, 1, 1}, 1.0)), tape.constant(Tensor({1})));
        CHECK(y.value().storage() == x.storage());
    }
    SUBCASE("2x2 ones kernel sums the window") {
        Tape tape;
        const Var y = conv2d(tape.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})), tape.constant(Tensor({1, 1, 2, 2}, 1.0)),
                             tape.constant(Tensor({1})));
        CHECK(y.shape() == Shape{1, 1, 1, 1});
        CHECK(y.value()[0] == 10.0);
    }
    SUBCASE("output extent") {
        Tape tape;
        const Var y = conv2d(tape.constant(Tensor({1, 2, 7, 7})), tape.constant(Tensor({3, 2, 3, 3})),
                             tape.constant(Tensor({3})), 2, 1);
        CHECK(y.shape() == Shape{1, 3, 4, 4});
    }
    SUBCASE("shape errors") {
        Tape tape;
        CHECK_THROWS_AS(conv2d(tape.constant(Tensor({1, 2, 5, 5})), tape.constant(Tensor({1, 3, 3, 3})),
                               tape.constant(Tensor({1}))),
                        ShapeError);
        CHECK_THROWS_AS(conv2d(tape.constant(Tensor({1, 1, 2, 2})), tape.constant(Tensor({1, 1, 3, 3})),
                               tape.constant(Tensor({1}))),
                        ShapeError);
    }
    SUBCASE("gradient against central differences") {
        CounterRng rng(5);
        const Tensor x0 = random_tensor(rng, {1, 3, 5, 5});
        const Tensor w0 = random_tensor(rng, {2, 3, 3, 3});
        const Tensor b0 = random_tensor(rng, {2});
        const Tensor proj = random_tensor(rng, {1, 2, 5, 5});
        auto f = [&](const Tensor& x) {
            Tape t(false);
            return scalar(sum(mul(conv2d(t.constant(x), t.constant(w0), t.constant(b0), 1, 1), t.constant(proj))));
        };
        Tape tape;
        const Var x = tape.leaf(x0);
        tape.backward(sum(mul(conv2d(x, tape.constant(w0), tape.constant(b0), 1, 1), tape.constant(proj))));
        double diff = 0, norm = 0;
        for (std::size_t i = 0; i < x0.size(); ++i) {
            Tensor xp = x0, xm = x0;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            const double num = (f(xp) - f(xm)) / 2e-6;
            diff += std::pow(num - x.grad()[i], 2);
            norm += num * num;
        }
        CHECK(std::sqrt(diff / norm) < 1e-4);
    }
}

TEST_CASE("upsample2x") {
    Tape tape;
    const Var x = tape.leaf(Tensor({1, 1, 1, 1}, 1.0));
    const Var y = upsample2x(x);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.value().storage() == std::vector<double>(4, 1.0));

    CounterRng rng(2);
    const Var a = tape.leaf(random_tensor(rng, {2, 3, 4, 5}));
    const Var b = upsample2x(a);
    CHECK(b.shape() == Shape{2, 3, 8, 10});
    const Tensor cot = random_tensor(rng, {2, 3, 8, 10});
    tape.backward(sum(mul(b, tape.constant(cot))));
    for (int n = 0; n < 2 * 3; ++n)
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 5; ++c) {
                double s = 0;
                for (int dr = 0; dr < 2; ++dr)
                    for (int dc = 0; dc < 2; ++dc) s += cot[static_cast<std::size_t>((n * 8 + 2 * r + dr) * 10 + 2 * c + dc)];
                CHECK(a.grad()[static_cast<std::size_t>((n * 4 + r) * 5 + c)] == doctest::Approx(s).epsilon(1e-14));
            }
}

TEST_CASE("losses") {
    Tape tape;
    SUBCASE("zero at target, non-negative") {
        CounterRng rng(9);
        for (int trial = 0; trial < 50; ++trial) {
            const Tensor p = random_tensor(rng, {7});
            const Tensor t = random_tensor(rng, {7});
            CHECK(scalar(smooth_l1(tape.constant(p), p)) == 0.0);
            CHECK(scalar(l2_loss(tape.constant(p), p)) == 0.0);
            CHECK(scalar(smooth_l1(tape.constant(p), t, rng.uniform(0.1, 2))) >= 0.0);
            CHECK(scalar(l2_loss(tape.constant(p), t)) >= 0.0);
        }
    }
    SUBCASE("smooth_l1 examples") {
        CHECK(scalar(smooth_l1(tape.constant(Tensor({1}, 3.0)), Tensor({1}, 0.0))) == 2.5);
        CHECK(scalar(smooth_l1(tape.constant(Tensor({1}, 0.7)), Tensor({1}, 0.0), 0.7)) == doctest::Approx(0.35));
    }
    SUBCASE("smooth_l1 is C1 at |x| = delta") {
        for (double delta : {0.25, 1.0, 3.0}) {
            const double quad_value = 0.5 * delta * delta / delta;
            const double lin_value = delta - 0.5 * delta;
            CHECK(quad_value == lin_value);
            for (double sign : {-1.0, 1.0}) {
                Tape t;
                const Var p = t.leaf(Tensor({1}, sign * delta));
                const Var l = smooth_l1(p, Tensor({1}, 0.0), delta);
                t.backward(l);
                CHECK(scalar(l) == doctest::Approx(0.5 * delta).epsilon(1e-15));
                // quadratic branch slope x / delta and linear branch slope sign(x) coincide
                CHECK(p.grad()[0] == sign);
                Tape below;
                const Var q = below.leaf(Tensor({1}, sign * delta * (1 - 1e-12)));
                below.backward(smooth_l1(q, Tensor({1}, 0.0), delta));
                CHECK(std::abs(q.grad()[0] - sign) < 1e-11);
            }
        }
    }
    SUBCASE("l2 examples and gradient") {
        CHECK(scalar(l2_loss(tape.constant(Tensor({1}, 0.0)), Tensor({1}, 2.0))) == 4.0);
        const Var p = tape.leaf(Tensor({4}, {1, 2, 3, 4}));
        const Tensor t({4}, {0, 0, 5, 4});
        tape.backward(l2_loss(p, t));
        const std::vector<double> expect{0.5, 1.0, -1.0, 0.0};
        for (std::size_t i = 0; i < 4; ++i) CHECK(p.grad()[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    }
    SUBCASE("weighted mean") {
        const Tensor w({3}, {1, 0, 3});
        const double l = scalar(l2_loss(tape.constant(Tensor({3}, {1, 100, 2})), Tensor({3}), &w));
        CHECK(l == doctest::Approx((1.0 + 3.0 * 4.0) / 4.0));
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(l2_loss(tape.constant(Tensor({3})), Tensor({4})), ShapeError);
        CHECK_THROWS_AS(smooth_l1(tape.constant(Tensor({3})), Tensor({2})), ShapeError);
    }
}

TEST_CASE("tape accumulates over shared subexpressions") {
    // f(x) = sum(x * x + x * 3 + x); df/dx = 2x + 4
    Tape tape;
    CounterRng rng(4);
    const Tensor x0 = random_tensor(rng, {6});
    const Var x = tape.leaf(x0);
    const Var sq = mul(x, x);
    tape.backward(sum(add(add(sq, scale(x, 3.0)), x)));
    for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x0[i] + 4).epsilon(1e-14));
}

TEST_CASE("checked tape trips on non-finite values") {
    Tape tape;
    const Var x = tape.leaf(Tensor({2}, {1e200, 1.0}));
    CHECK_THROWS_AS(mul(x, x), NonFiniteError);
    Tape loose(false);
    const Var y = loose.leaf(Tensor({2}, {1e200, 1.0}));
    CHECK_NOTHROW(mul(y, y));
}

TEST_CASE("adam_step examples") {
    AdamConfig cfg;
    SUBCASE("zero gradient leaves the parameters") {
        cfg.weight_decay = 0.0;
        std::vector<Tensor> p{Tensor({3}, {0.5, -1, 2})};
        const std::vector<Tensor> g{Tensor({3})};
        AdamState s;
        adam_step(p, g, s, cfg);
        CHECK(p[0].storage() == std::vector<double>{0.5, -1, 2});
        CHECK(s.step == 1);
    }
    SUBCASE("first step with unit gradient") {
        cfg.weight_decay = 0.0;
        std::vector<Tensor> p{Tensor({1})};
        AdamState s;
        adam_step(p, {Tensor({1}, 1.0)}, s, cfg);
        const double m_hat = (1 - 0.9) / (1 - 0.9);
        const double v_hat = (1 - 0.999) / (1 - 0.999);
        CHECK(p[0][0] == doctest::Approx(-0.001 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-14));
    }
    SUBCASE("weight decay enters the gradient") {
        std::vector<Tensor> a{Tensor({1}, 2.0)};
        std::vector<Tensor> b{Tensor({1}, 2.0)};
        AdamState sa, sb;
        adam_step(a, {Tensor({1}, 0.0)}, sa, cfg);
        AdamConfig none = cfg;
        none.weight_decay = 0.0;
        adam_step(b, {Tensor({1}, cfg.weight_decay * 2.0)}, sb, none);
        CHECK(a[0][0] == b[0][0]);
    }
    SUBCASE("equal gradients give equal updates") {
        std::vector<Tensor> p{Tensor({2}, {0.3, 0.3}), Tensor({1}, 0.3)};
        AdamState s;
        for (int step = 0; step < 5; ++step) adam_step(p, {Tensor({2}, {0.7, 0.7}), Tensor({1}, 0.7)}, s, cfg);
        CHECK(p[0][0] == p[0][1]);
        CHECK(p[0][0] == p[1][0]);
    }
}

TEST_CASE("build_model layouts and determinism") {
    auto heads = [](const ModelConfig& cfg) {
        const Model m = build_model(cfg, 7);
        Tape tape(false);
        std::vector<Var> params;
        const auto out = m.forward(tape, Tensor({2, 1, cfg.input_size, cfg.input_size}), params, false);
        std::vector<Shape> shapes;
        for (const Var& h : out.heads) shapes.push_back(h.shape());
        return shapes;
    };
    ModelConfig o3;
    o3.rep = RepType{RepTag::O3};
    o3.joints = 14;
    CHECK(heads(o3) == std::vector<Shape>{{2, 42, 32, 32}, {2, 14, 32, 32}});

    ModelConfig h2;
    h2.input_size = 32;
    h2.dense_size = 16;
    h2.rep = RepType{RepTag::H2};
    CHECK(heads(h2) == std::vector<Shape>{{2, 14, 16, 16}, {2, 14, 16, 16}});

    ModelConfig p;
    p.rep = RepType{RepTag::P};
    p.dense_size = 64;
    const auto ps = heads(p);
    CHECK(ps == std::vector<Shape>{{2, 42, 64, 64}, {2, 14, 64, 64}});
    const Model pm = build_model(p, 1);
    for (const auto& par : pm.parameters())
        if (par.name.rfind("head.weight", 0) == 0)
            for (double v : par.value.values()) CHECK(v == 0.0);

    const Model a = build_model(o3, 42);
    const Model b = build_model(o3, 42);
    const Model c = build_model(o3, 43);
    REQUIRE(a.parameters().size() == b.parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters()[i].value.storage() == b.parameters()[i].value.storage());
        differs |= a.parameters()[i].value.storage() != c.parameters()[i].value.storage();
    }
    CHECK(differs);

    ModelConfig bad = o3;
    bad.dense_size = 24;
    CHECK_THROWS_AS(build_model(bad, 0), UsageError);
    bad.dense_size = 4; // below the bottleneck of 64 / 4
    CHECK_THROWS_AS(build_model(bad, 0), UsageError);
}
