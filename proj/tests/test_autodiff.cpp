#include <doctest.h>

#include <cmath>

#include "fido/autodiff.hpp"
#include "fido/finite_diff.hpp"
#include "fido/rng.hpp"
#include "fido/tensor.hpp"

using namespace fido;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (long long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero, for ops with a kink there (relu, abs).
Tensor random_tensor_off_zero(Rng& rng, Shape shape, double margin = 0.05) {
    Tensor t(std::move(shape));
    for (long long i = 0; i < t.numel(); ++i) {
        double v = rng.uniform(margin, 1.0);
        t[i] = rng.uniform() < 0.5 ? -v : v;
    }
    return t;
}

// Well-separated values so pooling argmaxes cannot flip under the FD step.
Tensor random_tensor_separated(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (long long i = 0; i < t.numel(); ++i)
        t[i] = 0.01 * rng.uniform_int(1000) + rng.uniform() * 1e-4;
    return t;
}

}  // namespace

TEST_CASE("tensor invariants") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), NumericError);
    CHECK_THROWS_AS(Tensor({1}, {INFINITY}), NumericError);
}

TEST_CASE("relu forward matches definition") {
    ag::Graph g;
    ag::Node* y = g.relu(g.leaf(Tensor({3}, {-1.0, 0.0, 2.0})));
    CHECK(y->value[0] == 0.0);
    CHECK(y->value[1] == 0.0);
    CHECK(y->value[2] == 2.0);
}

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
    Rng rng(3);
    Tensor x = random_tensor(rng, {2, 4, 5}, 0.0, 1.0);
    Tensor k({1, 2, 1, 1}, {1.0, 0.0});  // picks channel 0
    ag::Graph g;
    ag::Node* y = g.conv2d(g.leaf(x), g.leaf(k), nullptr);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) CHECK(y->value.at(0, i, j) == x.at(0, i, j));

    // Single-channel identity leaves the whole image unchanged.
    Tensor x1 = random_tensor(rng, {1, 6, 6});
    ag::Graph g2;
    ag::Node* y2 = g2.conv2d(g2.leaf(x1), g2.leaf(Tensor({1, 1, 1, 1}, {1.0})), nullptr);
    for (long long i = 0; i < x1.numel(); ++i) CHECK(y2->value[i] == x1[i]);
}

TEST_CASE("sigmoid at zero is one half") {
    ag::Graph g;
    CHECK(g.sigmoid(g.leaf(Tensor::scalar(0.0)))->value[0] == 0.5);
}

TEST_CASE("backward of sum is all ones") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {3, 4});
    ag::Graph g;
    ag::Node* in = g.leaf(x);
    g.backward(g.sum(in));
    for (long long i = 0; i < x.numel(); ++i) CHECK(in->grad[i] == 1.0);
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
    ag::Graph g;
    ag::Node* w = g.leaf(Tensor::scalar(0.0));
    g.backward(g.sigmoid(w));
    CHECK(w->grad[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar root") {
    ag::Graph g;
    ag::Node* x = g.leaf(Tensor({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(g.backward(g.relu(x)), ShapeError);
}

TEST_CASE("backward is idempotent across calls") {
    Rng rng(9);
    Tensor x = random_tensor(rng, {2, 3});
    ag::Graph g;
    ag::Node* in = g.leaf(x);
    ag::Node* root = g.mean(g.square(in));
    g.backward(root);
    Tensor first = in->grad;
    g.backward(root);
    for (long long i = 0; i < first.numel(); ++i) CHECK(in->grad[i] == first[i]);
}

TEST_CASE("shape errors name the op") {
    ag::Graph g;
    ag::Node* a = g.leaf(Tensor({2}, {1.0, 2.0}));
    ag::Node* b = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    try {
        g.add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
        CHECK(std::string(e.what()).find("(2)") != std::string::npos);
    }
}

TEST_CASE("non-finite outputs raise a numeric error") {
    ag::Graph g;
    ag::Node* x = g.leaf(Tensor({1}, {-1.0}));
    CHECK_THROWS_AS(g.log(x), NumericError);
}

TEST_CASE("max_pool breaks ties toward the first element") {
    Tensor x({1, 2, 2}, {0.7, 0.7, 0.7, 0.7});
    ag::Graph g;
    ag::Node* in = g.leaf(x);
    g.backward(g.sum(g.max_pool(in, 2)));
    CHECK(in->grad[0] == 1.0);  // row-major first element takes the gradient
    CHECK(in->grad[1] == 0.0);
    CHECK(in->grad[2] == 0.0);
    CHECK(in->grad[3] == 0.0);
}

TEST_CASE("bilinear upsample of a constant map is constant") {
    ag::Graph g;
    ag::Node* y = g.upsample_bilinear(g.leaf(Tensor::full({3, 5}, 0.37)), 17, 11);
    for (long long i = 0; i < y->value.numel(); ++i)
        CHECK(y->value[i] == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("mix endpoints are exact") {
    Rng rng(11);
    Tensor x = random_tensor(rng, {3, 4, 4}, 0.0, 1.0);
    Tensor xhat = random_tensor(rng, {3, 4, 4}, 0.0, 1.0);

    ag::Graph g;
    ag::Node* ones = g.leaf(Tensor::full({4, 4}, 1.0));
    ag::Node* zeros = g.leaf(Tensor::full({4, 4}, 0.0));
    ag::Node* keep = g.mix(g.leaf(x), g.leaf(xhat), ones);
    ag::Node* drop = g.mix(g.leaf(x), g.leaf(xhat), zeros);
    for (long long i = 0; i < x.numel(); ++i) {
        CHECK(keep->value[i] == x[i]);
        CHECK(drop->value[i] == xhat[i]);
    }
}

TEST_CASE("softmax is positive and sums to one") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor(rng, {6}, -30.0, 30.0);
        ag::Graph g;
        ag::Node* y = g.softmax(g.leaf(x));
        double total = 0;
        for (long long i = 0; i < y->value.numel(); ++i) {
            CHECK(y->value[i] > 0.0);
            total += y->value[i];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

// ---------------------------------------------------------------------------
// finite-difference oracle

TEST_CASE("finite_diff_check: sum of squares") {
    Tensor x({3}, {1.0, 2.0, 3.0});
    double err =
        finite_diff_check([](ag::Graph& g, ag::Node* in) { return g.sum(g.square(in)); }, x, 1e-5);
    CHECK(err <= 1e-6);
}

TEST_CASE("finite_diff_check: constant function has zero error") {
    Tensor x({4}, {1.0, -2.0, 0.5, 3.0});
    double err = finite_diff_check(
        [](ag::Graph& g, ag::Node* in) { return g.mul(g.sum(in), g.constant(Tensor::scalar(0.0))); },
        x, 1e-5);
    CHECK(err == 0.0);
}

TEST_CASE("gradient of a small conv net matches finite differences") {
    Rng rng(17);
    Tensor x = random_tensor(rng, {1, 6, 6});
    Tensor k = random_tensor_off_zero(rng, {2, 1, 3, 3});
    double err = finite_diff_check(
        [&](ag::Graph& g, ag::Node* in) {
            return g.mean(g.relu(g.conv2d(in, g.constant(k), nullptr)));
        },
        x, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("every op's backward matches finite differences on random inputs") {
    const double step = 1e-5;
    const double tol = 1e-4;
    int checked = 0;

    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        int h = 2 + rng.uniform_int(3);
        int w = 2 + rng.uniform_int(3);

        struct Case {
            const char* name;
            ScalarFn fn;
            Tensor x;
        };
        std::vector<Case> cases;

        cases.push_back({"add",
                         [o = random_tensor(rng, {h, w})](ag::Graph& g, ag::Node* in) {
                             return g.sum(g.add(in, g.constant(o)));
                         },
                         random_tensor(rng, {h, w})});
        cases.push_back({"add_scalar",
                         [](ag::Graph& g, ag::Node* in) {
                             return g.sum(g.add(in, g.constant(Tensor::scalar(0.7))));
                         },
                         random_tensor(rng, {h, w})});
        cases.push_back({"mul",
                         [o = random_tensor_off_zero(rng, {h, w})](ag::Graph& g, ag::Node* in) {
                             return g.sum(g.mul(in, g.constant(o)));
                         },
                         random_tensor(rng, {h, w})});
        cases.push_back({"mul_scalar_side",
                         [o = random_tensor(rng, {h, w})](ag::Graph& g, ag::Node* in) {
                             return g.sum(g.mul(g.constant(o), in));
                         },
                         Tensor::scalar(rng.uniform(0.2, 1.5))});
        cases.push_back({"matmul",
                         [b = random_tensor(rng, {w, 3})](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.matmul(in, g.constant(b)));
                         },
                         random_tensor(rng, {h, w})});
        cases.push_back({"conv2d_x",
                         [k = random_tensor(rng, {2, 2, 2, 2})](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.conv2d(in, g.constant(k), nullptr));
                         },
                         random_tensor(rng, {2, 4, 5})});
        cases.push_back({"conv2d_k",
                         [img = random_tensor(rng, {2, 4, 5})](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.conv2d(g.constant(img), in, nullptr));
                         },
                         random_tensor(rng, {2, 2, 2, 2})});
        cases.push_back({"conv2d_bias",
                         [img = random_tensor(rng, {2, 4, 5}),
                          k = random_tensor(rng, {2, 2, 2, 2})](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.conv2d(g.constant(img), g.constant(k), in));
                         },
                         random_tensor(rng, {2})});
        cases.push_back({"conv2d_stride2",
                         [k = random_tensor(rng, {1, 2, 2, 2})](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.conv2d(in, g.constant(k), nullptr, 2));
                         },
                         random_tensor(rng, {2, 5, 5})});
        cases.push_back({"relu", [](ag::Graph& g, ag::Node* in) { return g.sum(g.relu(in)); },
                         random_tensor_off_zero(rng, {h, w})});
        cases.push_back({"sigmoid", [](ag::Graph& g, ag::Node* in) { return g.sum(g.sigmoid(in)); },
                         random_tensor(rng, {h, w}, -3.0, 3.0)});
        cases.push_back({"log", [](ag::Graph& g, ag::Node* in) { return g.sum(g.log(in)); },
                         random_tensor(rng, {h, w}, 0.2, 2.0)});
        cases.push_back({"exp", [](ag::Graph& g, ag::Node* in) { return g.sum(g.exp(in)); },
                         random_tensor(rng, {h, w})});
        cases.push_back({"abs", [](ag::Graph& g, ag::Node* in) { return g.sum(g.abs(in)); },
                         random_tensor_off_zero(rng, {h, w})});
        cases.push_back({"square", [](ag::Graph& g, ag::Node* in) { return g.sum(g.square(in)); },
                         random_tensor(rng, {h, w})});
        cases.push_back({"clamp",
                         [](ag::Graph& g, ag::Node* in) { return g.sum(g.clamp(in, -0.5, 0.5)); },
                         random_tensor_off_zero(rng, {h, w}, 0.52)});  // clear of the boundaries
        cases.push_back({"mean", [](ag::Graph& g, ag::Node* in) { return g.mean(in); },
                         random_tensor(rng, {h, w})});
        cases.push_back({"max_pool",
                         [](ag::Graph& g, ag::Node* in) { return g.sum(g.max_pool(in, 2)); },
                         random_tensor_separated(rng, {2, 4, 4})});
        cases.push_back({"avg_pool",
                         [](ag::Graph& g, ag::Node* in) { return g.sum(g.avg_pool(in, 2)); },
                         random_tensor(rng, {2, 5, 4})});
        cases.push_back({"softmax",
                         [o = random_tensor(rng, {5})](ag::Graph& g, ag::Node* in) {
                             return g.sum(g.mul(g.softmax(in), g.constant(o)));
                         },
                         random_tensor(rng, {5}, -2.0, 2.0)});
        cases.push_back({"mix_z",
                         [img = random_tensor(rng, {2, h, w}),
                          ref = random_tensor(rng, {2, h, w})](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.mix(g.constant(img), g.constant(ref), in));
                         },
                         random_tensor(rng, {h, w}, 0.1, 0.9)});
        cases.push_back({"mix_x",
                         [ref = random_tensor(rng, {h, w}),
                          z = random_tensor(rng, {h, w}, 0.1, 0.9)](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.mix(in, g.constant(ref), g.constant(z)));
                         },
                         random_tensor(rng, {h, w})});
        cases.push_back({"upsample",
                         [](ag::Graph& g, ag::Node* in) {
                             return g.mean(g.square(g.upsample_bilinear(in, 9, 7)));
                         },
                         random_tensor(rng, {3, 3})});
        cases.push_back({"reshape",
                         [h, w](ag::Graph& g, ag::Node* in) {
                             return g.sum(g.square(g.reshape(in, {h * w, 1})));
                         },
                         random_tensor(rng, {h, w})});
        cases.push_back({"tv", [](ag::Graph& g, ag::Node* in) { return g.tv2d(in); },
                         random_tensor(rng, {4, 5})});

        for (const Case& c : cases) {
            double err = finite_diff_check(c.fn, c.x, step);
            INFO("op " << c.name << " seed " << seed);
            CHECK(err <= tol);
            ++checked;
        }
    }
    CHECK(checked >= 20 * 20);
}
