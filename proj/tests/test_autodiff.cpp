#include <doctest.h>

#include <cmath>
#include <vector>

#include "bikd/errors.hpp"
#include "bikd/grad_check.hpp"
#include "bikd/rng.hpp"
#include "bikd/tape.hpp"
#include "oracles.hpp"

using namespace bikd;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = rng.uniform(lo, hi);
    return Tensor::constant(std::move(shape), std::move(d));
}

} // namespace

TEST_CASE("matmul forward: identity and hand arithmetic") {
    Tape t;
    auto i2 = Tensor::constant({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::constant({2, 2}, {3, 4, 5, 6});
    auto r = matmul(t, i2, m);
    CHECK(r.data == std::vector<double>{3, 4, 5, 6});

    auto a = Tensor::constant({1, 2}, {1, 2});
    auto b = Tensor::constant({2, 1}, {3, 4});
    CHECK(matmul(t, a, b).item() == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul rejects shape mismatch naming both shapes") {
    Tape t;
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 3});
    CHECK_THROWS_WITH_AS(matmul(t, a, b),
                         "matmul: inner dimensions disagree: [2x3] vs [2x3]", DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 2});

    // d sum(a.b) / da against the central-difference oracle
    auto value = [&](const std::vector<double>& av) {
        double out = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 4; ++k) acc += av[i * 4 + k] * b.data[k * 2 + j];
                out += acc;
            }
        return out;
    };
    auto fd = oracle::central_fd(value, a.data, 1e-6);

    Tape t;
    auto la = t.leaf(a);
    auto lb = t.leaf(b);
    auto loss = sum(t, matmul(t, la, lb));
    auto grads = t.backward(loss);
    const auto& ga = grads.at(la.node);
    for (std::size_t i = 0; i < ga.size(); ++i) {
        CHECK(std::fabs(ga[i] - fd[i]) / std::max({std::fabs(ga[i]), std::fabs(fd[i]), 1e-8}) < 1e-5);
    }
}

TEST_CASE("elementwise basics") {
    Tape t;
    auto r = add(t, Tensor::constant({2}, {1, 2}), Tensor::constant({2}, {3, 4}));
    CHECK(r.data == std::vector<double>{4, 6});

    auto rl = relu(t, Tensor::constant({3}, {-1, 0, 2}));
    CHECK(rl.data == std::vector<double>{0, 0, 2});

    for (double x : {-10.0, -3.5, 0.0, 1.25, 10.0}) {
        auto back = log(t, exp(t, Tensor::scalar(x)));
        CHECK(back.item() == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("elementwise error paths") {
    Tape t;
    CHECK_THROWS_AS(log(t, Tensor::constant({2}, {1.0, 0.0})), DomainError);
    CHECK_THROWS_AS(div(t, Tensor::scalar(1.0), Tensor::scalar(0.0)), DomainError);
    CHECK_THROWS_AS(add(t, Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
    // overflow is an error, not a silent Inf
    CHECK_THROWS_AS(exp(t, Tensor::scalar(1000.0)), NumericError);
}

TEST_CASE("scalar broadcast on the b side") {
    Tape t;
    auto x = t.leaf({3}, {1, 2, 3});
    auto s = t.leaf({1}, {2});
    auto y = sum(t, mul(t, x, s));
    CHECK(y.item() == doctest::Approx(12.0));
    auto g = t.backward(y);
    CHECK(g.at(s.node)[0] == doctest::Approx(6.0)); // broadcast grad accumulates
    CHECK(g.at(x.node) == std::vector<double>{2, 2, 2});
}

TEST_CASE("softmax forward values") {
    Tape t;
    auto u = softmax(t, Tensor::constant({3}, {0, 0, 0}), 1.0);
    for (double v : u.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    // direct normalization oracle
    auto z = std::vector<double>{std::log(1.0), std::log(3.0)};
    auto expect = oracle::softmax_row(z);
    auto p = softmax(t, Tensor::constant({2}, z), 1.0);
    CHECK(p.data[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(p.data[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p.data[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax approaches uniform at large temperature") {
    Tape t;
    auto z = Tensor::constant({4}, {0.3, -0.2, 0.5, 0.0}); // range <= 1
    auto p = softmax(t, z, 1e4);
    for (double v : p.data) CHECK(std::fabs(v - 0.25) < 1e-3);
}

TEST_CASE("softmax rows sum to 1 within 1e-12, including extreme logits") {
    Rng rng(11);
    Tape t;
    for (int trial = 0; trial < 50; ++trial) {
        auto z = random_tensor(rng, {4, 5}, -300.0, 300.0);
        auto p = softmax(t, z, rng.uniform(0.25, 4.0));
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) s += p.at(i, j);
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax rejects nonpositive temperature") {
    Tape t;
    CHECK_THROWS_AS(softmax(t, Tensor::zeros({2}), 0.0), ConfigError);
    CHECK_THROWS_AS(log_softmax(t, Tensor::zeros({2}), -1.0), ConfigError);
}

TEST_CASE("log_softmax agrees with naive composition and normalizes") {
    Tape t;
    auto two = log_softmax(t, Tensor::constant({2}, {0, 0}), 1.0);
    CHECK(two.data[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(two.data[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto z = random_tensor(rng, {3, 4}, -5.0, 5.0);
        double temp = rng.uniform(0.5, 3.0);
        auto ls = log_softmax(t, z, temp);
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> row(4);
            for (std::size_t j = 0; j < 4; ++j) row[j] = z.at(i, j);
            auto naive = oracle::softmax_row(row, temp);
            double rowsum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(std::fabs(ls.at(i, j) - std::log(naive[j])) < 1e-10);
                rowsum += std::exp(ls.at(i, j));
            }
            CHECK(std::fabs(rowsum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("stop_gradient: identity forward, exactly zero backward") {
    Tape t;
    auto x = t.leaf({3}, {1.5, -2.0, 0.25});
    auto sg = stop_gradient(x);
    CHECK(sg.data == x.data);

    auto loss = sum(t, sg);
    // loss is a pure constant path; backward over a different scalar that uses x
    CHECK_FALSE(loss.on_tape());

    auto live = sum(t, add(t, x, sg));
    auto g = t.backward(live);
    CHECK(g.at(x.node) == std::vector<double>{1, 1, 1}); // only the live branch
}

TEST_CASE("d/dx sum(stop_gradient(x)) is exactly zero for every element") {
    Tape t;
    auto x = t.leaf({4}, {1, 2, 3, 4});
    auto y = add(t, sum(t, stop_gradient(x)), scale(t, sum(t, x), 0.0));
    auto g = t.backward(y);
    for (double v : g.at(x.node)) CHECK(v == 0.0); // bit-exact
}

TEST_CASE("product rule with one branch severed: d/dx sum(x*sg(x)) == x") {
    // symbolic oracle: d/dx_i (x_i * c_i) = c_i with c = sg(x) = x values
    Tape t;
    auto x = t.leaf({3}, {1.0, -2.5, 4.0});
    auto y = sum(t, mul(t, x, stop_gradient(x)));
    auto g = t.backward(y);
    CHECK(g.at(x.node) == std::vector<double>{1.0, -2.5, 4.0});
}

TEST_CASE("backward basics and accumulation") {
    Tape t;
    auto x = t.leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    auto g1 = t.backward(sum(t, x));
    CHECK(g1.at(x.node) == std::vector<double>(6, 1.0));

    Tape t2;
    auto x2 = t2.leaf({3}, {1, 2, 3});
    auto g2 = t2.backward(sum(t2, mul(t2, x2, x2)));
    CHECK(g2.at(x2.node) == std::vector<double>{2, 4, 6});
}

TEST_CASE("using a tensor twice sums both branch gradients") {
    Tape t;
    auto x = t.leaf({2}, {3.0, -1.0});
    auto y = t.leaf({2}, {0.5, 2.0});
    // f = sum(x*y) + sum(x) -> df/dx = y + 1. single-use decomposition oracle.
    auto loss = add(t, sum(t, mul(t, x, y)), sum(t, x));
    auto g = t.backward(loss);
    CHECK(g.at(x.node) == std::vector<double>{1.5, 3.0});
}

TEST_CASE("backward rejects non-scalar loss and foreign tensors") {
    Tape t;
    auto x = t.leaf({2}, {1, 2});
    CHECK_THROWS_AS(t.backward(x), ContractError);

    Tape other;
    auto y = other.leaf({2}, {1, 2});
    CHECK_THROWS_AS(add(t, x, y), ContractError);
}

TEST_CASE("backward is deterministic across repeated passes") {
    Rng rng(21);
    Tape t;
    auto x = t.leaf(random_tensor(rng, {4, 4}));
    auto w = t.leaf(random_tensor(rng, {4, 2}));
    auto loss = sum(t, softmax(t, matmul(t, relu(t, x), w), 2.0));
    auto a = t.backward(loss);
    auto b = t.backward(loss);
    CHECK(a.at(x.node) == b.at(x.node));
    CHECK(a.at(w.node) == b.at(w.node));
}

TEST_CASE("reductions and structural ops") {
    Tape t;
    auto a = t.leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(sum_rows(t, a).data == std::vector<double>{6, 15});
    CHECK(sum_cols(t, a).data == std::vector<double>{5, 7, 9});
    CHECK(take_per_row(t, a, {2, 0}).data == std::vector<double>{3, 4});
    CHECK(select_row(t, a, 1).data == std::vector<double>{4, 5, 6});
    CHECK(slice_cols(t, a, 1, 3).data == std::vector<double>{2, 3, 5, 6});

    auto bias = t.leaf({3}, {10, 20, 30});
    auto shifted = add_rows(t, a, bias);
    CHECK(shifted.data == std::vector<double>{11, 22, 33, 14, 25, 36});

    auto g = t.backward(sum(t, shifted));
    CHECK(g.at(bias.node) == std::vector<double>{2, 2, 2});

    CHECK_THROWS_AS(take_per_row(t, a, {3, 0}), DataError);
    CHECK_THROWS_AS(select_row(t, a, 2), DimensionError);
}

TEST_CASE("grad_check: trivial, random composite, and severed leaves") {
    auto sum_fn = [](Tape& t, const std::vector<Tensor>& xs) { return sum(t, xs[0]); };
    Rng rng(5);
    auto x = random_tensor(rng, {3, 3});
    auto rep = grad_check(sum_fn, x, 1e-4, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-10);
    CHECK(rep.compared == 9);

    auto composite = [](Tape& t, const std::vector<Tensor>& xs) {
        auto h = relu(t, matmul(t, xs[0], xs[1]));
        return mean(t, mul(t, h, h));
    };
    auto a = random_tensor(rng, {4, 3});
    auto b = random_tensor(rng, {3, 2});
    CHECK(grad_check(composite, {a, b}, 1e-6, 1e-4).pass);

    // fully severed second input: skipped rather than compared
    auto severed = [](Tape& t, const std::vector<Tensor>& xs) {
        return sum(t, mul(t, xs[0], stop_gradient(xs[1])));
    };
    auto rep2 = grad_check(severed, {a, a});
    CHECK(rep2.pass);
    CHECK(rep2.compared == a.size());
    CHECK(rep2.skipped == a.size());
}

TEST_CASE("per-op gradients match finite differences on 100 random inputs per op") {
    Rng rng(99);
    const double tol = 1e-4;
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto a = random_tensor(rng, {2, 3}, 0.2, 2.0); // positive domain works for all ops
        auto b = random_tensor(rng, {2, 3}, 0.2, 2.0);
        std::vector<std::pair<const char*, ScalarFn>> ops = {
            {"add", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, add(t, x[0], x[1])); }},
            {"sub", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, sub(t, x[0], x[1])); }},
            {"mul", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, mul(t, x[0], x[1])); }},
            {"div", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, div(t, x[0], x[1])); }},
            {"relu", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, relu(t, x[0])); }},
            {"exp", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, exp(t, x[0])); }},
            {"log", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, log(t, x[0])); }},
            {"sqrt", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, sqrt(t, x[0])); }},
            {"sigmoid", [](Tape& t, const std::vector<Tensor>& x) { return sum(t, sigmoid(t, x[0])); }},
            {"softmax", [](Tape& t, const std::vector<Tensor>& x) {
                 return sum(t, mul(t, softmax(t, x[0], 1.5), stop_gradient(x[1])));
             }},
            {"log_softmax", [](Tape& t, const std::vector<Tensor>& x) {
                 return sum(t, mul(t, log_softmax(t, x[0], 0.8), stop_gradient(x[1])));
             }},
        };
        for (auto& [name, fn] : ops) {
            auto rep = grad_check(fn, {a, b}, 1e-6, tol);
            INFO(name);
            CHECK(rep.pass);
            ++checked;
        }
    }
    CHECK(checked >= 100 * 11);
}
