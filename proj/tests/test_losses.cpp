#include <doctest.h>

#include <cmath>
#include <vector>

#include "bikd/errors.hpp"
#include "bikd/grad_check.hpp"
#include "bikd/losses.hpp"
#include "bikd/rng.hpp"
#include "oracles.hpp"

using namespace bikd;

namespace {

Tensor random_logits(Rng& rng, std::size_t n, std::size_t c, double spread = 2.0) {
    std::vector<double> d(n * c);
    for (auto& v : d) v = rng.uniform(-spread, spread);
    return Tensor::constant({n, c}, d);
}

} // namespace

TEST_CASE("kl_distill is zero exactly for identical logits") {
    Tape t;
    Rng rng(1);
    auto z = random_logits(rng, 4, 5);
    auto v = kl_distill(t, z, z, 2.0);
    CHECK(v.item() == 0.0);
}

TEST_CASE("kl_distill matches the direct-summation oracle") {
    // teacher probs [0.75, 0.25], student [0.5, 0.5]: logits = log(p) reproduce them at T=1
    Tape t;
    auto z_teacher = Tensor::constant({1, 2}, {std::log(0.75), std::log(0.25)});
    auto z_student = Tensor::constant({1, 2}, {std::log(0.5), std::log(0.5)});
    auto v = kl_distill(t, z_student, z_teacher, 1.0);
    const double expect = oracle::kl_direct({0.75, 0.25}, {0.5, 0.5});
    CHECK(v.item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(v.item() == doctest::Approx(0.130812).epsilon(1e-5));
}

TEST_CASE("kl_distill: teacher gradient exactly zero, student matches finite differences") {
    Rng rng(2);
    auto zs = random_logits(rng, 3, 4);
    auto zt = random_logits(rng, 3, 4);

    Tape t;
    auto ls = t.leaf(zs);
    auto lt = t.leaf(zt);
    auto loss = kl_distill(t, ls, lt, 1.7);
    auto g = t.backward(loss);
    for (double v : g.at(lt.node)) CHECK(v == 0.0);
    CHECK_FALSE(g.reached(lt.node));

    auto fn = [&](Tape& tape, const std::vector<Tensor>& xs) {
        return kl_distill(tape, xs[0], xs[1], 1.7);
    };
    auto rep = grad_check(fn, {zs, zt}, 1e-6, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.skipped == zt.size());
}

TEST_CASE("kl_distill direction switch reverses the arguments") {
    Rng rng(3);
    auto zs = random_logits(rng, 2, 3);
    auto zt = random_logits(rng, 2, 3);
    Tape t;
    double fwd = kl_distill(t, zs, zt, 1.0, KlDirection::Forward).item();
    double rev = kl_distill(t, zs, zt, 1.0, KlDirection::Reverse).item();

    auto p_row = [&](const Tensor& z, std::size_t i) {
        std::vector<double> row(3);
        for (std::size_t j = 0; j < 3; ++j) row[j] = z.at(i, j);
        return oracle::softmax_row(row);
    };
    double expect_fwd = 0.0, expect_rev = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        expect_fwd += oracle::kl_direct(p_row(zt, i), p_row(zs, i)) / 2.0;
        expect_rev += oracle::kl_direct(p_row(zs, i), p_row(zt, i)) / 2.0;
    }
    CHECK(fwd == doctest::Approx(expect_fwd).epsilon(1e-10));
    CHECK(rev == doctest::Approx(expect_rev).epsilon(1e-10));
}

TEST_CASE("kl_distill nonnegative, zero iff softened distributions equal") {
    Rng rng(4);
    Tape t;
    for (int trial = 0; trial < 50; ++trial) {
        auto zs = random_logits(rng, 2, 4);
        auto zt = random_logits(rng, 2, 4);
        CHECK(kl_distill(t, zs, zt, rng.uniform(0.5, 3.0)).item() >= 0.0);

        // equal softened distributions: shift each teacher row by a constant
        auto shifted = zs;
        for (std::size_t i = 0; i < 2; ++i) {
            const double c = rng.uniform(-3, 3);
            for (std::size_t j = 0; j < 4; ++j) shifted.data[i * 4 + j] += c;
        }
        CHECK(kl_distill(t, zs, shifted, 1.3).item() < 1e-10);
    }
}

TEST_CASE("kl_distill rejects bad temperature and shapes") {
    Tape t;
    auto z = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(kl_distill(t, z, z, 0.0), ConfigError);
    CHECK_THROWS_AS(kl_distill(t, z, Tensor::zeros({2, 3}), 1.0), DimensionError);
}

TEST_CASE("cross_entropy values: symmetric pair and stable extremes") {
    Tape t;
    auto v = cross_entropy(t, Tensor::constant({1, 2}, {0, 0}), {0});
    CHECK(v.item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    auto stable = cross_entropy(t, Tensor::constant({1, 2}, {10, -10}), {0});
    CHECK(stable.item() == doctest::Approx(oracle::cross_entropy_lse({10, -10}, 0)).epsilon(1e-12));
    CHECK(stable.item() == doctest::Approx(2.061e-9).epsilon(1e-3));
}

TEST_CASE("cross_entropy is invariant to constant logit shifts") {
    Rng rng(5);
    Tape t;
    for (int trial = 0; trial < 20; ++trial) {
        auto z = random_logits(rng, 3, 4);
        std::vector<int> y = {static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4)),
                              static_cast<int>(rng.below(4))};
        const double base = cross_entropy(t, z, y).item();
        auto shifted = z;
        const double c = rng.uniform(-5, 5);
        for (auto& x : shifted.data) x += c;
        CHECK(std::fabs(cross_entropy(t, shifted, y).item() - base) < 1e-10);
    }
}

TEST_CASE("cross_entropy rejects out-of-range labels") {
    Tape t;
    CHECK_THROWS_AS(cross_entropy(t, Tensor::zeros({1, 3}), {3}), DataError);
    CHECK_THROWS_AS(cross_entropy(t, Tensor::zeros({1, 3}), {-1}), DataError);
}

TEST_CASE("mask_loss: perfect overlap, hand dice value, disjoint supports") {
    LossWeights w;
    Tape t;

    // p == q up to clipping: dice term nearly vanishes
    auto q = Tensor::constant({2, 2}, {1, 0, 1, 1});
    std::vector<double> pv;
    for (double x : q.data) pv.push_back(x == 1.0 ? 1.0 - 1e-7 : 1e-7);
    LossWeights dice_only = w;
    dice_only.lambda_ce = 0.0;
    dice_only.lambda_dice = 1.0;
    CHECK(mask_loss(t, Tensor::constant({2, 2}, pv), q, dice_only).item() <
          oracle::dice_loss(pv, q.data, w.dice_eps) + 1e-12);
    CHECK(mask_loss(t, Tensor::constant({2, 2}, pv), q, dice_only).item() < 1e-5);

    // uniform 0.5 vs all ones on 2x2 with eps=1: dice = 1 - (2*2+1)/(2+4+1) = 2/7
    auto half = Tensor::full({2, 2}, 0.5);
    auto ones = Tensor::full({2, 2}, 1.0);
    CHECK(mask_loss(t, half, ones, dice_only).item() == doctest::Approx(2.0 / 7.0).epsilon(1e-12));

    // disjoint supports, oracle value
    auto p_hot = Tensor::constant({2, 2}, {1 - 1e-7, 1e-7, 1e-7, 1e-7});
    auto q_comp = Tensor::constant({2, 2}, {0, 1, 1, 1});
    CHECK(mask_loss(t, p_hot, q_comp, dice_only).item() ==
          doctest::Approx(oracle::dice_loss(p_hot.data, q_comp.data, w.dice_eps)).epsilon(1e-12));

    // full weights agree with the composed oracle
    double expect = w.lambda_ce * oracle::bce(half.data, ones.data) +
                    w.lambda_dice * oracle::dice_loss(half.data, ones.data, w.dice_eps);
    CHECK(mask_loss(t, half, ones, w).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mask_loss domain checks") {
    Tape t;
    LossWeights w;
    CHECK_THROWS_AS(mask_loss(t, Tensor::constant({2}, {0.5, 1.0}), Tensor::constant({2}, {1, 1}), w),
                    DomainError);
    CHECK_THROWS_AS(mask_loss(t, Tensor::constant({2}, {0.5, 0.5}), Tensor::constant({2}, {1, 0.5}), w),
                    DataError);
}

TEST_CASE("mask_loss gradients pass finite differences") {
    Rng rng(6);
    LossWeights w;
    std::vector<double> pv(9), qv(9);
    for (auto& v : pv) v = rng.uniform(0.05, 0.95);
    for (auto& v : qv) v = rng.below(2) ? 1.0 : 0.0;
    auto fn = [&](Tape& t, const std::vector<Tensor>& xs) {
        return mask_loss(t, xs[0], Tensor::constant({3, 3}, qv), w);
    };
    CHECK(grad_check(fn, {Tensor::constant({3, 3}, pv)}, 1e-7, 1e-4).pass);
}

TEST_CASE("semseg_loss: branch weights and composition oracle") {
    LossWeights w;
    Tape t;
    auto mask_p = Tensor::full({2, 2}, 0.5);
    auto mask_q = Tensor::constant({2, 2}, {1, 0, 0, 1});

    // correct argmax uses lambda 2.0, incorrect uses 0.1: identical CE values
    // (symmetric two-class logits) expose the factor-20 ratio
    auto z_good = Tensor::constant({2}, {1.0, -1.0});
    auto z_bad = Tensor::constant({2}, {-1.0, 1.0});
    double base = mask_loss(t, mask_p, mask_q, w).item();
    double good = semseg_loss(t, z_good, mask_p, 0, mask_q, w).item();
    double bad = semseg_loss(t, z_bad, mask_p, 0, mask_q, w).item();
    double ce = oracle::cross_entropy_lse({1.0, -1.0}, 0); // == CE of z_bad for label 0 mirrored
    CHECK(good - base == doctest::Approx(2.0 * ce).epsilon(1e-10));
    CHECK(bad - base == doctest::Approx(0.1 * oracle::cross_entropy_lse({-1.0, 1.0}, 0)).epsilon(1e-10));
    CHECK((bad - base) / (good - base) ==
          doctest::Approx(0.1 * oracle::cross_entropy_lse({-1.0, 1.0}, 0) / (2.0 * ce)));

    // perfect mask and confident correct class
    std::vector<double> crisp;
    for (double x : mask_q.data) crisp.push_back(x == 1.0 ? 1.0 - 1e-9 : 1e-9);
    auto confident = Tensor::constant({2}, {30.0, -30.0});
    double tight = semseg_loss(t, confident, Tensor::constant({2, 2}, crisp), 0, mask_q, w).item();
    CHECK(tight < w.lambda_cls_correct * oracle::cross_entropy_lse({30.0, -30.0}, 0) + 1e-5);
}

TEST_CASE("cc: self, anti, and direct-formula oracle") {
    Tape t;
    auto p = Tensor::constant({4}, {1, 2, 3, 4});
    CHECK(cc(t, p, p).item() == doctest::Approx(1.0).epsilon(1e-12));

    auto neg = Tensor::constant({4}, {-1, -2, -3, -4});
    CHECK(cc(t, p, neg).item() == doctest::Approx(-1.0).epsilon(1e-12));

    auto q = Tensor::constant({4}, {2, 4, 5, 4});
    CHECK(cc(t, p, q).item() ==
          doctest::Approx(oracle::pearson({1, 2, 3, 4}, {2, 4, 5, 4})).epsilon(1e-12));
}

TEST_CASE("cc: constant input is a degenerate-input error") {
    Tape t;
    auto p = Tensor::constant({4}, {1, 2, 3, 4});
    CHECK_THROWS_AS(cc(t, p, Tensor::full({4}, 0.7)), DegenerateInputError);
    CHECK_THROWS_AS(cc(t, Tensor::full({4}, 0.7), p), DegenerateInputError);
}

TEST_CASE("cc is invariant to positive affine transforms") {
    Rng rng(7);
    Tape t;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> pv(12), qv(12);
        for (auto& v : pv) v = rng.uniform(-2, 2);
        for (auto& v : qv) v = rng.uniform(-2, 2);
        auto p = Tensor::constant({12}, pv);
        auto q = Tensor::constant({12}, qv);
        const double base = cc(t, p, q).item();
        const double a = rng.uniform(0.1, 5.0), b = rng.uniform(-3, 3);
        std::vector<double> tv(12);
        for (std::size_t i = 0; i < 12; ++i) tv[i] = a * pv[i] + b;
        CHECK(std::fabs(cc(t, Tensor::constant({12}, tv), q).item() - base) < 1e-10);
    }
}

TEST_CASE("cc gradients pass finite differences") {
    Rng rng(8);
    std::vector<double> pv(8), qv(8);
    for (auto& v : pv) v = rng.uniform(0.1, 1.0);
    for (auto& v : qv) v = rng.uniform(0.1, 1.0);
    auto fn = [&](Tape& t, const std::vector<Tensor>& xs) {
        return cc(t, xs[0], Tensor::constant({8}, qv));
    };
    CHECK(grad_check(fn, {Tensor::constant({8}, pv)}, 1e-6, 1e-4).pass);
}

TEST_CASE("vsp_loss: matched maps reach the minimum -1") {
    Tape t;
    LossWeights w;
    auto m = Tensor::constant({2, 2}, {0.1, 0.2, 0.3, 0.4});
    CHECK(vsp_loss(t, m, m, w).item() == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("vsp_loss against direct summation on 4 pixels") {
    Tape t;
    LossWeights w;
    // near-uniform p against a one-hot q; exact uniformity is excluded by the
    // cc variance floor, so the KL term approaches ln 4 as the tilt shrinks
    const double tilt = 1e-3;
    auto p = Tensor::constant({4}, {0.25 + tilt, 0.25 - tilt, 0.25, 0.25});
    auto q = Tensor::constant({4}, {1.0, 0.0, 0.0, 0.0});
    const double expect_kl = -std::log(0.25 + tilt); // 1 * log(1/p0_norm), sum(p) == 1
    const double expect_cc = oracle::pearson(p.data, q.data);
    CHECK(vsp_loss(t, p, q, w).item() == doctest::Approx(expect_kl - expect_cc).epsilon(1e-9));
    CHECK(std::fabs(expect_kl - std::log(4.0)) < 0.01);
}

TEST_CASE("vsp_loss decreases monotonically from uniform toward the target") {
    Tape t;
    LossWeights w;
    std::vector<double> qv = {0.05, 0.1, 0.2, 0.3, 0.2, 0.1, 0.03, 0.02};
    auto q = Tensor::constant({8}, qv);
    double prev = 1e300;
    for (double alpha : {0.05, 0.25, 0.5, 0.75, 0.95}) {
        std::vector<double> pv(8);
        for (std::size_t i = 0; i < 8; ++i) pv[i] = (1 - alpha) * 0.125 + alpha * qv[i];
        const double v = vsp_loss(t, Tensor::constant({8}, pv), q, w).item();
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("vsp_loss degenerate and domain errors") {
    Tape t;
    LossWeights w;
    auto q = Tensor::constant({4}, {0.4, 0.3, 0.2, 0.1});
    CHECK_THROWS_AS(vsp_loss(t, Tensor::zeros({4}), q, w), DegenerateInputError);
    CHECK_THROWS_AS(vsp_loss(t, Tensor::constant({4}, {-0.1, 0.5, 0.3, 0.3}), q, w), DomainError);
}

TEST_CASE("vsp_loss gradients pass finite differences; target side severed") {
    Rng rng(9);
    LossWeights w;
    std::vector<double> pv(16), qv(16);
    for (auto& v : pv) v = rng.uniform(0.05, 1.0);
    double qs = 0.0;
    for (auto& v : qv) {
        v = rng.uniform(0.01, 1.0);
        qs += v;
    }
    for (auto& v : qv) v /= qs;
    auto fn = [&](Tape& t, const std::vector<Tensor>& xs) {
        return vsp_loss(t, xs[0], xs[1], w);
    };
    auto rep = grad_check(fn, {Tensor::constant({16}, pv), Tensor::constant({16}, qv)}, 1e-7, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.skipped == 16); // q enters only through stop_gradient / plain values
}

TEST_CASE("lambda scaling scales the loss contribution exactly") {
    Tape t;
    auto p = Tensor::full({2, 2}, 0.3);
    auto q = Tensor::constant({2, 2}, {1, 0, 1, 0});

    // isolate each term so the doubling is bit-exact
    LossWeights ce1;
    ce1.lambda_ce = 1.5;
    ce1.lambda_dice = 0.0;
    LossWeights ce2 = ce1;
    ce2.lambda_ce = 3.0;
    CHECK(mask_loss(t, p, q, ce2).item() == 2.0 * mask_loss(t, p, q, ce1).item());

    LossWeights d1;
    d1.lambda_ce = 0.0;
    d1.lambda_dice = 2.5;
    LossWeights d2 = d1;
    d2.lambda_dice = 5.0;
    CHECK(mask_loss(t, p, q, d2).item() == 2.0 * mask_loss(t, p, q, d1).item());
}
