#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "bikd/data.hpp"
#include "bikd/errors.hpp"
#include "bikd/rng.hpp"
#include "oracles.hpp"

using namespace bikd;

namespace {

DatasetSpec cls_spec(std::size_t train = 2000, std::size_t eval = 1000) {
    DatasetSpec s;
    s.task = TaskKind::Classification;
    s.seed = 7;
    s.train_size = train;
    s.eval_size = eval;
    s.dim = 16;
    s.classes = 4;
    return s;
}

// nearest-centroid classifier: fit on train rows, score on eval rows
double nearest_centroid_accuracy(const DatasetHandle& d, bool first_half_only, bool second_half_only) {
    const std::size_t dim = d.spec.dim, half = dim / 2;
    const std::size_t lo = second_half_only ? half : 0;
    const std::size_t hi = first_half_only ? half : dim;
    std::vector<std::vector<double>> centroid(d.spec.classes, std::vector<double>(hi - lo, 0.0));
    std::vector<std::size_t> count(d.spec.classes, 0);
    for (std::size_t i = d.train.begin; i < d.train.end; ++i) {
        const auto c = static_cast<std::size_t>(d.y[i]);
        ++count[c];
        for (std::size_t j = lo; j < hi; ++j) centroid[c][j - lo] += d.x[i * dim + j];
    }
    for (std::size_t c = 0; c < d.spec.classes; ++c) {
        for (auto& v : centroid[c]) v /= static_cast<double>(count[c]);
    }
    std::size_t hits = 0;
    for (std::size_t i = d.eval.begin; i < d.eval.end; ++i) {
        double best = 1e300;
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < d.spec.classes; ++c) {
            double dist = 0.0;
            for (std::size_t j = lo; j < hi; ++j) {
                const double diff = d.x[i * dim + j] - centroid[c][j - lo];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_c = c;
            }
        }
        if (static_cast<int>(best_c) == d.y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(d.eval.size());
}

} // namespace

TEST_CASE("classification generation is deterministic") {
    auto a = gen_classification(cls_spec());
    auto b = gen_classification(cls_spec());
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
}

TEST_CASE("classification labels are balanced within 2%") {
    auto spec = cls_spec(8000, 2000);
    auto d = gen_classification(spec);
    std::vector<std::size_t> hist(spec.classes, 0);
    for (int y : d.y) ++hist[static_cast<std::size_t>(y)];
    const double expect = static_cast<double>(d.total()) / static_cast<double>(spec.classes);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        CHECK(std::fabs(static_cast<double>(hist[c]) - expect) / expect < 0.02);
    }
}

TEST_CASE("half views are informative but strictly weaker than the full view") {
    auto spec = cls_spec(8000, 2000);
    auto d = gen_classification(spec);
    const double acc_a = nearest_centroid_accuracy(d, true, false);
    const double acc_b = nearest_centroid_accuracy(d, false, true);
    const double acc_full = nearest_centroid_accuracy(d, false, false);
    const double chance = 1.0 / static_cast<double>(spec.classes);
    CHECK(acc_a > chance + 0.1);
    CHECK(acc_b > chance + 0.1);
    CHECK(acc_a < acc_full);
    CHECK(acc_b < acc_full);
    CHECK(acc_a < 0.995);
    CHECK(acc_b < 0.995);
}

TEST_CASE("train/eval splits never overlap") {
    auto d = gen_classification(cls_spec());
    CHECK(d.train.end == d.eval.begin);
    CHECK(d.eval.end == d.total());
}

TEST_CASE("infeasible classification specs are rejected") {
    auto bad = cls_spec();
    bad.signal_a = 0.0;
    CHECK_THROWS_AS(gen_classification(bad), ConfigError);
    auto tiny = cls_spec();
    tiny.dim = 2;
    CHECK_THROWS_AS(gen_classification(tiny), ConfigError);
    auto one = cls_spec();
    one.classes = 1;
    CHECK_THROWS_AS(gen_classification(one), ConfigError);
}

TEST_CASE("dense generation: deterministic, labeled regions, noise-free recovery") {
    DatasetSpec s;
    s.task = TaskKind::DenseSeg;
    s.seed = 11;
    s.train_size = 60;
    s.eval_size = 20;
    s.grid = 8;
    s.channels = 6;
    s.classes = 3;
    s.dense_noise = 0.5;

    auto a = gen_dense(s);
    auto b = gen_dense(s);
    CHECK(a.dense_x == b.dense_x);
    CHECK(a.pixel_labels == b.pixel_labels);

    // zero noise: thresholding channel 0 recovers the mask, the angle channels
    // recover the class, pixel accuracy 1.0
    auto clean_spec = s;
    clean_spec.dense_noise = 0.0;
    auto clean = gen_dense(clean_spec);
    const std::size_t px = s.grid * s.grid;
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < clean.total(); ++i) {
        for (std::size_t p = 0; p < px; ++p) {
            const double* feat = &clean.dense_x[(i * px + p) * s.channels];
            int pred = 0;
            if (feat[0] > 0.5) {
                double best = -1e300;
                int best_c = 1;
                for (int c = 1; c < static_cast<int>(s.classes); ++c) {
                    const double angle = 2.0 * 3.14159265358979323846 * c / static_cast<double>(s.classes);
                    const double score = feat[1] * std::cos(angle) + feat[2] * std::sin(angle);
                    if (score > best) {
                        best = score;
                        best_c = c;
                    }
                }
                pred = best_c;
            }
            if (pred == clean.pixel_labels[i * px + p]) ++correct;
            ++total;
        }
    }
    CHECK(correct == total);
}

TEST_CASE("dense region areas track the spec fractions within 5%") {
    DatasetSpec s;
    s.task = TaskKind::DenseSeg;
    s.seed = 13;
    s.train_size = 900;
    s.eval_size = 100;
    s.grid = 12;
    s.channels = 6;
    s.classes = 3;
    s.area_lo = 0.3;
    s.area_hi = 0.5;
    auto d = gen_dense(s);
    const std::size_t px = s.grid * s.grid;
    double mean_frac = 0.0;
    for (std::size_t i = 0; i < d.total(); ++i) {
        double fg = 0.0;
        for (std::size_t p = 0; p < px; ++p) fg += d.region_mask[i * px + p];
        mean_frac += fg / static_cast<double>(px);
    }
    mean_frac /= static_cast<double>(d.total());
    CHECK(std::fabs(mean_frac - 0.4) < 0.05);
}

TEST_CASE("saliency maps normalize to 1 and fixations follow the map") {
    DatasetSpec s;
    s.task = TaskKind::Saliency;
    s.seed = 17;
    s.train_size = 20;
    s.eval_size = 10;
    s.grid = 16;
    s.channels = 4;
    s.fixations = 1000;
    auto d = gen_saliency(s);
    auto again = gen_saliency(s);
    CHECK(d.maps == again.maps);

    const std::size_t px = s.grid * s.grid;
    for (std::size_t i = 0; i < d.total(); ++i) {
        double total = 0.0;
        for (std::size_t p = 0; p < px; ++p) total += d.maps[i * px + p];
        CHECK(std::fabs(total - 1.0) <= 1e-9);
    }

    // empirical fixation density correlates with the map
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> hist(px, 0.0);
        for (auto [r, c] : d.fixation_points[i]) {
            hist[static_cast<std::size_t>(r) * s.grid + static_cast<std::size_t>(c)] += 1.0;
        }
        std::vector<double> map_row(d.maps.begin() + static_cast<std::ptrdiff_t>(i * px),
                                    d.maps.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
        CHECK(oracle::pearson(hist, map_row) > 0.5);
    }
}

TEST_CASE("batches form a permutation, respect the epoch seed, include the tail") {
    auto d = gen_classification(cls_spec(101, 50));
    auto bs = batches(d, d.train, 16, 5);
    std::set<std::size_t> seen;
    std::size_t count = 0;
    for (const auto& b : bs) {
        for (std::size_t idx : b.indices) {
            CHECK(idx < d.train.end);
            seen.insert(idx);
            ++count;
        }
    }
    CHECK(count == 101);        // tail batch of 5 included
    CHECK(seen.size() == 101);  // a permutation
    CHECK(bs.back().indices.size() == 101 % 16);

    auto same = batches(d, d.train, 16, 5);
    CHECK(same[0].indices == bs[0].indices);

    int differing = 0;
    for (std::uint64_t s = 100; s < 110; ++s) {
        auto other = batches(d, d.train, 16, s);
        if (other[0].indices != bs[0].indices) ++differing;
    }
    CHECK(differing == 10);
}

TEST_CASE("batches validates batch size") {
    auto d = gen_classification(cls_spec(30, 10));
    CHECK_THROWS_AS(batches(d, d.train, 0, 1), ConfigError);
}

TEST_CASE("view policies cover all channels and zero hidden ones") {
    auto halves = ViewPolicy::halves(16);
    CHECK(halves.visible.size() == 2);
    auto thirds = ViewPolicy::overlapping_thirds(15);
    CHECK(thirds.visible.size() == 3);
    for (std::size_t c = 0; c < 15; ++c) {
        int seen_by = 0;
        for (const auto& m : thirds.visible) seen_by += m[c];
        CHECK(seen_by == 2); // every channel visible to exactly two models
    }

    auto d = gen_classification(cls_spec(20, 10));
    auto bs = batches(d, d.train, 8, 1);
    auto masked = apply_view(d, bs[0].x, halves.visible[0]);
    for (std::size_t i = 0; i < masked.rows(); ++i) {
        for (std::size_t j = 8; j < 16; ++j) CHECK(masked.at(i, j) == 0.0);
        double sum_visible = 0.0;
        for (std::size_t j = 0; j < 8; ++j) sum_visible += std::fabs(masked.at(i, j));
        CHECK(sum_visible > 0.0);
    }
}

TEST_CASE("dataset cache round-trips through regeneration") {
    auto spec = cls_spec(50, 20);
    auto d = gen_classification(spec);
    const std::string path = "test_dataset_cache.bin";
    save_dataset_cache(d, path);
    auto back = load_dataset_cache(path);
    CHECK(back.x == d.x);
    CHECK(back.y == d.y);
    std::remove(path.c_str());
}
