#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "treecrown/eval.hpp"
#include "treecrown/postfilter.hpp"
#include "treecrown/synth.hpp"

using namespace treecrown;

namespace {

InstanceMask block(int id, int x, int y, int w, int h) {
    return make_instance(id, x, y, w, h,
                         std::vector<uint8_t>(static_cast<size_t>(w) * h, 1));
}

AnnotationSet one_tile(std::vector<InstanceMask> instances, int size = 1024) {
    AnnotationSet set;
    set.cell_size_m = 0.05;
    Tile t;
    t.spec = TileSpec{0, 0, size};
    t.instances = std::move(instances);
    set.tiles.push_back(std::move(t));
    return set;
}

// Exhaustive best one-to-one assignment maximizing matched pairs (then total
// overlap); validates the greedy matcher on small scenes.
int best_assignment_pairs(const std::vector<InstanceMask>& preds,
                          const std::vector<InstanceMask>& gts, double thr) {
    std::vector<int> perm(preds.size());
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int pairs = 0;
        const size_t n = std::min(preds.size(), gts.size());
        for (size_t g = 0; g < n; ++g)
            if (mask_iou(preds[static_cast<size_t>(perm[g])], gts[g]) >= thr) ++pairs;
        best = std::max(best, pairs);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST_CASE("match_instances: identical sets match fully with IoU 1") {
    const std::vector<InstanceMask> gts{block(1, 0, 0, 4, 4), block(2, 10, 10, 4, 4)};
    const auto m = match_instances(gts, gts, 0.5);
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.unmatched_gt.empty());
    CHECK(m.unmatched_pred.empty());
    for (const auto& p : m.pairs) CHECK(p.iou == doctest::Approx(1.0));
}

TEST_CASE("match_instances: disjoint sets match nothing") {
    const auto m = match_instances({block(1, 0, 0, 4, 4)}, {block(9, 20, 20, 4, 4)}, 0.5);
    CHECK(m.pairs.empty());
    CHECK(m.unmatched_gt == std::vector<int>{9});
    CHECK(m.unmatched_pred == std::vector<int>{1});
}

TEST_CASE("match_instances: 3x3 scene gives tp=2 fp=1 fn=1") {
    // gt trees: three 10x10 blocks; preds: two good hits plus one stray
    const std::vector<InstanceMask> gts{block(1, 0, 0, 10, 10), block(2, 20, 0, 10, 10),
                                        block(3, 40, 0, 10, 10)};
    const std::vector<InstanceMask> preds{block(11, 1, 0, 10, 10),
                                          block(12, 21, 1, 10, 10),
                                          block(13, 60, 40, 10, 10)};
    const auto m = match_instances(preds, gts, 0.5);
    CHECK(m.pairs.size() == 2);
    CHECK(m.unmatched_gt.size() == 1);
    CHECK(m.unmatched_pred.size() == 1);
    CHECK(static_cast<int>(m.pairs.size()) == best_assignment_pairs(preds, gts, 0.5));

    double p, r, f1;
    prf1(m, 3, 3, p, r, f1);
    CHECK(p == doctest::Approx(2.0 / 3.0));
    CHECK(r == doctest::Approx(2.0 / 3.0));
    CHECK(f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("match_instances: greedy count equals the exhaustive optimum on random scenes") {
    synth::Rng rng(113);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<InstanceMask> gts, preds;
        for (int i = 0; i < 5; ++i) {
            gts.push_back(block(i + 1, 12 * i, 0, 10, 10));
            preds.push_back(block(100 + i, 12 * i + rng.uniform_int(-3, 3),
                                  rng.uniform_int(-3, 3), 10, 10));
        }
        const auto m = match_instances(preds, gts, 0.5);
        CHECK(static_cast<int>(m.pairs.size()) == best_assignment_pairs(preds, gts, 0.5));
    }
}

TEST_CASE("match_instances: intersection-over-gt mode admits oversized predictions") {
    // pred covers gt fully but is 4x its size: IoG = 1, IoU = 0.25
    const std::vector<InstanceMask> gts{block(1, 4, 4, 10, 10)};
    const std::vector<InstanceMask> preds{block(2, 0, 0, 20, 20)};
    CHECK(match_instances(preds, gts, 0.5, OverlapMode::Iou).pairs.empty());
    const auto m = match_instances(preds, gts, 0.5, OverlapMode::IntersectionOverGt);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].iou == doctest::Approx(0.25)); // reported stat stays IoU
}

TEST_CASE("prf1 handles zero denominators") {
    MatchResult empty;
    double p = -1, r = -1, f1 = -1;
    prf1(empty, 0, 0, p, r, f1);
    CHECK(p == 0.0);
    CHECK(r == 0.0);
    CHECK(f1 == 0.0);
}

TEST_CASE("mean_iou averages per-gt IoU with zeros for misses") {
    const std::vector<InstanceMask> gts{block(1, 0, 0, 10, 10), block(2, 30, 0, 10, 10)};
    const std::vector<InstanceMask> preds{block(5, 0, 0, 10, 10)};
    const auto m = match_instances(preds, gts, 0.5);
    std::vector<double> per_tree;
    const double miou = mean_iou(m, gts, per_tree);
    REQUIRE(per_tree.size() == 2);
    CHECK(per_tree[0] == doctest::Approx(1.0));
    CHECK(per_tree[1] == 0.0);
    CHECK(miou == doctest::Approx(0.5));
}

TEST_CASE("bootstrap_ci: constant sample collapses to a point") {
    double lo, hi;
    bootstrap_ci(std::vector<double>(40, 0.7), 500, 0.95, 1, lo, hi);
    CHECK(lo == doctest::Approx(0.7));
    CHECK(hi == doctest::Approx(0.7));
}

TEST_CASE("bootstrap_ci: level 0 collapses to the median resample mean") {
    synth::Rng rng(127);
    std::vector<double> xs(50);
    for (auto& x : xs) x = rng.uniform();
    double lo, hi;
    bootstrap_ci(xs, 1000, 0.0, 7, lo, hi);
    CHECK(lo == doctest::Approx(hi));
}

TEST_CASE("bootstrap_ci stays within the sample range") {
    synth::Rng rng(131);
    std::vector<double> xs(30);
    for (auto& x : xs) x = rng.uniform(-1, 1);
    double lo, hi;
    bootstrap_ci(xs, 1000, 0.95, 3, lo, hi);
    CHECK(lo <= hi);
    CHECK(lo >= *std::min_element(xs.begin(), xs.end()));
    CHECK(hi <= *std::max_element(xs.begin(), xs.end()));
}

TEST_CASE("bootstrap_ci approximates the binomial normal interval") {
    // 100 values, half 0 half 1: mean 0.5, se 0.05 -> CI about [0.402, 0.598]
    std::vector<double> xs(100, 0.0);
    std::fill(xs.begin() + 50, xs.end(), 1.0);
    double lo, hi;
    bootstrap_ci(xs, 4000, 0.95, 42, lo, hi);
    CHECK(std::abs(lo - 0.402) < 0.02);
    CHECK(std::abs(hi - 0.598) < 0.02);
}

TEST_CASE("bootstrap_ci rejects bad arguments") {
    double lo, hi;
    CHECK_THROWS_AS(bootstrap_ci({}, 100, 0.95, 1, lo, hi), ValidationError);
    CHECK_THROWS_AS(bootstrap_ci({0.5}, 0, 0.95, 1, lo, hi), ValidationError);
}

#ifdef _OPENMP
TEST_CASE("bootstrap_ci is bit-identical across thread counts") {
    synth::Rng rng(137);
    std::vector<double> xs(64);
    for (auto& x : xs) x = rng.uniform();
    const int saved = omp_get_max_threads();
    double lo1, hi1, lo4, hi4;
    omp_set_num_threads(1);
    bootstrap_ci(xs, 1000, 0.95, 99, lo1, hi1);
    omp_set_num_threads(4);
    bootstrap_ci(xs, 1000, 0.95, 99, lo4, hi4);
    omp_set_num_threads(saved);
    CHECK(lo1 == lo4);
    CHECK(hi1 == hi4);
}
#endif

TEST_CASE("evaluate_dataset: perfect predictions score 1.0 everywhere") {
    const auto gts = one_tile({block(1, 100, 100, 20, 20), block(2, 300, 300, 30, 30),
                               block(3, 600, 500, 25, 25)});
    EvalConfig cfg;
    cfg.window = EvalWindow::Full;
    const auto rep = evaluate_dataset(gts, gts, cfg);
    CHECK(rep.tp == 3);
    CHECK(rep.fp == 0);
    CHECK(rep.fn == 0);
    CHECK(rep.precision == doctest::Approx(1.0));
    CHECK(rep.recall == doctest::Approx(1.0));
    CHECK(rep.f1 == doctest::Approx(1.0));
    CHECK(rep.miou == doctest::Approx(1.0));
    CHECK(rep.ci_low == doctest::Approx(1.0));
    CHECK(rep.ci_high == doctest::Approx(1.0));
}

TEST_CASE("evaluate_dataset: no predictions gives all-zero scores") {
    const auto gts = one_tile({block(1, 100, 100, 20, 20)});
    const auto preds = one_tile({});
    EvalConfig cfg;
    cfg.window = EvalWindow::Full;
    const auto rep = evaluate_dataset(preds, gts, cfg);
    CHECK(rep.tp == 0);
    CHECK(rep.fn == 1);
    CHECK(rep.precision == 0.0);
    CHECK(rep.recall == 0.0);
    CHECK(rep.miou == 0.0);
}

TEST_CASE("evaluate_dataset: grid mismatches are rejected") {
    const auto gts = one_tile({block(1, 100, 100, 20, 20)});
    auto preds = gts;
    preds.cell_size_m = 0.5;
    CHECK_THROWS_AS(evaluate_dataset(preds, gts, EvalConfig{}), ValidationError);
    preds = gts;
    preds.tiles[0].spec.size = 512;
    CHECK_THROWS_AS(evaluate_dataset(preds, gts, EvalConfig{}), ValidationError);
}

TEST_CASE("evaluate_dataset: center window ignores edge instances that full counts") {
    // gt near the tile corner is outside the central 512-window; the pred set
    // misses it entirely, so full-window recall drops but center stays perfect
    const auto gts = one_tile({block(1, 400, 400, 40, 40), block(2, 10, 10, 40, 40)});
    const auto preds = one_tile({block(7, 400, 400, 40, 40)});
    EvalConfig cfg;

    cfg.window = EvalWindow::Center;
    const auto center = evaluate_dataset(preds, gts, cfg);
    CHECK(center.tp == 1);
    CHECK(center.fn == 0);
    CHECK(center.recall == doctest::Approx(1.0));
    CHECK(center.miou == doctest::Approx(1.0));

    cfg.window = EvalWindow::Full;
    const auto full = evaluate_dataset(preds, gts, cfg);
    CHECK(full.tp == 1);
    CHECK(full.fn == 1);
    CHECK(full.recall == doctest::Approx(0.5));
    CHECK(full.miou < center.miou);
}

TEST_CASE("evaluate_dataset: miou never exceeds recall") {
    synth::Rng rng(139);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<InstanceMask> gts, preds;
        for (int i = 0; i < 6; ++i) {
            const int x = 80 + 120 * i, y = 300;
            gts.push_back(block(i + 1, x, y, 30, 30));
            if (rng.uniform() < 0.7)
                preds.push_back(block(50 + i, x + rng.uniform_int(-8, 8),
                                      y + rng.uniform_int(-8, 8), 30, 30));
        }
        EvalConfig cfg;
        cfg.window = EvalWindow::Full;
        const auto rep = evaluate_dataset(one_tile(preds), one_tile(gts), cfg);
        CHECK(rep.miou <= rep.recall + 1e-12);
    }
}
