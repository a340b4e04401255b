#include <doctest.h>

#include <algorithm>
#include <set>

#include "treecrown/delineate.hpp"
#include "treecrown/reference.hpp"
#include "treecrown/synth.hpp"

using namespace treecrown;

TEST_CASE("local_maxima: single bump gives one treetop at the apex") {
    const Raster chm = synth::make_bump_chm(40, 40, 0.5, {{20, 20, 10.0, 4.0}});
    const auto tops = local_maxima(chm, 2.0, 1.0, 0.05);
    REQUIRE(tops.size() == 1);
    CHECK(tops[0].r == 20);
    CHECK(tops[0].c == 20);
    CHECK(tops[0].height == doctest::Approx(10.0));
}

TEST_CASE("local_maxima: flat raster below threshold is empty") {
    Raster chm(20, 20, 1, Geotransform{0, 10, 0.5}, -9999.0f, 1.0f);
    CHECK(local_maxima(chm, 2.0).empty());
}

TEST_CASE("local_maxima: two bumps match the exhaustive window-scan oracle") {
    // peaks 12 m apart (24 cells at 0.5 m), 8 m tall
    const Raster chm = synth::make_bump_chm(60, 60, 0.5,
                                            {{30, 18, 8.0, 3.0}, {30, 42, 8.0, 3.0}});
    const auto tops = local_maxima(chm, 2.0, 1.0, 0.05);
    CHECK(tops.size() == 2);
    const auto oracle = ref::variable_window_maxima(chm, 2.0, 1.0, 0.05);
    REQUIRE(tops.size() == oracle.size());
    for (size_t i = 0; i < tops.size(); ++i) CHECK(tops[i] == oracle[i]);
}

TEST_CASE("local_maxima with win_b = 0 equals the fixed-window filter") {
    synth::Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        Raster r(30, 30, 1, Geotransform{0, 15, 0.5}, -9999.0f);
        for (auto& v : r.values()) v = static_cast<float>(rng.uniform(0, 12));
        const auto fast = local_maxima(r, 2.0, 1.5, 0.0);
        const auto oracle = ref::fixed_window_maxima(r, 2.0, 3); // ceil(1.5/0.5)
        REQUIRE(fast.size() == oracle.size());
        for (size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == oracle[i]);
    }
}

TEST_CASE("local_maxima: plateau keeps only the lexicographically smallest cell") {
    Raster r(10, 10, 1, Geotransform{0, 5, 0.5}, -9999.0f, 0.0f);
    for (int rr = 4; rr <= 5; ++rr)
        for (int cc = 4; cc <= 6; ++cc) r.at(rr, cc) = 5.0f;
    const auto tops = local_maxima(r, 2.0, 1.0, 0.0);
    REQUIRE(tops.size() == 1);
    CHECK(tops[0].r == 4);
    CHECK(tops[0].c == 4);
}

TEST_CASE("marker_watershed: one marker floods the whole bump") {
    const Raster chm = synth::make_bump_chm(30, 30, 0.5, {{15, 15, 9.0, 4.0}});
    const auto sm = marker_watershed(chm, {{15, 15, 9.0f}}, 2.0);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 30; ++c) {
            if (chm.at(r, c) >= 2.0f) CHECK(sm.label(r, c) == 1);
            else CHECK(sm.label(r, c) == 0);
        }
}

TEST_CASE("marker_watershed: zero markers gives all background") {
    const Raster chm = synth::make_bump_chm(20, 20, 0.5, {{10, 10, 9.0, 3.0}});
    const auto sm = marker_watershed(chm, {}, 2.0);
    for (int32_t l : sm.labels) CHECK(l == 0);
}

TEST_CASE("marker_watershed: duplicate markers rejected") {
    const Raster chm = synth::make_bump_chm(20, 20, 0.5, {{10, 10, 9.0, 3.0}});
    CHECK_THROWS_AS(marker_watershed(chm, {{10, 10, 9.0f}, {10, 10, 9.0f}}, 2.0),
                    ValidationError);
}

TEST_CASE("marker_watershed: two bumps equal the reference flood cell-for-cell") {
    const Raster chm = synth::make_bump_chm(50, 50, 0.5,
                                            {{25, 15, 8.0, 3.5}, {25, 35, 7.0, 3.5}});
    const std::vector<Treetop> markers{{25, 15, 8.0f}, {25, 35, 7.0f}};
    const auto sm = marker_watershed(chm, markers, 2.0);
    const auto oracle = ref::priority_flood(chm, markers, 2.0);
    CHECK(sm.labels == oracle.labels);
    // boundary must fall in the valley between the bumps
    CHECK(sm.label(25, 15) == 1);
    CHECK(sm.label(25, 35) == 2);
}

TEST_CASE("marker_watershed invariants on random scenes") {
    synth::Rng rng(67);
    for (int trial = 0; trial < 10; ++trial) {
        const auto bumps = synth::random_bumps(rng, 64, 64, rng.uniform_int(2, 6), 14.0);
        const Raster chm = synth::make_bump_chm(64, 64, 0.5, bumps);
        const auto markers = local_maxima(chm, 2.0, 1.0, 0.05);
        const auto sm = marker_watershed(chm, markers, 2.0);

        // one segment per marker, marker inside its own segment
        std::set<int32_t> seen;
        for (int32_t l : sm.labels)
            if (l != 0) seen.insert(l);
        CHECK(seen.size() == markers.size());
        for (const auto& [label, top] : sm.top_of)
            CHECK(sm.label(top.r, top.c) == label);
        // labeled cells all clear the height threshold
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c)
                if (sm.label(r, c) != 0) CHECK(chm.at(r, c) >= 2.0f);

        // marker order must not matter
        auto shuffled = markers;
        std::reverse(shuffled.begin(), shuffled.end());
        const auto sm2 = marker_watershed(chm, shuffled, 2.0);
        CHECK(sm.labels == sm2.labels);
    }
}

TEST_CASE("segments_to_instances: block example") {
    SegmentMap sm;
    sm.width = 8;
    sm.height = 8;
    sm.labels.assign(64, 0);
    for (int r = 3; r <= 4; ++r)
        for (int c = 3; c <= 4; ++c) sm.labels[static_cast<size_t>(r) * 8 + c] = 1;
    sm.top_of[1] = Treetop{3, 3, 5.0f};
    const auto inst = segments_to_instances(sm);
    REQUIRE(inst.size() == 1);
    CHECK(inst[0].x == 3);
    CHECK(inst[0].y == 3);
    CHECK(inst[0].w == 2);
    CHECK(inst[0].h == 2);
    CHECK(inst[0].cx == doctest::Approx(4.0));
    CHECK(inst[0].cy == doctest::Approx(4.0));
}

TEST_CASE("segments_to_instances: empty map gives empty list") {
    SegmentMap sm;
    sm.width = 4;
    sm.height = 4;
    sm.labels.assign(16, 0);
    CHECK(segments_to_instances(sm).empty());
}

TEST_CASE("segments_to_instances: random blobs match the full-scan oracle") {
    synth::Rng rng(73);
    SegmentMap sm;
    sm.width = 32;
    sm.height = 32;
    sm.labels.assign(32 * 32, 0);
    for (auto& l : sm.labels) l = rng.uniform_int(0, 4);
    const auto inst = segments_to_instances(sm);
    for (const auto& m : inst) {
        int r0 = 32, r1 = -1, c0 = 32, c1 = -1;
        double sr = 0, sc = 0;
        int n = 0;
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                if (sm.label(r, c) == m.id) {
                    r0 = std::min(r0, r);
                    r1 = std::max(r1, r);
                    c0 = std::min(c0, c);
                    c1 = std::max(c1, c);
                    sr += r + 0.5;
                    sc += c + 0.5;
                    ++n;
                }
        CHECK(m.x == c0);
        CHECK(m.y == r0);
        CHECK(m.w == c1 - c0 + 1);
        CHECK(m.h == r1 - r0 + 1);
        CHECK(m.cx == doctest::Approx(sc / n));
        CHECK(m.cy == doctest::Approx(sr / n));
        CHECK(m.area() == n);
    }
}
