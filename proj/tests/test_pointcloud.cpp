#include <doctest.h>

#include <cmath>
#include <sstream>

#include "treecrown/pointcloud.hpp"
#include "treecrown/synth.hpp"

using namespace treecrown;

namespace {

PointCloud from_csv(const std::string& body) {
    std::istringstream in(body);
    return parse_point_cloud(in);
}

} // namespace

TEST_CASE("parse: one-row file") {
    const auto pc = from_csv("x,y,z,return_number,classification,channel\n"
                             "1.5,2.5,10.0,1,vegetation,2\n");
    REQUIRE(pc.points.size() == 1);
    CHECK(pc.points[0].z == 10.0);
    CHECK(pc.points[0].channel == 2);
    CHECK(pc.min_x == 1.5);
    CHECK(pc.max_x == 1.5);
    CHECK(pc.min_y == 2.5);
    CHECK(pc.max_y == 2.5);
}

TEST_CASE("parse: empty body is an error") {
    CHECK_THROWS_WITH_AS(from_csv("x,y,z,return_number,classification,channel\n"),
                         "empty point cloud", ValidationError);
}

TEST_CASE("parse: missing column, bad number, bad class token") {
    CHECK_THROWS_AS(from_csv("x,y,z,classification,channel\n1,2,3,ground,1\n"),
                    ValidationError);
    CHECK_THROWS_AS(from_csv("x,y,z,return_number,classification,channel\n"
                             "a,2,3,1,ground,1\n"),
                    ValidationError);
    CHECK_THROWS_AS(from_csv("x,y,z,return_number,classification,channel\n"
                             "1,2,3,1,tree,1\n"),
                    ValidationError);
}

TEST_CASE("parse: bounds equal a brute-force scan") {
    synth::Rng rng(17);
    std::ostringstream csv;
    csv << "x,y,z,return_number,classification,channel\n";
    double mnx = 1e30, mxx = -1e30, mny = 1e30, mxy = -1e30;
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-500, 500), y = rng.uniform(-500, 500);
        mnx = std::min(mnx, x);
        mxx = std::max(mxx, x);
        mny = std::min(mny, y);
        mxy = std::max(mxy, y);
        csv << x << "," << y << "," << rng.uniform(0, 30) << ",1,unclassified,1\n";
    }
    const auto pc = from_csv(csv.str());
    CHECK(pc.min_x == doctest::Approx(mnx));
    CHECK(pc.max_x == doctest::Approx(mxx));
    CHECK(pc.min_y == doctest::Approx(mny));
    CHECK(pc.max_y == doctest::Approx(mxy));
}

TEST_CASE("fallback classifier: flat cloud becomes all ground") {
    PointCloud pc;
    for (int i = 0; i < 20; ++i)
        pc.points.push_back({i * 0.3, i * 0.2, 0.0, 1, Classification::Unclassified, 1});
    pc.recompute_bounds();
    const auto out = classify_ground_fallback(pc, 2.0, 0.2);
    for (const auto& p : out.points) CHECK(p.classification == Classification::Ground);
}

TEST_CASE("fallback classifier: pre-classified points untouched, xyz preserved") {
    PointCloud pc;
    pc.points.push_back({0, 0, 5.0, 1, Classification::Vegetation, 1});
    pc.points.push_back({1, 1, 0.0, 1, Classification::Building, 1});
    pc.recompute_bounds();
    const auto out = classify_ground_fallback(pc, 2.0, 0.5);
    for (size_t i = 0; i < pc.points.size(); ++i) {
        CHECK(out.points[i].classification == pc.points[i].classification);
        CHECK(out.points[i].x == pc.points[i].x);
        CHECK(out.points[i].y == pc.points[i].y);
        CHECK(out.points[i].z == pc.points[i].z);
    }
}

TEST_CASE("fallback classifier: two-level cloud splits at the tolerance") {
    PointCloud pc;
    synth::Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const double z = (i % 2 == 0) ? 0.0 : 10.0;
        pc.points.push_back({rng.uniform(0, 1.9), rng.uniform(0, 1.9), z, 1,
                             Classification::Unclassified, 1});
    }
    pc.recompute_bounds();
    const auto out = classify_ground_fallback(pc, 5.0, 0.5); // one cell covers all
    for (const auto& p : out.points) {
        if (p.z == 0.0) CHECK(p.classification == Classification::Ground);
        else CHECK(p.classification == Classification::Unclassified);
    }
}

TEST_CASE("build_dtm: constant ground") {
    PointCloud pc;
    synth::Rng rng(8);
    for (int i = 0; i < 300; ++i)
        pc.points.push_back({rng.uniform(0, 10), rng.uniform(0, 10), 3.0, 1,
                             Classification::Ground, 1});
    pc.recompute_bounds();
    const Raster dtm = build_dtm(pc, 0.5);
    for (float v : dtm.values()) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("build_dtm: single ground point propagates everywhere") {
    PointCloud pc;
    pc.points.push_back({0, 0, 7.5, 1, Classification::Ground, 1});
    pc.points.push_back({9, 9, 20.0, 1, Classification::Vegetation, 1});
    pc.recompute_bounds();
    const Raster dtm = build_dtm(pc, 1.0);
    for (float v : dtm.values()) CHECK(v == doctest::Approx(7.5));
}

TEST_CASE("build_dtm: zero ground points is an error") {
    PointCloud pc;
    pc.points.push_back({0, 0, 1.0, 1, Classification::Vegetation, 1});
    pc.recompute_bounds();
    CHECK_THROWS_AS(build_dtm(pc, 1.0), ValidationError);
}

TEST_CASE("build_dtm: tilted plane within slope tolerance, no nodata") {
    PointCloud pc;
    const double slope = 0.1; // z = 0.1 x
    for (double x = 0.25; x < 20; x += 0.5)
        for (double y = 0.25; y < 20; y += 0.5)
            pc.points.push_back({x, y, slope * x, 1, Classification::Ground, 1});
    pc.recompute_bounds();
    const Raster dtm = build_dtm(pc, 0.5);
    for (int r = 0; r < dtm.height(); ++r)
        for (int c = 0; c < dtm.width(); ++c) {
            CHECK(!dtm.is_nodata(dtm.at(r, c)));
            const double x = dtm.geotransform().center_x(c);
            CHECK(std::abs(dtm.at(r, c) - slope * x) <= 0.5 * 0.5 * slope + 1e-6);
        }
}

TEST_CASE("normalize_heights: subtract and clamp") {
    PointCloud pc;
    pc.points.push_back({1, 1, 12.0, 1, Classification::Vegetation, 1});
    pc.points.push_back({1, 3, 1.0, 1, Classification::Vegetation, 1});
    pc.points.push_back({3, 3, 2.0, 1, Classification::Ground, 1});
    pc.recompute_bounds();
    Raster dtm(4, 4, 1, Geotransform{0.0, 4.0, 1.0}, -9999.0f, 2.0f);
    const auto out = normalize_heights(pc, dtm);
    CHECK(out.points[0].z == doctest::Approx(10.0));
    CHECK(out.points[1].z == 0.0); // below terrain, clamped
}

TEST_CASE("normalize_heights: random cloud over plane matches per-point lookup") {
    synth::Rng rng(31);
    Raster dtm(10, 10, 1, Geotransform{0.0, 10.0, 1.0}, -9999.0f);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c)
            dtm.at(r, c) = static_cast<float>(0.3 * c - 0.1 * r);
    PointCloud pc;
    for (int i = 0; i < 500; ++i)
        pc.points.push_back({rng.uniform(0.01, 9.99), rng.uniform(0.01, 9.99),
                             rng.uniform(0, 20), 1, Classification::Vegetation, 1});
    pc.recompute_bounds();
    const auto out = normalize_heights(pc, pc.points.empty() ? dtm : dtm);
    for (size_t i = 0; i < pc.points.size(); ++i) {
        const auto& p = pc.points[i];
        const int c = static_cast<int>(std::floor(p.x / 1.0));
        const int r = static_cast<int>(std::floor((10.0 - p.y) / 1.0));
        CHECK(out.points[i].z == doctest::Approx(std::max(0.0, p.z - dtm.at(r, c))));
    }
}

TEST_CASE("normalize_heights is idempotent against a zero DTM") {
    PointCloud pc;
    pc.points.push_back({0.5, 0.5, 4.0, 1, Classification::Vegetation, 1});
    pc.points.push_back({1.5, 1.5, 0.0, 1, Classification::Ground, 1});
    pc.recompute_bounds();
    Raster zero(2, 2, 1, Geotransform{0.0, 2.0, 1.0}, -9999.0f, 0.0f);
    const auto once = normalize_heights(pc, zero);
    const auto twice = normalize_heights(once, zero);
    for (size_t i = 0; i < once.points.size(); ++i)
        CHECK(once.points[i].z == twice.points[i].z);
}

TEST_CASE("normalize_heights: point outside extent is an error") {
    PointCloud pc;
    pc.points.push_back({100.0, 100.0, 4.0, 1, Classification::Vegetation, 1});
    pc.recompute_bounds();
    Raster dtm(2, 2, 1, Geotransform{0.0, 2.0, 1.0}, -9999.0f, 0.0f);
    CHECK_THROWS_AS(normalize_heights(pc, dtm), ValidationError);
}
