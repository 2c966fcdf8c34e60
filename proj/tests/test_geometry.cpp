#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sinomar/geometry.hpp"
#include "sinomar/rng.hpp"

using namespace sinomar;

TEST_CASE("paper geometry matches the published acquisition") {
    auto [grid, geom] = paper_geometry();
    CHECK(grid.height == 416);
    CHECK(grid.width == 416);
    CHECK(geom.num_views == 640);
    CHECK(geom.num_bins == 641);
    CHECK(geom.angular_range == Catch::Approx(2.0 * kPi));

    auto angles = geom.view_angles();
    REQUIRE(angles.size() == 640);
    CHECK(angles[0] == 0.0);
    const double step = 2.0 * kPi / 640;
    for (size_t i = 1; i < angles.size(); ++i)
        CHECK(angles[i] - angles[i - 1] == Catch::Approx(step).epsilon(1e-12));
}

TEST_CASE("toy geometry scaling") {
    SECTION("n=64 gives 100 views and 101 bins") {
        // Independent application of the scaling rule: ceil(640*64/416) = 99,
        // rounded up to even = 100; bins = next odd >= views + 1 = 101.
        auto [grid, geom] = toy_geometry(64);
        CHECK(grid.height == 64);
        CHECK(geom.num_views == 100);
        CHECK(geom.num_bins == 101);
    }
    SECTION("n=416 is the scaling fixed point") {
        auto [grid_t, geom_t] = toy_geometry(416);
        auto [grid_p, geom_p] = paper_geometry();
        CHECK(grid_t == grid_p);
        CHECK(geom_t == geom_p);
    }
    SECTION("n < 8 is rejected") {
        CHECK_THROWS_AS(toy_geometry(4), std::invalid_argument);
    }
}

TEST_CASE("central rays pass through the isocenter") {
    auto [grid, geom] = toy_geometry(64);
    const int cb = geom.center_bin();
    for (int v = 0; v < geom.num_views; ++v) {
        RaySegment seg = ray_endpoints(geom, v, cb);
        // Distance from the segment's line to the origin.
        Vec2 d = seg.detector - seg.source;
        const double len = norm(d);
        const double dist = std::fabs(d.x * (-seg.source.y) - d.y * (-seg.source.x)) / len;
        CHECK(dist <= 1e-9 * geom.source_to_isocenter);
    }
}

TEST_CASE("ray endpoints") {
    auto [grid, geom] = toy_geometry(64);
    SECTION("out-of-range indices are rejected") {
        CHECK_THROWS_AS(ray_endpoints(geom, geom.num_views, 0), std::out_of_range);
        CHECK_THROWS_AS(ray_endpoints(geom, 0, geom.num_bins), std::out_of_range);
    }
    SECTION("half-turn rotation reflects the source through the isocenter") {
        const int half = geom.num_views / 2;
        RaySegment a = ray_endpoints(geom, 0, geom.center_bin());
        RaySegment b = ray_endpoints(geom, half, geom.center_bin());
        CHECK(b.source.x == Catch::Approx(-a.source.x).margin(1e-9));
        CHECK(b.source.y == Catch::Approx(-a.source.y).margin(1e-9));
    }
    SECTION("segment length is never below source_to_detector") {
        // Equiangular arc: every element sits at exactly source_to_detector
        // from the source; verify against explicit trigonometry.
        for (int b = 0; b < geom.num_bins; b += 7) {
            RaySegment seg = ray_endpoints(geom, 3, b);
            const double len = norm(seg.detector - seg.source);
            CHECK(len >= geom.source_to_detector * (1.0 - 1e-12));
            const double gamma = geom.bin_angle(b);
            const double expected = std::sqrt(geom.source_to_detector * geom.source_to_detector);
            CHECK(len == Catch::Approx(expected).epsilon(1e-12));
            (void)gamma;
        }
    }
}

TEST_CASE("random toy geometries satisfy the type invariants") {
    RandomStream rng(7, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = rng.uniform_int(8, 200);
        auto [grid, geom] = toy_geometry(n);
        CHECK(grid.height >= 8);
        CHECK(grid.pixel_size > 0.0);
        CHECK(geom.num_views >= 4);
        CHECK(geom.num_bins >= 3);
        CHECK(geom.num_bins % 2 == 1);
        CHECK(geom.source_to_detector > geom.source_to_isocenter);
        CHECK(geom.source_to_isocenter > 0.0);
        // Field of view strictly inside the fan.
        const double fov_radius = 0.5 * grid.fov_diagonal();
        CHECK(geom.source_to_isocenter * std::sin(geom.half_fan_angle()) > fov_radius);
        // No exception from validate() means all constructor invariants hold.
        geom.validate();
    }
}
