#include <doctest.h>

#include <cmath>

#include "acnn/perspective.hpp"

using namespace acnn;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent ray-casting oracle: intersect the two row-boundary rays with
// the ground plane for the depth footprint, and with the vertical line
// through the central ground point for the height footprint.
double raycast_row_value(const CameraExtrinsics& cam, int row) {
    const double row_center = (cam.rows - 1) / 2.0;
    const double deg = kPi / 180.0;
    const double beta = (-cam.tilt_deg - cam.fov_deg * (row_center - row) / cam.rows) * deg;
    const double half = 0.5 * (cam.fov_deg / cam.rows) * deg;
    const double beta_lo = beta - half, beta_hi = beta + half;
    const double x_lo = cam.height_m / std::tan(beta_lo);  // far boundary
    const double x_hi = cam.height_m / std::tan(beta_hi);  // near boundary
    const double depth = x_lo - x_hi;
    const double x_c = cam.height_m / std::tan(beta);
    const double height = x_c * (std::tan(beta_hi) - std::tan(beta_lo));
    return 1.0 / std::sqrt(depth * height);
}

}  // namespace

TEST_SUITE("perspective") {
    TEST_CASE("45-degree closed form: M = 1/(2 H delta)") {
        // narrow fov keeps every ray at ~45 degrees where sin*cos = 1/2
        CameraExtrinsics cam{-45.0, 6.0, 0.05, 101, 7};
        auto map = estimate_perspective_map(cam);
        const double delta = (cam.fov_deg * kPi / 180.0) / cam.rows;
        const double want = 1.0 / (2.0 * cam.height_m * delta);
        CHECK(map.at(50, 3) == doctest::Approx(want).epsilon(1e-6));
    }

    TEST_CASE("M scales as 1/H exactly") {
        CameraExtrinsics a{-30.0, 4.0, 20.0, 64, 8};
        CameraExtrinsics b = a;
        b.height_m = 8.0;
        auto ma = estimate_perspective_map(a);
        auto mb = estimate_perspective_map(b);
        for (int r = 0; r < a.rows; ++r)
            CHECK(ma.at(r, 0) == doctest::Approx(2.0 * mb.at(r, 0)).epsilon(1e-12));
    }

    TEST_CASE("M scales as rows/fov to first order at small fov") {
        CameraExtrinsics a{-40.0, 5.0, 5.0, 100, 8};
        CameraExtrinsics b = a;
        b.fov_deg = 2.5;
        auto ma = estimate_perspective_map(a);
        auto mb = estimate_perspective_map(b);
        // halving the fov doubles pixels-per-meter at the center ray
        const double ratio = mb.at(50, 0) / ma.at(50, 0);
        CHECK(ratio == doctest::Approx(2.0).epsilon(1e-2));
    }

    TEST_CASE("column-constant and row-monotone in the oblique regime") {
        CameraExtrinsics cam{-30.0, 8.0, 50.0, 96, 64};
        auto map = estimate_perspective_map(cam);
        for (int r = 0; r < cam.rows; r += 7)
            CHECK(map.at(r, 3) == map.at(r, 60));
        for (int r = 1; r < cam.rows; ++r)
            CHECK(map.at(r, 0) > map.at(r - 1, 0));  // bottom row largest
        CHECK(map.at(cam.rows - 1, 0) > map.at(0, 0));
    }

    TEST_CASE("matches the ray-casting oracle within 1e-3") {
        CameraExtrinsics cam{-30.0, 8.0, 50.0, 384, 16};
        auto map = estimate_perspective_map(cam);
        for (int r = 0; r < cam.rows; ++r) {
            const double oracle = raycast_row_value(cam, r);
            const double rel = std::abs(map.at(r, 0) - oracle) / oracle;
            INFO("row ", r);
            CHECK(rel < 1e-3);
        }
    }

    TEST_CASE("oracle equivalence across the working angle range") {
        // beta spans (5, 85) degrees via tilt choices with a moderate fov
        for (double tilt : {-12.0, -25.0, -45.0, -65.0, -80.0}) {
            CameraExtrinsics cam{tilt, 6.0, 14.0, 128, 8};
            auto map = estimate_perspective_map(cam);
            for (int r = 0; r < cam.rows; r += 5) {
                const double oracle = raycast_row_value(cam, r);
                CHECK(std::abs(map.at(r, 0) - oracle) / oracle < 1e-3);
            }
        }
    }

    TEST_CASE("geometry errors") {
        // horizon: top-of-image ray at/above horizontal
        CHECK_THROWS_AS(estimate_perspective_map(CameraExtrinsics{-10.0, 5.0, 25.0, 64, 8}),
                        GeometryError);
        // nadir: bottom ray within a degree of straight down
        CHECK_THROWS_AS(estimate_perspective_map(CameraExtrinsics{-80.0, 5.0, 25.0, 64, 8}),
                        GeometryError);
        CHECK_THROWS_AS(estimate_perspective_map(CameraExtrinsics{-95.0, 5.0, 25.0, 64, 8}),
                        std::invalid_argument);
        CHECK_THROWS_AS(estimate_perspective_map(CameraExtrinsics{-30.0, -1.0, 25.0, 64, 8}),
                        std::invalid_argument);
    }

    TEST_CASE("perspective_at bounds and equality") {
        CameraExtrinsics cam{-35.0, 7.0, 30.0, 32, 16};
        auto map = estimate_perspective_map(cam);
        CHECK(perspective_at(map, 5, 2) == map.at(5, 2));
        CHECK(map.at(5, 2) == map.at(5, 13));
        CHECK(map.at(31, 0) > map.at(0, 0));
        CHECK_THROWS_AS(map.at(32, 0), std::invalid_argument);
        CHECK_THROWS_AS(map.at(0, 16), std::invalid_argument);
    }
}
