#include "acnn/perspective.hpp"

#include <cmath>
#include <string>

namespace acnn {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMinRayDeg = 1.0;
constexpr double kMaxRayDeg = 89.0;
}  // namespace

PerspectiveMap estimate_perspective_map(const CameraExtrinsics& cam) {
    cam.validate();
    const double row_center = (cam.rows - 1) / 2.0;
    const double delta = (cam.fov_deg * kPi / 180.0) / cam.rows;  // radians per pixel
    std::vector<double> values(static_cast<size_t>(cam.rows));
    for (int r = 0; r < cam.rows; ++r) {
        const double beta_deg = -cam.tilt_deg - cam.fov_deg * (row_center - r) / cam.rows;
        if (beta_deg <= kMinRayDeg)
            throw GeometryError("perspective: row " + std::to_string(r) +
                                " ray at/above horizon (beta=" + std::to_string(beta_deg) +
                                " deg)");
        if (beta_deg >= kMaxRayDeg)
            throw GeometryError("perspective: row " + std::to_string(r) +
                                " ray too close to nadir (beta=" + std::to_string(beta_deg) +
                                " deg)");
        const double beta = beta_deg * kPi / 180.0;
        const double rho = cam.height_m / std::sin(beta);
        const double a = rho * delta / std::sqrt(std::sin(beta) * std::cos(beta));
        values[static_cast<size_t>(r)] = 1.0 / a;
    }
    return PerspectiveMap(cam.rows, cam.cols, std::move(values));
}

}  // namespace acnn
