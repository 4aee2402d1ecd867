#pragma once

#include <vector>

#include "acnn/errors.hpp"

namespace acnn {

// Pinhole camera looking down at a ground plane. Tilt is pitch below
// horizontal (negative downward); rows index the image top-down.
struct CameraExtrinsics {
    double tilt_deg = -30.0;   // in (-90, 0)
    double height_m = 8.0;     // > 0
    double fov_deg = 50.0;     // vertical field of view, in (0, 180)
    int rows = 0;
    int cols = 0;

    void validate() const {
        if (tilt_deg <= -90.0 || tilt_deg >= 0.0)
            throw std::invalid_argument("camera: tilt must be in (-90, 0) degrees");
        if (height_m <= 0.0) throw std::invalid_argument("camera: height must be positive");
        if (fov_deg <= 0.0 || fov_deg >= 180.0)
            throw std::invalid_argument("camera: fov must be in (0, 180) degrees");
        if (rows < 1 || cols < 1) throw std::invalid_argument("camera: bad image size");
        // top row's ray must still point below the horizon
        if (tilt_deg + fov_deg / 2.0 >= 0.0)
            throw GeometryError("camera: top of image looks at or above the horizon");
    }
};

// Per-row pixels-per-meter scale. The model depends only on the image row,
// so values are stored once per row and are constant along columns.
class PerspectiveMap {
public:
    PerspectiveMap() = default;
    PerspectiveMap(int rows, int cols, std::vector<double> row_values)
        : rows_(rows), cols_(cols), row_values_(std::move(row_values)) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double at(int row, int col) const {
        if (row < 0 || row >= rows_ || col < 0 || col >= cols_)
            throw std::invalid_argument("perspective_at: pixel out of bounds");
        return row_values_[static_cast<size_t>(row)];
    }
    double row_value(int row) const { return at(row, 0); }
    const std::vector<double>& row_values() const { return row_values_; }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> row_values_;
};

// Casts the per-row ray, intersects the ground plane and converts the pixel
// footprint into a projected-length scale:
//   beta(r) = -tilt - fov*(r_center - r)/rows      (angle below horizontal)
//   rho     = height / sin(beta)                   (slant range)
//   delta   = fov / rows                           (radians per pixel)
//   d = rho*delta/sin(beta), h = rho*delta/cos(beta), a = sqrt(d*h)
//   M(r) = 1/a
// Rows whose ray angle falls outside (1, 89) degrees are rejected rather
// than clamped.
PerspectiveMap estimate_perspective_map(const CameraExtrinsics& cam);

inline double perspective_at(const PerspectiveMap& map, int row, int col) {
    return map.at(row, col);
}

}  // namespace acnn
