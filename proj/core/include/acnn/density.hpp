#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "acnn/perspective.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// Binary per-pixel mask (ROI, evaluation regions).
struct Mask {
    int rows = 0, cols = 0;
    std::vector<uint8_t> on;

    static Mask full(int rows, int cols) {
        Mask m{rows, cols, std::vector<uint8_t>(static_cast<size_t>(rows) * cols, 1)};
        return m;
    }
    static Mask none(int rows, int cols) {
        Mask m{rows, cols, std::vector<uint8_t>(static_cast<size_t>(rows) * cols, 0)};
        return m;
    }
    bool at(int r, int c) const { return on[static_cast<size_t>(r) * cols + c] != 0; }
    void set(int r, int c, bool v) { on[static_cast<size_t>(r) * cols + c] = v ? 1 : 0; }
    long long count() const {
        long long n = 0;
        for (uint8_t v : on) n += v;
        return n;
    }
};

// Sub-pixel head positions plus the scene's region of interest.
struct Annotation {
    std::vector<std::pair<double, double>> points;  // (row, col)
    Mask roi;                                       // empty => full image
};

// Density map values are multiples of 2^-40, so partial sums over any pixel
// subset add exactly in double precision; count_in_roi additivity over
// disjoint masks is then exact, not just close.
constexpr double kDensityQuantum = 0x1.0p-40;

// One axis-aligned elliptical Gaussian per person, sigma_h = M_p/5 and
// sigma_v = M_p/2 from the perspective value at the person's location. Each
// person's truncated kernel is renormalized to unit mass, so the full-map
// integral equals the person count.
TensorD make_density_map(const Annotation& ann, const PerspectiveMap& pmap);

// Sum of density values where the mask is set.
double count_in_roi(const TensorD& dmap, const Mask& roi);

}  // namespace acnn
