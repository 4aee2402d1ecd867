#include "acnn/density.hpp"

#include <algorithm>
#include <cmath>

namespace acnn {

TensorD make_density_map(const Annotation& ann, const PerspectiveMap& pmap) {
    const int rows = pmap.rows(), cols = pmap.cols();
    TensorD dmap(Shape{rows, cols});
    for (const auto& [pr, pc] : ann.points) {
        if (pr < 0.0 || pr >= rows || pc < 0.0 || pc >= cols)
            throw std::invalid_argument("make_density_map: annotation point outside image");
        const int prow = std::min(rows - 1, static_cast<int>(pr));
        const double m = pmap.at(prow, 0);
        if (m <= 0.0)
            throw std::invalid_argument("make_density_map: non-positive perspective value");
        const double sigma_h = m / 5.0;
        const double sigma_v = m / 2.0;

        const int r0 = std::max(0, static_cast<int>(std::floor(pr - 4.0 * sigma_v)));
        const int r1 = std::min(rows - 1, static_cast<int>(std::ceil(pr + 4.0 * sigma_v)));
        const int c0 = std::max(0, static_cast<int>(std::floor(pc - 4.0 * sigma_h)));
        const int c1 = std::min(cols - 1, static_cast<int>(std::ceil(pc + 4.0 * sigma_h)));

        double mass = 0.0;
        for (int r = r0; r <= r1; ++r) {
            const double dv = (r - pr) / sigma_v;
            for (int c = c0; c <= c1; ++c) {
                const double dh = (c - pc) / sigma_h;
                mass += std::exp(-0.5 * (dv * dv + dh * dh));
            }
        }
        if (mass <= 0.0)
            throw std::invalid_argument("make_density_map: degenerate person kernel");
        const double inv_mass = 1.0 / mass;
        for (int r = r0; r <= r1; ++r) {
            const double dv = (r - pr) / sigma_v;
            for (int c = c0; c <= c1; ++c) {
                const double dh = (c - pc) / sigma_h;
                dmap.at(r, c) += std::exp(-0.5 * (dv * dv + dh * dh)) * inv_mass;
            }
        }
    }
    // snap to the density quantum grid; see kDensityQuantum
    for (long long i = 0; i < dmap.numel(); ++i)
        dmap[i] = std::nearbyint(dmap[i] / kDensityQuantum) * kDensityQuantum;
    return dmap;
}

double count_in_roi(const TensorD& dmap, const Mask& roi) {
    if (dmap.rank() != 2) throw std::invalid_argument("count_in_roi: density map must be [H,W]");
    if (roi.rows != dmap.dim(0) || roi.cols != dmap.dim(1))
        throw std::invalid_argument("count_in_roi: mask size mismatch");
    double sum = 0.0;
    for (long long i = 0; i < dmap.numel(); ++i)
        if (roi.on[static_cast<size_t>(i)]) sum += dmap[i];
    return sum;
}

}  // namespace acnn
