#include "acnn/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "acnn/rng.hpp"

namespace acnn {

std::string to_string(AuxKind kind) {
    switch (kind) {
        case AuxKind::perspective: return "perspective";
        case AuxKind::angle_height: return "angle_height";
        case AuxKind::kernel_radius: return "kernel_radius";
    }
    return "?";
}

AuxKind aux_kind_from_string(const std::string& s) {
    if (s == "perspective") return AuxKind::perspective;
    if (s == "angle_height") return AuxKind::angle_height;
    if (s == "kernel_radius") return AuxKind::kernel_radius;
    throw std::invalid_argument("unknown aux kind: " + s);
}

AuxNormalization AuxNormalization::fit(AuxKind kind,
                                       const std::vector<std::vector<double>>& values) {
    if (values.empty()) throw std::invalid_argument("aux normalization: no training values");
    const size_t dim = values.front().size();
    AuxNormalization norm;
    norm.kind = kind;
    norm.components.resize(dim);
    for (size_t d = 0; d < dim; ++d) {
        double sum = 0.0;
        for (const auto& v : values) {
            if (v.size() != dim)
                throw std::invalid_argument("aux normalization: ragged value list");
            sum += v[d];
        }
        const double mean = sum / values.size();
        double ss = 0.0, extreme = 0.0;
        for (const auto& v : values) {
            const double c = v[d] - mean;
            ss += c * c;
            extreme = std::max(extreme, std::abs(c));
        }
        const double sd = std::sqrt(ss / values.size());
        // wide enough that no training value exceeds 1.5 in normalized units
        norm.components[d].center = mean;
        norm.components[d].scale = std::max({sd, extreme / 1.5, 1e-9});
    }
    return norm;
}

std::vector<double> AuxNormalization::normalize(const std::vector<double>& raw) const {
    if (raw.size() != components.size())
        throw std::invalid_argument("aux normalization: dimension mismatch");
    std::vector<double> out(raw.size());
    for (size_t d = 0; d < raw.size(); ++d) {
        const double z = (raw[d] - components[d].center) / components[d].scale;
        out[d] = std::clamp(z, -1.5, 1.5);
    }
    return out;
}

float image_at_reflected(const Tensor& image, int r, int c) {
    const int rows = image.dim(0), cols = image.dim(1);
    while (r < 0 || r >= rows) r = (r < 0) ? -r - 1 : 2 * rows - 1 - r;
    while (c < 0 || c >= cols) c = (c < 0) ? -c - 1 : 2 * cols - 1 - c;
    return image.at(r, c);
}

Tensor extract_patch(const Tensor& image, int center_row, int center_col, int patch_size) {
    const int half = (patch_size - 1) / 2;
    Tensor patch(Shape{1, patch_size, patch_size});
    for (int r = 0; r < patch_size; ++r)
        for (int c = 0; c < patch_size; ++c)
            patch.at(0, r, c) =
                image_at_reflected(image, center_row - half + r, center_col - half + c);
    return patch;
}

std::vector<PatchSample> sample_patches(const Tensor& image, const TensorD& dmap,
                                        const Annotation& ann, const SceneContext& ctx,
                                        const PerspectiveMap& pmap, const PatchGridSpec& grid,
                                        uint64_t seed) {
    if (grid.patch_size < 3 || grid.patch_size % 2 == 0)
        throw std::invalid_argument("sample_patches: patch size must be odd and >= 3");
    if (grid.stride < 1) throw std::invalid_argument("sample_patches: degenerate grid stride");
    const int rows = image.dim(0), cols = image.dim(1);
    if (dmap.dim(0) != rows || dmap.dim(1) != cols)
        throw std::invalid_argument("sample_patches: density map size mismatch");

    Rng rng(seed);
    const int half = (grid.patch_size - 1) / 2;
    std::vector<PatchSample> samples;
    for (int r0 = grid.stride / 2; r0 < rows; r0 += grid.stride) {
        for (int c0 = grid.stride / 2; c0 < cols; c0 += grid.stride) {
            int r = r0, c = c0;
            if (grid.jitter) {
                r += rng.uniform_int(grid.stride) - grid.stride / 2;
                c += rng.uniform_int(grid.stride) - grid.stride / 2;
                r = std::clamp(r, 0, rows - 1);
                c = std::clamp(c, 0, cols - 1);
            }
            PatchSample s;
            s.patch = extract_patch(image, r, c, grid.patch_size);
            s.target = static_cast<float>(dmap.at(r, c));
            int inside = 0;
            for (const auto& [pr, pc] : ann.points)
                if (pr >= r - half - 0.5 && pr < r + half + 0.5 && pc >= c - half - 0.5 &&
                    pc < c + half + 0.5)
                    ++inside;
            s.count_class = std::clamp(inside, 0, kCountClasses - 1);
            switch (ctx.kind) {
                case AuxKind::perspective:
                    s.aux = {pmap.at(r, 0)};
                    break;
                case AuxKind::angle_height:
                case AuxKind::kernel_radius:
                    s.aux = ctx.raw;
                    break;
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

}  // namespace acnn
