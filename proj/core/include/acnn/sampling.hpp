#pragma once

#include <string>
#include <vector>

#include "acnn/density.hpp"
#include "acnn/perspective.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

enum class AuxKind { perspective, angle_height, kernel_radius };

std::string to_string(AuxKind kind);
AuxKind aux_kind_from_string(const std::string& s);

inline int aux_dimension(AuxKind kind) { return kind == AuxKind::angle_height ? 2 : 1; }

// Scene-level side information: the raw auxiliary values fed to the FMN
// after normalization.
struct SceneContext {
    AuxKind kind = AuxKind::perspective;
    std::vector<double> raw;  // 1 value, or 2 for angle_height
};

// Per-component affine normalization fitted on training contexts. The scale
// is widened beyond a plain z-score when needed so every training value
// lands in [-1.5, 1.5]; inference values are clamped to that interval.
struct AuxNormalization {
    struct Component {
        double center = 0.0;
        double scale = 1.0;
    };
    AuxKind kind = AuxKind::perspective;
    std::vector<Component> components;

    static AuxNormalization fit(AuxKind kind, const std::vector<std::vector<double>>& values);
    std::vector<double> normalize(const std::vector<double>& raw) const;
};

// Count classes: integer bins 0..13 plus a >=14 bin.
constexpr int kCountClasses = 15;

struct PatchSample {
    Tensor patch;             // [1,s,s], grayscale in [0,1]
    std::vector<double> aux;  // raw side information for this patch
    float target = 0.0f;      // density value at the patch center
    int count_class = 0;      // 0..14
};

struct PatchGridSpec {
    int patch_size = 33;  // odd
    int stride = 16;
    bool jitter = true;
};

// Patch centers walk a stride grid (plus seeded jitter); borders are handled
// by symmetric reflection. The regression target is the density at the
// center pixel; the class label is the clamped number of annotated people
// inside the patch. Deterministic for a given seed.
std::vector<PatchSample> sample_patches(const Tensor& image, const TensorD& dmap,
                                        const Annotation& ann, const SceneContext& ctx,
                                        const PerspectiveMap& pmap, const PatchGridSpec& grid,
                                        uint64_t seed);

// Reflected image lookup used by both patch sampling and whole-image
// prediction.
float image_at_reflected(const Tensor& image, int r, int c);

Tensor extract_patch(const Tensor& image, int center_row, int center_col, int patch_size);

}  // namespace acnn
