#pragma once

#include "acnn/density.hpp"
#include "acnn/perspective.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// Stand-in for a real multi-viewpoint capture: bright anisotropic person
// blobs on a textured ground. Blob size follows the perspective value at the
// blob's row; blob aspect (height:width) follows the tilt angle, 3:1 side
// view at -10 degrees down to 1:1 top view at -65 degrees.

struct SynthSceneOptions {
    int rows = 128;
    int cols = 160;
    double fov_deg = 16.0;
    double texture_contrast = 1.0;  // 0 gives a flat background
    double blob_sigma_per_m = 0.2;  // vertical blob sigma = this * M(row)
};

struct SynthScene {
    Tensor image;  // [H,W], values in [0,1]
    Annotation ann;
    CameraExtrinsics cam;
    PerspectiveMap pmap;
};

double blob_aspect_for_tilt(double tilt_deg);

// Adds one Gaussian blob; sigma_v = sigma_scale * m_value, sigma_c =
// sigma_v / aspect. Used by synth_scene and directly by size measurements.
void render_person_blob(Tensor& image, double row, double col, double m_value, double aspect,
                        double amplitude, double sigma_scale);

SynthScene synth_scene(double tilt_deg, double height_m, int n_people, uint64_t seed,
                       const SynthSceneOptions& opt = {});

}  // namespace acnn
