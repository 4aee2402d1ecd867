#include "acnn/scene_sim.hpp"

#include <algorithm>
#include <cmath>

#include "acnn/rng.hpp"

namespace acnn {

double blob_aspect_for_tilt(double tilt_deg) {
    // 3:1 (tall) at -10 degrees, 1:1 (round) at -65
    return 1.0 + 2.0 * (tilt_deg + 65.0) / 55.0;
}

void render_person_blob(Tensor& image, double row, double col, double m_value, double aspect,
                        double amplitude, double sigma_scale) {
    const int rows = image.dim(0), cols = image.dim(1);
    const double sigma_v = std::max(0.4, sigma_scale * m_value);
    const double sigma_c = std::max(0.4, sigma_v / aspect);
    const int r0 = std::max(0, static_cast<int>(std::floor(row - 4.0 * sigma_v)));
    const int r1 = std::min(rows - 1, static_cast<int>(std::ceil(row + 4.0 * sigma_v)));
    const int c0 = std::max(0, static_cast<int>(std::floor(col - 4.0 * sigma_c)));
    const int c1 = std::min(cols - 1, static_cast<int>(std::ceil(col + 4.0 * sigma_c)));
    for (int r = r0; r <= r1; ++r) {
        const double dv = (r - row) / sigma_v;
        for (int c = c0; c <= c1; ++c) {
            const double dh = (c - col) / sigma_c;
            const double v = image.at(r, c) + amplitude * std::exp(-0.5 * (dv * dv + dh * dh));
            image.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
}

namespace {

// smooth value noise: coarse seeded grid, bilinear upsample
void fill_background(Tensor& image, Rng& rng, double contrast) {
    const int rows = image.dim(0), cols = image.dim(1);
    const int cell = 16;
    const int gr = rows / cell + 2, gc = cols / cell + 2;
    std::vector<double> grid(static_cast<size_t>(gr) * gc);
    for (auto& v : grid) v = rng.uniform(-1.0, 1.0);
    for (int r = 0; r < rows; ++r) {
        const double fr = static_cast<double>(r) / cell;
        const int ir = static_cast<int>(fr);
        const double tr = fr - ir;
        for (int c = 0; c < cols; ++c) {
            const double fc = static_cast<double>(c) / cell;
            const int ic = static_cast<int>(fc);
            const double tc = fc - ic;
            const double v00 = grid[static_cast<size_t>(ir) * gc + ic];
            const double v01 = grid[static_cast<size_t>(ir) * gc + ic + 1];
            const double v10 = grid[static_cast<size_t>(ir + 1) * gc + ic];
            const double v11 = grid[static_cast<size_t>(ir + 1) * gc + ic + 1];
            const double v = (1 - tr) * ((1 - tc) * v00 + tc * v01) +
                             tr * ((1 - tc) * v10 + tc * v11);
            image.at(r, c) = static_cast<float>(0.25 + contrast * 0.10 * v);
        }
    }
    if (contrast > 0.0) {
        for (long long i = 0; i < image.numel(); ++i) {
            const double v = image[i] + contrast * 0.03 * rng.uniform(-1.0, 1.0);
            image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
}

}  // namespace

SynthScene synth_scene(double tilt_deg, double height_m, int n_people, uint64_t seed,
                       const SynthSceneOptions& opt) {
    if (tilt_deg < -65.0 || tilt_deg > -10.0)
        throw std::invalid_argument("synth_scene: tilt must be in [-65, -10] degrees");
    if (height_m < 2.2 || height_m > 16.0)
        throw std::invalid_argument("synth_scene: height must be in [2.2, 16.0] m");
    if (n_people < 0) throw std::invalid_argument("synth_scene: negative person count");

    SynthScene scene;
    scene.cam = CameraExtrinsics{tilt_deg, height_m, opt.fov_deg, opt.rows, opt.cols};
    scene.pmap = estimate_perspective_map(scene.cam);

    Rng rng(seed);
    scene.image = Tensor(Shape{opt.rows, opt.cols});
    fill_background(scene.image, rng, opt.texture_contrast);

    const double aspect = blob_aspect_for_tilt(tilt_deg);
    const double margin_r = opt.rows * 0.08, margin_c = opt.cols * 0.05;
    for (int i = 0; i < n_people; ++i) {
        const double row = rng.uniform(margin_r, opt.rows - 1 - margin_r);
        const double col = rng.uniform(margin_c, opt.cols - 1 - margin_c);
        const double m = scene.pmap.at(static_cast<int>(row), 0);
        const double amp = rng.uniform(0.45, 0.70);
        render_person_blob(scene.image, row, col, m, aspect, amp, opt.blob_sigma_per_m);
        scene.ann.points.emplace_back(row, col);
    }
    scene.ann.roi = Mask::full(opt.rows, opt.cols);
    return scene;
}

}  // namespace acnn
