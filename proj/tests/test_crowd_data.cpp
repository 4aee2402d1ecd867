#include <doctest.h>

#include <cmath>

#include "acnn/density.hpp"
#include "acnn/metrics.hpp"
#include "acnn/rng.hpp"
#include "acnn/sampling.hpp"
#include "acnn/scene_sim.hpp"

using namespace acnn;

namespace {

PerspectiveMap constant_pmap(int rows, int cols, double value) {
    return PerspectiveMap(rows, cols, std::vector<double>(static_cast<size_t>(rows), value));
}

// second-moment blob size estimate over a flat background
void measure_blob(const Tensor& image, double bg, double* sigma_v, double* sigma_c) {
    double mass = 0.0, mr = 0.0, mc = 0.0;
    const int rows = image.dim(0), cols = image.dim(1);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double w = std::max(0.0, static_cast<double>(image.at(r, c)) - bg);
            mass += w;
            mr += w * r;
            mc += w * c;
        }
    mr /= mass;
    mc /= mass;
    double vr = 0.0, vc = 0.0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double w = std::max(0.0, static_cast<double>(image.at(r, c)) - bg);
            vr += w * (r - mr) * (r - mr);
            vc += w * (c - mc) * (c - mc);
        }
    *sigma_v = std::sqrt(vr / mass);
    *sigma_c = std::sqrt(vc / mass);
}

}  // namespace

TEST_SUITE("density_map") {
    TEST_CASE("empty annotation gives an all-zero map") {
        Annotation ann;
        auto dmap = make_density_map(ann, constant_pmap(20, 30, 10.0));
        for (long long i = 0; i < dmap.numel(); ++i) CHECK(dmap[i] == 0.0);
    }

    TEST_CASE("single person peak matches the Gaussian normalization") {
        // M=10 -> sigma_h=2, sigma_v=5; untruncated peak 1/(2 pi 2 5)
        Annotation ann;
        ann.points = {{40.0, 40.0}};
        auto dmap = make_density_map(ann, constant_pmap(81, 81, 10.0));
        const double peak = dmap.at(40, 40);
        CHECK(peak == doctest::Approx(1.0 / (2.0 * 3.14159265358979 * 2.0 * 5.0)).epsilon(2e-3));
    }

    TEST_CASE("map sum equals the person count within 1e-6") {
        Rng rng(21);
        for (int trial = 0; trial < 5; ++trial) {
            Annotation ann;
            const int n = 3 + trial * 7;
            for (int i = 0; i < n; ++i)
                ann.points.emplace_back(rng.uniform(0.0, 59.9), rng.uniform(0.0, 79.9));
            auto dmap = make_density_map(ann, constant_pmap(60, 80, 8.0));
            double sum = 0.0;
            for (long long i = 0; i < dmap.numel(); ++i) sum += dmap[i];
            CHECK(std::abs(sum - n) < 1e-6);
        }
    }

    TEST_CASE("points outside the image are rejected") {
        Annotation ann;
        ann.points = {{100.0, 5.0}};
        CHECK_THROWS_AS(make_density_map(ann, constant_pmap(50, 50, 10.0)),
                        std::invalid_argument);
    }
}

TEST_SUITE("count_in_roi") {
    TEST_CASE("full, empty and disjoint masks") {
        Rng rng(22);
        Annotation ann;
        for (int i = 0; i < 12; ++i)
            ann.points.emplace_back(rng.uniform(2.0, 47.9), rng.uniform(2.0, 63.9));
        auto dmap = make_density_map(ann, constant_pmap(48, 64, 6.0));

        const Mask full = Mask::full(48, 64);
        const double total = count_in_roi(dmap, full);
        CHECK(std::abs(total - 12.0) < 1e-6);
        CHECK(count_in_roi(dmap, Mask::none(48, 64)) == 0.0);

        // exact additivity over a partition (density quantum grid)
        Mask top = Mask::none(48, 64), bottom = Mask::none(48, 64);
        for (int r = 0; r < 48; ++r)
            for (int c = 0; c < 64; ++c)
                (r < 17 ? top : bottom).set(r, c, true);
        CHECK(count_in_roi(dmap, top) + count_in_roi(dmap, bottom) == total);

        // interleaved partition, exact as well
        Mask even = Mask::none(48, 64), odd = Mask::none(48, 64);
        for (int r = 0; r < 48; ++r)
            for (int c = 0; c < 64; ++c)
                ((r + c) % 2 == 0 ? even : odd).set(r, c, true);
        CHECK(count_in_roi(dmap, even) + count_in_roi(dmap, odd) == total);

        CHECK_THROWS_AS(count_in_roi(dmap, Mask::full(10, 10)), std::invalid_argument);
    }
}

TEST_SUITE("patch_sampling") {
    TEST_CASE("empty region patches have zero target and class zero") {
        Tensor image(Shape{64, 64}, 0.3f);
        TensorD dmap(Shape{64, 64});
        Annotation ann;
        SceneContext ctx{AuxKind::perspective, {}};
        auto pmap = constant_pmap(64, 64, 9.0);
        auto samples = sample_patches(image, dmap, ann, ctx, pmap, {33, 16, true}, 5);
        CHECK(!samples.empty());
        for (const auto& s : samples) {
            CHECK(s.target == 0.0f);
            CHECK(s.count_class == 0);
            CHECK(s.patch.shape() == Shape{1, 33, 33});
            CHECK(s.aux.size() == 1);
            CHECK(s.aux[0] == 9.0);
        }
    }

    TEST_CASE("count classes clamp into 15 bins") {
        Tensor image(Shape{40, 40}, 0.5f);
        TensorD dmap(Shape{40, 40});
        Annotation ann;
        for (int i = 0; i < 40; ++i) ann.points.emplace_back(20.0, 20.0);  // dense cluster
        SceneContext ctx{AuxKind::perspective, {}};
        auto pmap = constant_pmap(40, 40, 9.0);
        auto samples = sample_patches(image, dmap, ann, ctx, pmap, {33, 20, false}, 5);
        int max_class = 0;
        for (const auto& s : samples) max_class = std::max(max_class, s.count_class);
        CHECK(max_class == kCountClasses - 1);  // 14, the >=14 bin
    }

    TEST_CASE("same seed reproduces the sample stream") {
        SynthScene scene = synth_scene(-35.0, 8.0, 10, 77);
        auto dmap = make_density_map(scene.ann, scene.pmap);
        SceneContext ctx{AuxKind::perspective, {}};
        auto a = sample_patches(scene.image, dmap, scene.ann, ctx, scene.pmap, {33, 16, true}, 9);
        auto b = sample_patches(scene.image, dmap, scene.ann, ctx, scene.pmap, {33, 16, true}, 9);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].patch == b[i].patch);
            CHECK(a[i].target == b[i].target);
            CHECK(a[i].count_class == b[i].count_class);
            CHECK(a[i].aux == b[i].aux);
        }
    }

    TEST_CASE("degenerate grid spec rejected") {
        Tensor image(Shape{40, 40});
        TensorD dmap(Shape{40, 40});
        Annotation ann;
        SceneContext ctx{AuxKind::perspective, {}};
        auto pmap = constant_pmap(40, 40, 9.0);
        CHECK_THROWS_AS(sample_patches(image, dmap, ann, ctx, pmap, {33, 0, false}, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(sample_patches(image, dmap, ann, ctx, pmap, {32, 16, false}, 1),
                        std::invalid_argument);
    }
}

TEST_SUITE("aux_normalization") {
    TEST_CASE("training values always land in [-1.5, 1.5]") {
        // uniform grid: plain z-score would exceed 1.5 at the extremes
        std::vector<std::vector<double>> values;
        for (int i = 0; i <= 20; ++i) values.push_back({5.0 + i});
        auto norm = AuxNormalization::fit(AuxKind::perspective, values);
        for (const auto& v : values) {
            const double z = norm.normalize(v)[0];
            CHECK(z >= -1.5);
            CHECK(z <= 1.5);
        }
        CHECK(std::abs(norm.normalize({15.0})[0]) < 1e-12);  // the mean maps to 0
    }

    TEST_CASE("two-component normalization is per component") {
        std::vector<std::vector<double>> values = {{-10, 2.2}, {-30, 8.0}, {-50, 16.0}};
        auto norm = AuxNormalization::fit(AuxKind::angle_height, values);
        auto z = norm.normalize({-30, 8.0});
        CHECK(z.size() == 2);
        CHECK(std::abs(z[0]) < 0.5);
    }
}

TEST_SUITE("scene_sim") {
    TEST_CASE("no people means background only") {
        auto scene = synth_scene(-30.0, 8.0, 0, 3);
        CHECK(scene.ann.points.empty());
        CHECK(scene.image.dim(0) == 128);
        for (long long i = 0; i < scene.image.numel(); ++i) {
            CHECK(scene.image[i] >= 0.0f);
            CHECK(scene.image[i] <= 1.0f);
        }
    }

    TEST_CASE("out-of-range contexts rejected") {
        CHECK_THROWS_AS(synth_scene(-70.0, 8.0, 3, 1), std::invalid_argument);
        CHECK_THROWS_AS(synth_scene(-5.0, 8.0, 3, 1), std::invalid_argument);
        CHECK_THROWS_AS(synth_scene(-30.0, 1.0, 3, 1), std::invalid_argument);
        CHECK_THROWS_AS(synth_scene(-30.0, 20.0, 3, 1), std::invalid_argument);
    }

    TEST_CASE("blob size follows the perspective value") {
        // render the same person at two rows on a flat background
        SynthSceneOptions opt;
        opt.texture_contrast = 0.0;
        CameraExtrinsics cam{-35.0, 8.0, opt.fov_deg, opt.rows, opt.cols};
        auto pmap = estimate_perspective_map(cam);
        const int r_hi = 30, r_lo = 100;

        Tensor img1(Shape{opt.rows, opt.cols}, 0.25f);
        render_person_blob(img1, r_hi, 80.0, pmap.at(r_hi, 0), 2.0, 0.6, opt.blob_sigma_per_m);
        Tensor img2(Shape{opt.rows, opt.cols}, 0.25f);
        render_person_blob(img2, r_lo, 80.0, pmap.at(r_lo, 0), 2.0, 0.6, opt.blob_sigma_per_m);

        double sv1, sc1, sv2, sc2;
        measure_blob(img1, 0.25, &sv1, &sc1);
        measure_blob(img2, 0.25, &sv2, &sc2);
        const double m_ratio = pmap.at(r_lo, 0) / pmap.at(r_hi, 0);
        CHECK(m_ratio > 1.0);  // lower row is closer, bigger
        CHECK(sv2 / sv1 == doctest::Approx(m_ratio).epsilon(0.10));
    }

    TEST_CASE("blob aspect interpolates 3:1 at -10 down to 1:1 at -65") {
        CHECK(blob_aspect_for_tilt(-10.0) == doctest::Approx(3.0));
        CHECK(blob_aspect_for_tilt(-65.0) == doctest::Approx(1.0));

        SynthSceneOptions opt;
        opt.texture_contrast = 0.0;
        for (double tilt : {-65.0, -10.0}) {
            Tensor img(Shape{opt.rows, opt.cols}, 0.25f);
            // a mid-image blob big enough to measure
            render_person_blob(img, 64.0, 80.0, 30.0, blob_aspect_for_tilt(tilt), 0.6,
                               opt.blob_sigma_per_m);
            double sv, sc;
            measure_blob(img, 0.25, &sv, &sc);
            const double aspect = sv / sc;
            if (tilt == -65.0)
                CHECK(aspect == doctest::Approx(1.0).epsilon(0.10));
            else
                CHECK(aspect == doctest::Approx(3.0).epsilon(0.10));
        }
    }

    TEST_CASE("deterministic given the seed") {
        auto a = synth_scene(-27.0, 8.0, 12, 123);
        auto b = synth_scene(-27.0, 8.0, 12, 123);
        CHECK(a.image == b.image);
        CHECK(a.ann.points == b.ann.points);
    }
}

TEST_SUITE("mae") {
    TEST_CASE("basic values and errors") {
        CHECK(evaluate_mae({3, 4, 5}, {3, 4, 5}) == 0.0);
        CHECK(evaluate_mae({4, 5, 6}, {3, 4, 5}) == doctest::Approx(1.0));
        CHECK_THROWS_AS(evaluate_mae({}, {}), std::invalid_argument);
        CHECK_THROWS_AS(evaluate_mae({1.0}, {1.0, 2.0}), std::invalid_argument);
    }
}
