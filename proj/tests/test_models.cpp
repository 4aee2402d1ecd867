#include <doctest.h>

#include <map>

#include "acnn/losses.hpp"
#include "acnn/model.hpp"
#include "acnn/scene_sim.hpp"
#include "acnn/trainer.hpp"

using namespace acnn;

namespace {

std::map<std::string, long long> row_map(const std::vector<ParamRow>& rows) {
    std::map<std::string, long long> m;
    for (const auto& r : rows) m[r.layer] = r.params;
    return m;
}

}  // namespace

TEST_SUITE("model_specs") {
    TEST_CASE("family lookups") {
        CHECK(to_string(ModelFamily::acnn_v3) == "acnn-v3");
        CHECK(model_family_from_string("cnn64") == ModelFamily::cnn64);
        CHECK_THROWS_AS(model_family_from_string("mcnn"), std::invalid_argument);
    }

    TEST_CASE("shape algebra reproduces the flatten widths") {
        auto v3 = ModelSpec::for_family(ModelFamily::acnn_v3);
        CHECK(v3.conv_output_spatial() == 9);
        CHECK(v3.flatten_size() == 2592);
        auto cnn = ModelSpec::for_family(ModelFamily::cnn64);
        CHECK(cnn.flatten_size() == 5184);
        auto ah = ModelSpec::for_family(ModelFamily::acnn_ah);
        CHECK(ah.patch_size == 65);
        CHECK(ah.conv_output_spatial() == 9);
        CHECK(ah.flatten_size() == 2592);  // same conv-stage output as the 33x33 models
    }

    TEST_CASE("variant stage wiring") {
        auto v1 = ModelSpec::for_family(ModelFamily::acnn_v1);
        CHECK(v1.stages[0].adaptive);
        CHECK_FALSE(v1.stages[1].adaptive);
        CHECK(v1.stages[0].filters == 64);
        auto v2 = ModelSpec::for_family(ModelFamily::acnn_v2);
        CHECK_FALSE(v2.stages[0].adaptive);
        CHECK(v2.stages[1].adaptive);
        CHECK(v2.stages[1].filters == 30);
        auto ah = ModelSpec::for_family(ModelFamily::acnn_ah);
        CHECK(ah.stages.size() == 3);
        CHECK(ah.stages[0].filters == 40);
        CHECK(ah.stages[2].filters == 32);
        CHECK(aux_dimension(ah.aux) == 2);
    }
}

TEST_SUITE("param_accounting") {
    TEST_CASE("cnn64 per-layer table") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::cnn64), 1);
        auto rows = row_map(model.param_table());
        CHECK(rows.at("conv1") == 1664);
        CHECK(rows.at("conv2") == 102464);
        CHECK(rows.at("FC1") == 2654720);
        CHECK(rows.at("FC2") == 41553);
        CHECK(rows.at("FC3") == 82);
        CHECK(rows.at("FC4") == 419985);
        CHECK(rows.at("FC5") == 1230);  // 15 classes
        auto report = count_params(model);
        CHECK(report.total == 3221698);
        CHECK(report.total_with_16_class_head == 3221780);
    }

    TEST_CASE("acnn-v3 per-layer table") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 1);
        auto rows = row_map(model.param_table());
        CHECK(rows.at("FMN1") == 34572);
        CHECK(rows.at("conv1") == 0);
        CHECK(rows.at("FMN2") == 1051372);
        CHECK(rows.at("conv2") == 0);
        CHECK(rows.at("FC1") == 1327616);
        CHECK(rows.at("FC2") == 41553);
        CHECK(rows.at("FC3") == 82);
        CHECK(rows.at("FC4") == 210033);
        auto report = count_params(model);
        CHECK(report.total == 2666458);
        CHECK(report.total_with_16_class_head == 2666540);
    }

    TEST_CASE("v1 and v2 FMN widths follow their filter counts") {
        CountingModel<float> v1;
        v1.build(ModelSpec::for_family(ModelFamily::acnn_v1), 1);
        CHECK(v1.stages[0].ad.fmn.out.flat_len() == 1664);
        CountingModel<float> v2;
        v2.build(ModelSpec::for_family(ModelFamily::acnn_v2), 1);
        CHECK(v2.stages[1].ad.fmn.out.flat_len() == 48030);
    }

    TEST_CASE("parameter parity between acnn-v3 and cnn64 within 20%") {
        CountingModel<float> v3, cnn;
        v3.build(ModelSpec::for_family(ModelFamily::acnn_v3), 1);
        cnn.build(ModelSpec::for_family(ModelFamily::cnn64), 1);
        const double a = static_cast<double>(v3.param_total());
        const double b = static_cast<double>(cnn.param_total());
        CHECK(std::abs(a - b) / b < 0.2);
    }
}

TEST_SUITE("counting_model") {
    TEST_CASE("forward output shapes and finiteness") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 3);
        Tensor patch(Shape{1, 1, 33, 33}, 0.4f);
        auto out = model.forward(patch, {0.2}, nullptr);
        CHECK(out.logits.shape() == Shape{1, 15});
        CHECK(std::isfinite(out.density));
        CHECK(out.logits.all_finite());
        CHECK_THROWS_AS(model.forward(Tensor(Shape{1, 1, 17, 17}), {0.2}, nullptr),
                        std::invalid_argument);
    }

    TEST_CASE("multi-task gradient flow switches with lambda") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 4);

        auto grads_for_lambda = [&](double lambda) {
            auto grads = model.make_grads();
            // a small mixed-class batch
            for (int k = 0; k < 4; ++k) {
                Tensor patch(Shape{1, 1, 33, 33}, 0.1f * (k + 1));
                typename CountingModel<float>::Cache cache;
                auto out = model.forward(patch, {0.1 * k - 0.2}, &cache);
                Tensor pred(Shape{1, 1});
                pred[0] = out.density;
                Tensor target(Shape{1, 1});
                target[0] = 0.01f * k;
                auto reg = loss_mse(pred, target);
                auto cls = loss_softmax_xent(out.logits, {k % 3});
                Tensor d_logits(out.logits.shape());
                for (long long i = 0; i < d_logits.numel(); ++i)
                    d_logits[i] = static_cast<float>(lambda) * cls.grad[i];
                model.backward_into(cache, reg.grad[0], d_logits, grads);
            }
            return grads;
        };

        // slots: fmn1 (3 stages), fmn2 (3 stages), fc1..fc5 -> fc4 at 9, fc5 at 10
        auto with = grads_for_lambda(0.1);
        auto without = grads_for_lambda(0.0);
        double with_fc45 = 0.0, without_fc45 = 0.0;
        for (int slot : {9, 10}) {
            for (long long i = 0; i < with.gw[slot].numel(); ++i)
                with_fc45 += std::abs(with.gw[slot][i]);
            for (long long i = 0; i < without.gw[slot].numel(); ++i)
                without_fc45 += std::abs(without.gw[slot][i]);
        }
        CHECK(with_fc45 > 0.0);
        CHECK(without_fc45 == 0.0);
    }

    TEST_CASE("lambda zero still trains the regression head") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 4);
        auto grads = model.make_grads();
        Tensor patch(Shape{1, 1, 33, 33}, 0.3f);
        typename CountingModel<float>::Cache cache;
        auto out = model.forward(patch, {0.0}, &cache);
        Tensor d_logits(out.logits.shape());  // lambda = 0
        model.backward_into(cache, 1.0f, d_logits, grads);
        double fc1_mag = 0.0;
        for (long long i = 0; i < grads.gw[6].numel(); ++i) fc1_mag += std::abs(grads.gw[6][i]);
        CHECK(fc1_mag > 0.0);
    }
}

TEST_SUITE("training_determinism") {
    TEST_CASE("seed replay gives identical loss curves and parameters") {
        // tiny dataset, a few steps; bitwise comparison
        SynthScene scene = synth_scene(-30.0, 8.0, 14, 5);
        auto dmap = make_density_map(scene.ann, scene.pmap);
        SceneContext ctx{AuxKind::perspective, {}};
        auto samples =
            sample_patches(scene.image, dmap, scene.ann, ctx, scene.pmap, {33, 24, true}, 17);
        REQUIRE(samples.size() >= 16);

        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 16;
        cfg.seed = 99;
        cfg.patience = 99;

        auto run = [&] {
            CountingModel<float> model;
            model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 11);
            auto curves = train_counting(model, samples, {}, cfg);
            std::vector<float> flat;
            model.visit_layers([&](const std::string&, const LayerParams<float>& lp) {
                for (long long i = 0; i < lp.w.numel(); ++i) flat.push_back(lp.w[i]);
                for (long long i = 0; i < lp.b.numel(); ++i) flat.push_back(lp.b[i]);
            });
            return std::make_pair(curves.train_loss, flat);
        };
        auto a = run();
        auto b = run();
        CHECK(a.first == b.first);   // bit-identical loss curves
        CHECK(a.second == b.second); // bit-identical parameters
    }
}

TEST_SUITE("predict_count") {
    TEST_CASE("untrained model is rejected") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 2);
        SynthScene scene = synth_scene(-30.0, 8.0, 5, 6);
        SceneContext ctx{AuxKind::perspective, {}};
        CHECK_THROWS_AS(predict_count(model, scene.image, scene.pmap, ctx, 4,
                                      Mask::full(128, 160)),
                        ContractViolation);
    }

    TEST_CASE("empty roi gives zero") {
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 2);
        model.trained = true;  // probing the grid logic only
        SynthScene scene = synth_scene(-30.0, 8.0, 5, 6);
        SceneContext ctx{AuxKind::perspective, {}};
        CHECK(predict_count(model, scene.image, scene.pmap, ctx, 4, Mask::none(128, 160)) ==
              0.0);
    }

    TEST_CASE("perfect-oracle count estimates") {
        SynthScene scene = synth_scene(-30.0, 8.0, 18, 44);
        auto dmap = make_density_map(scene.ann, scene.pmap);
        const Mask roi = Mask::full(dmap.dim(0), dmap.dim(1));
        auto oracle = [&](int r, int c) { return dmap.at(r, c); };

        // stride 1 visits every pixel: exact count
        const double full = strided_count_estimate(dmap.dim(0), dmap.dim(1), 1, roi, oracle);
        CHECK(std::abs(full - 18.0) < 1e-6);

        // stride 4 on smooth synthetic density: within 5%
        const double coarse = strided_count_estimate(dmap.dim(0), dmap.dim(1), 4, roi, oracle);
        CHECK(std::abs(coarse - 18.0) / 18.0 < 0.05);
    }

    TEST_CASE("regional counts sum exactly to the full count") {
        SynthScene scene = synth_scene(-35.0, 10.0, 9, 45);
        auto dmap = make_density_map(scene.ann, scene.pmap);
        const int rows = dmap.dim(0), cols = dmap.dim(1);
        auto oracle = [&](int r, int c) { return dmap.at(r, c); };

        const double full =
            strided_count_estimate(rows, cols, 4, Mask::full(rows, cols), oracle);
        double parts = 0.0;
        for (int band = 0; band < 3; ++band) {
            Mask region = Mask::none(rows, cols);
            for (int r = band * rows / 3; r < (band + 1) * rows / 3; ++r)
                for (int c = 0; c < cols; ++c) region.set(r, c, true);
            parts += strided_count_estimate(rows, cols, 4, region, oracle);
        }
        CHECK(parts == full);  // exact: predictions snap to a binary quantum
    }
}
