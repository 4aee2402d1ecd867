#include <doctest.h>

#include <filesystem>
#include <unistd.h>
#include <fstream>

#include "acnn/checkpoint.hpp"
#include "acnn/dataset.hpp"
#include "acnn/image_io.hpp"

using namespace acnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("acnn_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_SUITE("pgm") {
    TEST_CASE("8-bit and 16-bit round trips") {
        TempDir tmp;
        Tensor img(Shape{9, 13});
        for (long long i = 0; i < img.numel(); ++i)
            img[i] = static_cast<float>(i) / static_cast<float>(img.numel());
        for (int maxval : {255, 65535}) {
            const std::string path = tmp.file("img_" + std::to_string(maxval) + ".pgm");
            write_pgm(path, img, maxval);
            Tensor back = read_pgm(path);
            CHECK(back.shape() == img.shape());
            for (long long i = 0; i < img.numel(); ++i)
                CHECK(back[i] == doctest::Approx(img[i]).epsilon(2.0 / maxval));
        }
    }

    TEST_CASE("mask round trip") {
        TempDir tmp;
        Mask m = Mask::none(6, 7);
        m.set(2, 3, true);
        m.set(5, 6, true);
        write_mask(tmp.file("m.pgm"), m);
        Mask back = read_mask(tmp.file("m.pgm"));
        CHECK(back.rows == 6);
        CHECK(back.on == m.on);
    }

    TEST_CASE("missing file raises IoError") {
        CHECK_THROWS_AS(read_pgm("/nonexistent/nope.pgm"), IoError);
    }
}

TEST_SUITE("csv") {
    TEST_CASE("comments skipped, columns located") {
        TempDir tmp;
        write_text_file(tmp.file("t.csv"), "# config echo\na,b,c\n1,2,3\n4,5,6\n");
        auto table = read_csv(tmp.file("t.csv"));
        CHECK(table.header.size() == 3);
        CHECK(table.column("b") == 1);
        CHECK(table.rows.size() == 2);
        CHECK(table.rows[1][2] == "6");
        CHECK_THROWS_AS(table.column("missing"), IoError);
    }
}

TEST_SUITE("checkpoint") {
    TEST_CASE("counting model round trip preserves forward outputs bit-exactly") {
        TempDir tmp;
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 21);
        model.trained = true;
        model.aux_norm.components[0] = {12.0, 4.0};
        save_checkpoint(model, tmp.file("m.ckpt"));

        auto loaded = load_counting_checkpoint(tmp.file("m.ckpt"));
        CHECK(loaded.trained);
        CHECK(loaded.aux_norm.components[0].center == 12.0);

        Tensor patch(Shape{1, 1, 33, 33});
        for (long long i = 0; i < patch.numel(); ++i)
            patch[i] = static_cast<float>((i % 97) / 97.0);
        for (double aux : {-1.0, 0.0, 1.2}) {
            auto a = model.forward(patch, {aux}, nullptr);
            auto b = loaded.forward(patch, {aux}, nullptr);
            CHECK(a.density == b.density);  // bitwise
            CHECK(a.logits == b.logits);
        }

        // identical parameter accounting after the round trip
        auto ra = count_params(model);
        auto rb = count_params(loaded);
        CHECK(ra.total == rb.total);
        REQUIRE(ra.rows.size() == rb.rows.size());
        for (size_t i = 0; i < ra.rows.size(); ++i) {
            CHECK(ra.rows[i].layer == rb.rows[i].layer);
            CHECK(ra.rows[i].params == rb.rows[i].params);
        }
    }

    TEST_CASE("save-load-save produces a byte-identical blob") {
        TempDir tmp;
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v1), 5);
        save_checkpoint(model, tmp.file("a.ckpt"));
        auto loaded = load_counting_checkpoint(tmp.file("a.ckpt"));
        save_checkpoint(loaded, tmp.file("b.ckpt"));
        CHECK(read_text_file(tmp.file("a.ckpt.blob")) ==
              read_text_file(tmp.file("b.ckpt.blob")));
    }

    TEST_CASE("deconv model round trip preserves inference") {
        TempDir tmp;
        DeconvModel<float> model;
        model.build(DeconvSpec::acnn(15), 8);
        // one training-mode pass to populate batch statistics
        std::vector<Tensor> images(2, Tensor(Shape{24, 24}, 0.4f));
        images[1].fill(0.6f);
        std::vector<std::vector<double>> aux(2, std::vector<double>{0.1});
        model.forward_batch(images, aux, true, nullptr);
        model.trained = true;
        save_checkpoint(model, tmp.file("d.ckpt"));

        auto loaded = load_deconv_checkpoint(tmp.file("d.ckpt"));
        Tensor probe(Shape{24, 24}, 0.5f);
        CHECK(model.infer_image(probe, {0.1}) == loaded.infer_image(probe, {0.1}));
    }

    TEST_CASE("corrupted blob is rejected by the checksum") {
        TempDir tmp;
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 3);
        save_checkpoint(model, tmp.file("c.ckpt"));
        // flip one byte mid-blob
        std::string blob = read_text_file(tmp.file("c.ckpt.blob"));
        blob[blob.size() / 2] ^= 0x40;
        write_text_file(tmp.file("c.ckpt.blob"), blob);
        CHECK_THROWS_AS(load_counting_checkpoint(tmp.file("c.ckpt")), CheckpointError);
    }

    TEST_CASE("unknown version and missing blob are explicit errors") {
        TempDir tmp;
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 3);
        save_checkpoint(model, tmp.file("v.ckpt"));
        std::string manifest = read_text_file(tmp.file("v.ckpt"));
        const auto pos = manifest.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        manifest.replace(pos, 19, "\"format_version\": 9");
        write_text_file(tmp.file("v.ckpt"), manifest);
        CHECK_THROWS_WITH_AS(load_counting_checkpoint(tmp.file("v.ckpt")),
                             doctest::Contains("version"), CheckpointError);

        save_checkpoint(model, tmp.file("nb.ckpt"));
        fs::remove(tmp.file("nb.ckpt.blob"));
        CHECK_THROWS_WITH_AS(load_counting_checkpoint(tmp.file("nb.ckpt")),
                             doctest::Contains("blob"), CheckpointError);
    }

    TEST_CASE("path collision without force") {
        TempDir tmp;
        CountingModel<float> model;
        model.build(ModelSpec::for_family(ModelFamily::acnn_v3), 3);
        save_checkpoint(model, tmp.file("x.ckpt"));
        CHECK_THROWS_AS(save_checkpoint(model, tmp.file("x.ckpt")), IoError);
        save_checkpoint(model, tmp.file("x.ckpt"), true);  // --force path
    }

    TEST_CASE("default-constructed model saves an empty blob") {
        TempDir tmp;
        CountingModel<float> model;  // no layers built
        save_checkpoint(model, tmp.file("e.ckpt"));
        CHECK(read_text_file(tmp.file("e.ckpt.blob")).empty());
        auto loaded = load_counting_checkpoint(tmp.file("e.ckpt"));
        CHECK_FALSE(loaded.trained);
        CHECK(checkpoint_kind(tmp.file("e.ckpt")) == "counting");
    }
}

TEST_SUITE("datasets") {
    TEST_CASE("counting dataset round trip") {
        TempDir tmp;
        std::vector<SceneData> scenes;
        for (int i = 0; i < 3; ++i)
            scenes.push_back(scene_data_from_synth(synth_scene(-30.0 - i * 5, 8.0, 6 + i, 50 + i),
                                                   "scene_" + std::to_string(i),
                                                   AuxKind::perspective));
        save_counting_dataset(tmp.file("data"), scenes);
        auto loaded = load_counting_dataset(tmp.file("data"), AuxKind::perspective);
        REQUIRE(loaded.size() == 3);
        CHECK(loaded[1].id == "scene_1");
        CHECK(loaded[1].ann.points.size() == 7);
        CHECK(loaded[1].cam.tilt_deg == doctest::Approx(-35.0));
        // density maps rebuilt from the stored annotations conserve count
        double sum = 0.0;
        for (long long i = 0; i < loaded[1].dmap.numel(); ++i) sum += loaded[1].dmap[i];
        CHECK(std::abs(sum - 7.0) < 1e-6);
    }

    TEST_CASE("deconv corpus round trip with regenerable corruption") {
        TempDir tmp;
        auto images = gen_textures(6, 32, 3);
        CorruptionConfig cfg{{3, 5}, 0.01, 11};
        save_deconv_corpus(tmp.file("corpus"), images, 3, 1, cfg);
        auto corpus = load_deconv_corpus(tmp.file("corpus"));
        CHECK(corpus.train.size() == 3);
        CHECK(corpus.val.size() == 1);
        CHECK(corpus.test.size() == 2);
        CHECK(corpus.radii == std::vector<int>{3, 5});
        CHECK(corpus.corruption.sigma == doctest::Approx(0.01));

        // stored corrupted image vs regenerated-from-metadata: same pipeline
        Tensor stored = load_or_make_corrupted(tmp.file("corpus"), corpus, corpus.train_ids[0],
                                               corpus.train[0], 3);
        fs::remove(fs::path(tmp.file("corpus")) / "corrupt" / "r3" /
                   (corpus.train_ids[0] + ".pgm"));
        Tensor regen = load_or_make_corrupted(tmp.file("corpus"), corpus, corpus.train_ids[0],
                                              corpus.train[0], 3);
        // stored copy went through 16-bit quantization; allow that much
        for (long long i = 0; i < stored.numel(); ++i)
            CHECK(std::abs(stored[i] - regen[i]) < 3e-4);
    }
}
