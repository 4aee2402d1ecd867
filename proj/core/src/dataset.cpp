#include "acnn/dataset.hpp"

#include <filesystem>
#include <sstream>

#include "acnn/deconv.hpp"
#include "acnn/image_io.hpp"

namespace fs = std::filesystem;

namespace acnn {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

SceneData scene_data_from_synth(const SynthScene& scene, const std::string& id, AuxKind aux) {
    SceneData data;
    data.id = id;
    data.image = scene.image;
    data.pmap = scene.pmap;
    data.ann = scene.ann;
    data.cam = scene.cam;
    data.dmap = make_density_map(scene.ann, scene.pmap);
    data.ctx.kind = aux;
    if (aux == AuxKind::angle_height)
        data.ctx.raw = {scene.cam.tilt_deg, scene.cam.height_m};
    else
        data.ctx.raw = {scene.pmap.row_value(scene.pmap.rows() / 2)};
    return data;
}

void save_counting_dataset(const std::string& dir, const std::vector<SceneData>& scenes) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "roi");

    std::ostringstream scenes_csv, ann_csv;
    scenes_csv << "scene,angle_deg,height_m,fov_deg\n";
    ann_csv << "image,row,col\n";
    for (const auto& s : scenes) {
        scenes_csv << s.id << "," << format_double(s.cam.tilt_deg) << ","
                   << format_double(s.cam.height_m) << "," << format_double(s.cam.fov_deg)
                   << "\n";
        for (const auto& [r, c] : s.ann.points)
            ann_csv << s.id << "," << format_double(r) << "," << format_double(c) << "\n";
        write_pgm((fs::path(dir) / "images" / (s.id + ".pgm")).string(), s.image);
        const Mask& roi =
            s.ann.roi.rows ? s.ann.roi : Mask::full(s.image.dim(0), s.image.dim(1));
        write_mask((fs::path(dir) / "roi" / (s.id + ".pgm")).string(), roi);
    }
    write_text_file((fs::path(dir) / "scenes.csv").string(), scenes_csv.str());
    write_text_file((fs::path(dir) / "annotations.csv").string(), ann_csv.str());
}

std::vector<SceneData> load_counting_dataset(const std::string& dir, AuxKind aux) {
    const CsvTable scenes_csv = read_csv((fs::path(dir) / "scenes.csv").string());
    const CsvTable ann_csv = read_csv((fs::path(dir) / "annotations.csv").string());
    const int c_scene = scenes_csv.column("scene");
    const int c_angle = scenes_csv.column("angle_deg");
    const int c_height = scenes_csv.column("height_m");
    const int c_fov = scenes_csv.column("fov_deg");
    const int a_img = ann_csv.column("image");
    const int a_row = ann_csv.column("row");
    const int a_col = ann_csv.column("col");

    std::vector<SceneData> scenes;
    for (const auto& row : scenes_csv.rows) {
        SceneData s;
        s.id = row[c_scene];
        s.image = read_pgm((fs::path(dir) / "images" / (s.id + ".pgm")).string());
        s.cam = CameraExtrinsics{std::stod(row[c_angle]), std::stod(row[c_height]),
                                 std::stod(row[c_fov]), s.image.dim(0), s.image.dim(1)};
        s.pmap = estimate_perspective_map(s.cam);
        for (const auto& a : ann_csv.rows)
            if (a[a_img] == s.id)
                s.ann.points.emplace_back(std::stod(a[a_row]), std::stod(a[a_col]));
        const fs::path roi_path = fs::path(dir) / "roi" / (s.id + ".pgm");
        s.ann.roi = fs::exists(roi_path) ? read_mask(roi_path.string())
                                         : Mask::full(s.image.dim(0), s.image.dim(1));
        s.dmap = make_density_map(s.ann, s.pmap);
        s.ctx.kind = aux;
        if (aux == AuxKind::angle_height)
            s.ctx.raw = {s.cam.tilt_deg, s.cam.height_m};
        else
            s.ctx.raw = {s.pmap.row_value(s.pmap.rows() / 2)};
        scenes.push_back(std::move(s));
    }
    return scenes;
}

void save_deconv_corpus(const std::string& dir, const std::vector<Tensor>& images, int n_train,
                        int n_val, const CorruptionConfig& cfg) {
    if (n_train + n_val > static_cast<int>(images.size()))
        throw std::invalid_argument("save_deconv_corpus: split exceeds corpus size");
    fs::create_directories(fs::path(dir) / "clean");
    for (int r : cfg.radii) fs::create_directories(fs::path(dir) / "corrupt" / ("r" + std::to_string(r)));

    std::ostringstream corpus_csv, meta_csv;
    corpus_csv << "image,split\n";
    std::ostringstream radii;
    for (size_t i = 0; i < cfg.radii.size(); ++i) {
        if (i) radii << "+";
        radii << cfg.radii[i];
    }
    meta_csv << "size,sigma,seed,radii\n";
    meta_csv << images[0].dim(0) << "," << format_double(cfg.sigma) << "," << cfg.seed << ","
             << radii.str() << "\n";

    for (size_t i = 0; i < images.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "img_%04zu", i);
        const std::string split =
            static_cast<int>(i) < n_train ? "train"
                                          : (static_cast<int>(i) < n_train + n_val ? "val"
                                                                                   : "test");
        corpus_csv << id << "," << split << "\n";
        write_pgm((fs::path(dir) / "clean" / (std::string(id) + ".pgm")).string(), images[i],
                  65535);
        for (int r : cfg.radii) {
            Tensor bad = corrupt(images[i], cfg, r, mix_seed(fnv1a(id), static_cast<uint64_t>(r)));
            write_pgm((fs::path(dir) / "corrupt" / ("r" + std::to_string(r)) /
                       (std::string(id) + ".pgm"))
                          .string(),
                      bad, 65535);
        }
    }
    write_text_file((fs::path(dir) / "corpus.csv").string(), corpus_csv.str());
    write_text_file((fs::path(dir) / "meta.csv").string(), meta_csv.str());
}

DeconvCorpusOnDisk load_deconv_corpus(const std::string& dir) {
    DeconvCorpusOnDisk corpus;
    const CsvTable meta = read_csv((fs::path(dir) / "meta.csv").string());
    if (meta.rows.empty()) throw IoError("deconv corpus: empty meta.csv");
    corpus.corruption.sigma = std::stod(meta.rows[0][meta.column("sigma")]);
    corpus.corruption.seed = std::stoull(meta.rows[0][meta.column("seed")]);
    {
        std::stringstream ss(meta.rows[0][meta.column("radii")]);
        std::string tok;
        while (std::getline(ss, tok, '+')) corpus.radii.push_back(std::stoi(tok));
        corpus.corruption.radii = corpus.radii;
    }
    const CsvTable table = read_csv((fs::path(dir) / "corpus.csv").string());
    const int c_img = table.column("image");
    const int c_split = table.column("split");
    for (const auto& row : table.rows) {
        Tensor img = read_pgm((fs::path(dir) / "clean" / (row[c_img] + ".pgm")).string());
        if (row[c_split] == "train") {
            corpus.train.push_back(std::move(img));
            corpus.train_ids.push_back(row[c_img]);
        } else if (row[c_split] == "val") {
            corpus.val.push_back(std::move(img));
            corpus.val_ids.push_back(row[c_img]);
        } else {
            corpus.test.push_back(std::move(img));
            corpus.test_ids.push_back(row[c_img]);
        }
    }
    return corpus;
}

Tensor load_or_make_corrupted(const std::string& dir, const DeconvCorpusOnDisk& corpus,
                              const std::string& image_id, const Tensor& clean, int radius) {
    const fs::path path =
        fs::path(dir) / "corrupt" / ("r" + std::to_string(radius)) / (image_id + ".pgm");
    if (fs::exists(path)) return read_pgm(path.string());
    return corrupt(clean, corpus.corruption, radius,
                   mix_seed(fnv1a(image_id), static_cast<uint64_t>(radius)));
}

}  // namespace acnn
