// acnn: adaptive-convolution counting and deconvolution toolkit.
//
// Subcommands: gen-synth, gen-deconv-data, train-count, eval-count,
// train-deconv, eval-deconv, params, perspective, gradcheck, manifold-probe.
// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "acnn/checkpoint.hpp"
#include "acnn/dataset.hpp"
#include "acnn/gradcheck.hpp"
#include "acnn/image_io.hpp"
#include "acnn/metrics.hpp"

namespace fs = std::filesystem;
using namespace acnn;

namespace {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::string config_header(const std::string& command, const KeyValues& kv) {
    std::ostringstream os;
    os << "# command=" << command << "\n";
    for (const auto& [k, v] : kv) os << "# " << k << "=" << v << "\n";
    return os.str();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::vector<int> parse_radii(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    if (out.empty()) throw CLI::ValidationError("--radii", "empty radius list");
    return out;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

// ---- gen-synth ----

struct GenSynthArgs {
    std::string out;
    int scenes = 96;
    uint64_t seed = 1;
    std::string angles = "-15,-27,-39,-50";
    std::string heights = "5,8,12";
    int rows = 128, cols = 160;
    double fov = 16.0;
    int people_min = 6, people_max = 20;
};

int run_gen_synth(const GenSynthArgs& args) {
    const auto angles = parse_doubles(args.angles);
    const auto heights = parse_doubles(args.heights);
    if (angles.empty() || heights.empty())
        throw std::invalid_argument("gen-synth: need at least one angle and height");
    SynthSceneOptions opt;
    opt.rows = args.rows;
    opt.cols = args.cols;
    opt.fov_deg = args.fov;

    std::vector<SceneData> scenes;
    Rng rng(args.seed);
    int context = 0;
    for (int i = 0; i < args.scenes; ++i) {
        const double angle = angles[context % angles.size()];
        const double height = heights[(context / angles.size()) % heights.size()];
        context = (context + 1) % static_cast<int>(angles.size() * heights.size());
        const int people = args.people_min + rng.uniform_int(args.people_max - args.people_min + 1);
        char id[32];
        std::snprintf(id, sizeof id, "scene_%04d", i);
        auto scene = synth_scene(angle, height, people, mix_seed(args.seed, i), opt);
        scenes.push_back(scene_data_from_synth(scene, id, AuxKind::perspective));
    }
    save_counting_dataset(args.out, scenes);
    std::printf("wrote %d scenes over %zu contexts to %s\n", args.scenes,
                angles.size() * heights.size(), args.out.c_str());
    return 0;
}

// ---- gen-deconv-data ----

struct GenDeconvArgs {
    std::string out;
    int n = 320;
    int size = 64;
    std::string radii = "3,7,11";
    double sigma = 0.01;
    uint64_t seed = 7;
    int n_train = -1, n_val = -1;
};

int run_gen_deconv(const GenDeconvArgs& args) {
    CorruptionConfig cfg;
    cfg.radii = parse_radii(args.radii);
    cfg.sigma = args.sigma;
    cfg.seed = args.seed;
    const int n_train = args.n_train >= 0 ? args.n_train : args.n * 5 / 8;
    const int n_val = args.n_val >= 0 ? args.n_val : args.n / 8;
    auto images = gen_textures(args.n, args.size, args.seed);
    save_deconv_corpus(args.out, images, n_train, n_val, cfg);
    std::printf("wrote %d clean images (%d train / %d val / %d test) to %s\n", args.n, n_train,
                n_val, args.n - n_train - n_val, args.out.c_str());
    return 0;
}

// ---- train-count ----

struct TrainCountArgs {
    std::string spec = "acnn-v3";
    std::string data;
    std::string out;
    std::string curves;
    uint64_t seed = 1;
    double lambda = 0.1;
    int epochs = 30;
    int batch = 64;
    double lr = 1e-4;
    int patience = 10;
    int patch_stride = 16;
    int val_scenes = -1;
    bool force = false;
    bool verbose = false;
};

std::vector<PatchSample> collect_patches(const std::vector<SceneData>& scenes, int patch_size,
                                         int stride, uint64_t seed) {
    std::vector<PatchSample> samples;
    for (size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        auto per_scene = sample_patches(s.image, s.dmap, s.ann, s.ctx, s.pmap,
                                        {patch_size, stride, true}, mix_seed(seed, i));
        samples.insert(samples.end(), per_scene.begin(), per_scene.end());
    }
    return samples;
}

int run_train_count(const TrainCountArgs& args) {
    const ModelSpec spec = ModelSpec::for_family(model_family_from_string(args.spec));
    auto scenes = load_counting_dataset(args.data, spec.aux);
    if (scenes.empty()) throw std::invalid_argument("train-count: empty dataset");
    const int n_val = args.val_scenes >= 0
                          ? args.val_scenes
                          : std::max<int>(1, static_cast<int>(scenes.size()) / 8);
    if (n_val >= static_cast<int>(scenes.size()))
        throw std::invalid_argument("train-count: validation split leaves no training scenes");
    std::vector<SceneData> train_scenes(scenes.begin(), scenes.end() - n_val);
    std::vector<SceneData> val_scenes(scenes.end() - n_val, scenes.end());

    auto train_samples =
        collect_patches(train_scenes, spec.patch_size, args.patch_stride, mix_seed(args.seed, 101));
    auto val_samples =
        collect_patches(val_scenes, spec.patch_size, args.patch_stride, mix_seed(args.seed, 202));

    CountingModel<float> model;
    model.build(spec, mix_seed(args.seed, 1));
    TrainConfig cfg;
    cfg.lambda = args.lambda;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    cfg.seed = args.seed;
    cfg.opt.lr = args.lr;
    cfg.patience = args.patience;
    cfg.verbose = args.verbose;
    auto curves = train_counting(model, train_samples, val_samples, cfg, &val_scenes);
    save_checkpoint(model, args.out, args.force);

    const std::string curves_path = args.curves.empty() ? args.out + ".curves.csv" : args.curves;
    std::ostringstream csv;
    csv << config_header("train-count", {{"spec", args.spec},
                                         {"data", args.data},
                                         {"seed", std::to_string(args.seed)},
                                         {"lambda", fmt(args.lambda)},
                                         {"epochs", std::to_string(args.epochs)},
                                         {"batch", std::to_string(args.batch)},
                                         {"lr", fmt(args.lr)}});
    csv << "epoch,train_loss,val_mae\n";
    for (size_t e = 0; e < curves.train_loss.size(); ++e)
        csv << e << "," << fmt(curves.train_loss[e]) << "," << fmt(curves.val_mae[e]) << "\n";
    csv << "# best_epoch=" << curves.best_epoch << "\n";
    write_text_file(curves_path, csv.str());
    std::printf("trained %s on %zu patches (%zu val); best epoch %d; checkpoint %s\n",
                args.spec.c_str(), train_samples.size(), val_samples.size(), curves.best_epoch,
                args.out.c_str());
    return 0;
}

// ---- eval-count ----

struct EvalCountArgs {
    std::string ckpt;
    std::string data;
    std::string report;
    std::string region_masks;
    int stride = 4;
    uint64_t seed = 1;
};

int run_eval_count(const EvalCountArgs& args) {
    auto model = load_counting_checkpoint(args.ckpt);
    auto scenes = load_counting_dataset(args.data, model.spec.aux);
    std::vector<Mask> regions;
    if (!args.region_masks.empty()) {
        for (const auto& entry : fs::directory_iterator(args.region_masks))
            if (entry.path().extension() == ".pgm") regions.push_back(read_mask(entry.path()));
        if (regions.empty())
            throw std::invalid_argument("eval-count: no .pgm masks in " + args.region_masks);
    }
    auto result = eval_counting(model, scenes, args.stride, regions.empty() ? nullptr : &regions);

    std::ostringstream csv;
    csv << config_header("eval-count", {{"ckpt", args.ckpt},
                                        {"data", args.data},
                                        {"stride", std::to_string(args.stride)},
                                        {"seed", std::to_string(args.seed)}});
    csv << "scene,true_count,pred_count,abs_err\n";
    for (const auto& ev : result.scenes)
        csv << ev.id << "," << fmt(ev.truth) << "," << fmt(ev.predicted) << ","
            << fmt(std::abs(ev.predicted - ev.truth)) << "\n";
    csv << "# mae=" << fmt(result.mae) << "\n";
    for (size_t r = 0; r < result.region_mae.size(); ++r)
        csv << "# region_" << r << "_mae=" << fmt(result.region_mae[r]) << "\n";
    write_text_file(args.report, csv.str());
    std::printf("mae %s over %zu scenes -> %s\n", fmt(result.mae).c_str(),
                result.scenes.size(), args.report.c_str());
    return 0;
}

// ---- train-deconv ----

struct TrainDeconvArgs {
    std::string data;
    std::string out;
    std::string curves;
    std::string radii = "3,7,11";
    std::string arch = "acnn";
    int filter_length = 121;
    uint64_t seed = 1;
    int epochs = 60;
    int batch = 8;
    double lr = 1e-3;
    int patience = 10;
    bool force = false;
    bool verbose = false;
};

int run_train_deconv(const TrainDeconvArgs& args) {
    auto corpus = load_deconv_corpus(args.data);
    const auto radii = parse_radii(args.radii);
    DeconvSpec spec = args.arch == "acnn" ? DeconvSpec::acnn(args.filter_length)
                                          : DeconvSpec::plain_cnn(38, args.filter_length);
    if (args.arch != "acnn" && args.arch != "cnn38")
        throw std::invalid_argument("train-deconv: --arch must be acnn or cnn38");
    DeconvModel<float> model;
    model.build(spec, mix_seed(args.seed, 3));
    DeconvTrainConfig cfg;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    cfg.seed = args.seed;
    cfg.opt.lr = args.lr;
    cfg.patience = args.patience;
    cfg.verbose = args.verbose;
    auto curves = train_deconv(model, corpus.train, corpus.val, radii, corpus.corruption, cfg);
    save_checkpoint(model, args.out, args.force);

    const std::string curves_path = args.curves.empty() ? args.out + ".curves.csv" : args.curves;
    std::ostringstream csv;
    csv << config_header("train-deconv", {{"data", args.data},
                                          {"radii", args.radii},
                                          {"arch", args.arch},
                                          {"filter_length", std::to_string(args.filter_length)},
                                          {"seed", std::to_string(args.seed)},
                                          {"epochs", std::to_string(args.epochs)},
                                          {"lr", fmt(args.lr)}});
    csv << "epoch,train_mse,val_mse\n";
    for (size_t e = 0; e < curves.train_loss.size(); ++e)
        csv << e << "," << fmt(curves.train_loss[e]) << "," << fmt(curves.val_loss[e]) << "\n";
    csv << "# best_epoch=" << curves.best_epoch << "\n";
    write_text_file(curves_path, csv.str());
    std::printf("trained deconv %s; best epoch %d; checkpoint %s\n", args.arch.c_str(),
                curves.best_epoch, args.out.c_str());
    return 0;
}

// ---- eval-deconv ----

struct EvalDeconvArgs {
    std::string ckpt;
    std::string data;
    std::string report;
    std::string radii = "3,5,7,9,11";
    std::string train_radii;  // override for the seen/unseen marking
    uint64_t seed = 1;
};

int run_eval_deconv(const EvalDeconvArgs& args) {
    auto model = load_deconv_checkpoint(args.ckpt);
    auto corpus = load_deconv_corpus(args.data);
    const auto radii = parse_radii(args.radii);
    const auto train_radii =
        args.train_radii.empty() ? model.train_radii : parse_radii(args.train_radii);
    auto rows = eval_deconv(model, corpus.test, radii, train_radii, corpus.corruption);

    std::ostringstream csv;
    csv << config_header(
        "eval-deconv",
        {{"ckpt", args.ckpt},
         {"data", args.data},
         {"radii", args.radii},
         {"seed", std::to_string(args.seed)},
         {"corruption", "disk-blur + gaussian-noise sigma=" + fmt(corpus.corruption.sigma) +
                            " (no codec artifacts)"}});
    csv << "radius,seen,psnr_blurred,psnr_model,delta\n";
    for (const auto& row : rows)
        csv << row.radius << "," << (row.seen ? 1 : 0) << "," << fmt(row.psnr_blurred) << ","
            << fmt(row.psnr_model) << "," << fmt(row.delta) << "\n";
    write_text_file(args.report, csv.str());
    for (const auto& row : rows)
        std::printf("r=%-2d %s blurred %s dB model %s dB delta %+.3f\n", row.radius,
                    row.seen ? "seen  " : "unseen", fmt(row.psnr_blurred).c_str(),
                    fmt(row.psnr_model).c_str(), row.delta);
    return 0;
}

// ---- params ----

int run_params(const std::string& spec_name) {
    CountingModel<float> model;
    model.build(ModelSpec::for_family(model_family_from_string(spec_name)), 1);
    std::cout << format_param_report(count_params(model), spec_name);
    return 0;
}

// ---- perspective ----

struct PerspectiveArgs {
    double angle = -30.0;
    double height = 8.0;
    double fov = 50.0;
    int rows = 384;
    int cols = 512;
    std::string out_pgm, out_csv;
};

int run_perspective(const PerspectiveArgs& args) {
    CameraExtrinsics cam{args.angle, args.height, args.fov, args.rows, args.cols};
    auto map = estimate_perspective_map(cam);
    if (!args.out_pgm.empty())
        write_pgm16_scaled(args.out_pgm, map.row_values(), args.rows, args.cols);
    if (!args.out_csv.empty()) {
        std::ostringstream csv;
        csv << config_header("perspective", {{"angle_deg", fmt(args.angle)},
                                             {"height_m", fmt(args.height)},
                                             {"fov_deg", fmt(args.fov)},
                                             {"rows", std::to_string(args.rows)},
                                             {"cols", std::to_string(args.cols)}});
        csv << "row,pixels_per_meter\n";
        for (int r = 0; r < args.rows; ++r) csv << r << "," << fmt(map.row_value(r)) << "\n";
        write_text_file(args.out_csv, csv.str());
    }
    std::printf("perspective map %dx%d: top %s px/m, bottom %s px/m\n", args.rows, args.cols,
                fmt(map.row_value(0)).c_str(), fmt(map.row_value(args.rows - 1)).c_str());
    return 0;
}

// ---- gradcheck ----

int run_gradcheck(const std::string& suite) {
    bool all_pass = true;
    for (const auto& res : run_gradcheck_suites(suite)) {
        std::printf("%-22s max_rel_err %.3e tol %.0e %s\n", res.name.c_str(), res.max_rel_err,
                    res.tolerance, res.pass ? "PASS" : "FAIL");
        all_pass = all_pass && res.pass;
    }
    return all_pass ? 0 : 1;
}

// ---- manifold-probe ----

struct ProbeArgs {
    std::string ckpt;
    std::string spec;
    uint64_t seed = 1;
    int layer = 1;
    std::string grid = "6.7:21.4:16";
    std::string out;
};

int run_probe(const ProbeArgs& args) {
    double lo, hi;
    int count;
    if (std::sscanf(args.grid.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3 || count < 1)
        throw std::invalid_argument("manifold-probe: --grid must be lo:hi:count");

    const FilterManifoldNet<float>* fmn = nullptr;
    CountingModel<float> counting;
    DeconvModel<float> deconv;
    AuxNormalization norm;
    if (!args.ckpt.empty()) {
        if (checkpoint_kind(args.ckpt) == "counting") {
            counting = load_counting_checkpoint(args.ckpt);
            int seen = 0;
            for (const auto& st : counting.stages)
                if (st.adaptive && ++seen == args.layer) fmn = &st.ad.fmn;
            norm = counting.aux_norm;
        } else {
            deconv = load_deconv_checkpoint(args.ckpt);
            fmn = args.layer == 1 ? &deconv.ad1.fmn
                                  : (args.layer == 2 ? &deconv.ad2.fmn : &deconv.ad3.fmn);
            if (!deconv.spec.adaptive)
                throw std::invalid_argument("manifold-probe: checkpoint has static filters");
            norm = deconv.aux_norm;
        }
    } else if (!args.spec.empty()) {
        counting.build(ModelSpec::for_family(model_family_from_string(args.spec)),
                       mix_seed(args.seed, 1));
        int seen = 0;
        for (const auto& st : counting.stages)
            if (st.adaptive && ++seen == args.layer) fmn = &st.ad.fmn;
        norm = counting.aux_norm;
    } else {
        throw std::invalid_argument("manifold-probe: need --ckpt or --spec");
    }
    if (!fmn)
        throw std::invalid_argument("manifold-probe: layer " + std::to_string(args.layer) +
                                    " is not adaptive");
    if (fmn->aux_dim != 1)
        throw std::invalid_argument("manifold-probe: grid sweep needs a 1-d auxiliary input");

    std::vector<std::vector<double>> grid;
    for (int i = 0; i < count; ++i) {
        const double raw = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
        grid.push_back(norm.normalize({raw}));
    }
    auto snapshots = manifold_probe(*fmn, grid);

    std::ostringstream csv;
    csv << config_header("manifold-probe",
                         {{"ckpt", args.ckpt},
                          {"spec", args.spec},
                          {"layer", std::to_string(args.layer)},
                          {"grid", args.grid}});
    csv << "aux";
    for (long long i = 0; i < snapshots[0].numel(); ++i) csv << ",w" << i;
    csv << "\n";
    for (int i = 0; i < count; ++i) {
        csv << fmt(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
        for (long long j = 0; j < snapshots[i].numel(); ++j)
            csv << "," << fmt(snapshots[i][j]);
        csv << "\n";
    }
    if (!args.out.empty()) write_text_file(args.out, csv.str());

    // successive-snapshot distances: how fast the manifold moves
    for (size_t i = 1; i < snapshots.size(); ++i) {
        double d2 = 0.0;
        for (long long j = 0; j < snapshots[i].numel(); ++j) {
            const double d = snapshots[i][j] - snapshots[i - 1][j];
            d2 += d * d;
        }
        std::printf("step %zu l2_distance %s\n", i, fmt(std::sqrt(d2)).c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive convolutional networks: counting and deconvolution"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read defaults from a config file");
    bool dump_config = false;
    app.add_flag("--dump-config", dump_config,
                 "print the effective configuration in config-file form and exit");

    GenSynthArgs gs;
    auto* c_gs = app.add_subcommand("gen-synth", "generate a synthetic counting dataset");
    c_gs->fallthrough();
    c_gs->add_option("--out", gs.out, "output dataset directory")->required();
    c_gs->add_option("--scenes", gs.scenes, "number of scenes");
    c_gs->add_option("--seed", gs.seed, "rng seed");
    c_gs->add_option("--angles", gs.angles, "comma-separated tilt angles (deg)");
    c_gs->add_option("--heights", gs.heights, "comma-separated camera heights (m)");
    c_gs->add_option("--rows", gs.rows, "scene rows");
    c_gs->add_option("--cols", gs.cols, "scene cols");
    c_gs->add_option("--fov", gs.fov, "vertical field of view (deg)");
    c_gs->add_option("--people-min", gs.people_min, "min people per scene");
    c_gs->add_option("--people-max", gs.people_max, "max people per scene");

    GenDeconvArgs gd;
    auto* c_gd = app.add_subcommand("gen-deconv-data", "generate the texture corpus");
    c_gd->fallthrough();
    c_gd->add_option("--out", gd.out, "output corpus directory")->required();
    c_gd->add_option("--n", gd.n, "total image count");
    c_gd->add_option("--size", gd.size, "image side length");
    c_gd->add_option("--radii", gd.radii, "comma-separated blur radii to pregenerate");
    c_gd->add_option("--sigma", gd.sigma, "additive gaussian noise std");
    c_gd->add_option("--seed", gd.seed, "rng seed");
    c_gd->add_option("--train", gd.n_train, "train split size");
    c_gd->add_option("--val", gd.n_val, "val split size");

    TrainCountArgs tc;
    auto* c_tc = app.add_subcommand("train-count", "train a counting model");
    c_tc->fallthrough();
    c_tc->add_option("--spec", tc.spec, "cnn64|acnn-v1|acnn-v2|acnn-v3|acnn-ah");
    c_tc->add_option("--data", tc.data, "dataset directory")->required();
    c_tc->add_option("--out", tc.out, "checkpoint path")->required();
    c_tc->add_option("--curves", tc.curves, "loss curves csv (default <out>.curves.csv)");
    c_tc->add_option("--seed", tc.seed, "rng seed");
    c_tc->add_option("--lambda", tc.lambda, "count-class loss weight");
    c_tc->add_option("--epochs", tc.epochs, "max epochs");
    c_tc->add_option("--batch", tc.batch, "mini-batch size");
    c_tc->add_option("--lr", tc.lr, "adam learning rate");
    c_tc->add_option("--patience", tc.patience, "early-stop patience");
    c_tc->add_option("--patch-stride", tc.patch_stride, "patch sampling grid stride");
    c_tc->add_option("--val-scenes", tc.val_scenes, "scenes held out for validation");
    c_tc->add_flag("--force", tc.force, "overwrite an existing checkpoint");
    c_tc->add_flag("--verbose", tc.verbose, "per-epoch progress on stderr");

    EvalCountArgs ec;
    auto* c_ec = app.add_subcommand("eval-count", "evaluate counting MAE");
    c_ec->fallthrough();
    c_ec->add_option("--ckpt", ec.ckpt, "checkpoint path")->required();
    c_ec->add_option("--data", ec.data, "dataset directory")->required();
    c_ec->add_option("--report", ec.report, "report csv path")->required();
    c_ec->add_option("--stride", ec.stride, "prediction grid stride");
    c_ec->add_option("--region-masks", ec.region_masks, "directory of region mask PGMs");
    c_ec->add_option("--seed", ec.seed, "rng seed (config echo only)");

    TrainDeconvArgs td;
    auto* c_td = app.add_subcommand("train-deconv", "train a deconvolution model");
    c_td->fallthrough();
    c_td->add_option("--data", td.data, "corpus directory")->required();
    c_td->add_option("--out", td.out, "checkpoint path")->required();
    c_td->add_option("--curves", td.curves, "loss curves csv (default <out>.curves.csv)");
    c_td->add_option("--radii", td.radii, "training radii");
    c_td->add_option("--arch", td.arch, "acnn|cnn38");
    c_td->add_option("--filter-length", td.filter_length, "1-d filter length (odd)");
    c_td->add_option("--seed", td.seed, "rng seed");
    c_td->add_option("--epochs", td.epochs, "max epochs");
    c_td->add_option("--batch", td.batch, "mini-batch size (images)");
    c_td->add_option("--lr", td.lr, "adam learning rate");
    c_td->add_option("--patience", td.patience, "early-stop patience");
    c_td->add_flag("--force", td.force, "overwrite an existing checkpoint");
    c_td->add_flag("--verbose", td.verbose, "per-epoch progress on stderr");

    EvalDeconvArgs ed;
    auto* c_ed = app.add_subcommand("eval-deconv", "evaluate PSNR per blur radius");
    c_ed->fallthrough();
    c_ed->add_option("--ckpt", ed.ckpt, "checkpoint path")->required();
    c_ed->add_option("--data", ed.data, "corpus directory")->required();
    c_ed->add_option("--report", ed.report, "report csv path")->required();
    c_ed->add_option("--radii", ed.radii, "radii to evaluate");
    c_ed->add_option("--train-radii", ed.train_radii, "override the seen-radius set");
    c_ed->add_option("--seed", ed.seed, "rng seed (config echo only)");

    std::string params_spec = "acnn-v3";
    auto* c_pr = app.add_subcommand("params", "per-layer parameter accounting");
    c_pr->fallthrough();
    c_pr->add_option("--spec", params_spec, "model spec name");

    PerspectiveArgs pe;
    auto* c_pe = app.add_subcommand("perspective", "estimate a perspective map");
    c_pe->fallthrough();
    c_pe->add_option("--angle-deg", pe.angle, "camera tilt (negative down)")->required();
    c_pe->add_option("--height-m", pe.height, "camera height")->required();
    c_pe->add_option("--fov-deg", pe.fov, "vertical field of view")->required();
    c_pe->add_option("--rows", pe.rows, "image rows")->required();
    c_pe->add_option("--cols", pe.cols, "image cols")->required();
    c_pe->add_option("--out-pgm", pe.out_pgm, "16-bit max-scaled PGM path");
    c_pe->add_option("--out-csv", pe.out_csv, "per-row values csv path");

    std::string gc_suite;
    bool gc_all = false;
    auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    c_gc->fallthrough();
    c_gc->add_flag("--all", gc_all, "run every suite");
    c_gc->add_option("--suite", gc_suite, "run a single named suite");

    ProbeArgs pb;
    auto* c_pb = app.add_subcommand("manifold-probe", "sweep filters along the aux manifold");
    c_pb->fallthrough();
    c_pb->add_option("--ckpt", pb.ckpt, "checkpoint to probe");
    c_pb->add_option("--spec", pb.spec, "or: freshly initialized model spec");
    c_pb->add_option("--seed", pb.seed, "init seed with --spec");
    c_pb->add_option("--layer", pb.layer, "adaptive layer index (1-based)");
    c_pb->add_option("--grid", pb.grid, "raw aux sweep lo:hi:count");
    c_pb->add_option("--out", pb.out, "snapshot csv path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    if (dump_config) {
        std::cout << app.config_to_str(true, false);
        return 0;
    }

    try {
        if (c_gs->parsed()) return run_gen_synth(gs);
        if (c_gd->parsed()) return run_gen_deconv(gd);
        if (c_tc->parsed()) return run_train_count(tc);
        if (c_ec->parsed()) return run_eval_count(ec);
        if (c_td->parsed()) return run_train_deconv(td);
        if (c_ed->parsed()) return run_eval_deconv(ed);
        if (c_pr->parsed()) return run_params(params_spec);
        if (c_pe->parsed()) return run_perspective(pe);
        if (c_gc->parsed()) return run_gradcheck(gc_suite);
        if (c_pb->parsed()) return run_probe(pb);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const GeometryError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
