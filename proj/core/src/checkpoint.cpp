#include "acnn/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "acnn/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace acnn {

uint64_t fnv1a_bytes(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

struct TensorEntry {
    std::string name;
    const Tensor* tensor;
};

json shape_to_json(const Shape& s) {
    json a = json::array();
    for (int i = 0; i < s.rank(); ++i) a.push_back(s[i]);
    return a;
}

Shape shape_from_json(const json& a) {
    std::initializer_list<int> dummy{};
    (void)dummy;
    switch (a.size()) {
        case 0: return Shape{};
        case 1: return Shape{a[0].get<int>()};
        case 2: return Shape{a[0].get<int>(), a[1].get<int>()};
        case 3: return Shape{a[0].get<int>(), a[1].get<int>(), a[2].get<int>()};
        case 4:
            return Shape{a[0].get<int>(), a[1].get<int>(), a[2].get<int>(), a[3].get<int>()};
        default: throw CheckpointError("checkpoint: tensor rank > 4 in manifest");
    }
}

json norm_to_json(const AuxNormalization& n) {
    json comps = json::array();
    for (const auto& c : n.components) comps.push_back({{"center", c.center}, {"scale", c.scale}});
    return {{"kind", to_string(n.kind)}, {"components", comps}};
}

AuxNormalization norm_from_json(const json& j) {
    AuxNormalization n;
    n.kind = aux_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& c : j.at("components"))
        n.components.push_back({c.at("center").get<double>(), c.at("scale").get<double>()});
    return n;
}

json opt_to_json(const OptimizerConfig& o) {
    return {{"type", "adam"}, {"step", o.step}, {"lr", o.lr},
            {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

OptimizerConfig opt_from_json(const json& j) {
    OptimizerConfig o;
    o.step = j.at("step").get<long long>();
    o.lr = j.at("lr").get<double>();
    o.beta1 = j.at("beta1").get<double>();
    o.beta2 = j.at("beta2").get<double>();
    o.eps = j.at("eps").get<double>();
    return o;
}

void write_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("checkpoint: cannot open " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("checkpoint: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

void save_manifest_and_blob(const std::string& path, bool force, json manifest,
                            const std::vector<TensorEntry>& tensors,
                            const std::vector<std::pair<std::string, std::vector<double>>>&
                                double_vectors) {
    if (!force && (fs::exists(path) || fs::exists(path + ".blob")))
        throw IoError("checkpoint: '" + path + "' exists (use --force to overwrite)");

    std::vector<float> blob;
    json tensor_list = json::array();
    for (const auto& [name, t] : tensors) {
        tensor_list.push_back({{"name", name},
                               {"shape", shape_to_json(t->shape())},
                               {"offset", blob.size()},
                               {"count", t->numel()}});
        blob.insert(blob.end(), t->data(), t->data() + t->numel());
    }
    for (const auto& [name, v] : double_vectors) {
        tensor_list.push_back({{"name", name},
                               {"shape", json::array({static_cast<int>(v.size())})},
                               {"offset", blob.size()},
                               {"count", v.size()}});
        for (double x : v) blob.push_back(static_cast<float>(x));
    }
    manifest["tensors"] = tensor_list;
    manifest["blob_bytes"] = blob.size() * sizeof(float);
    char digest[32];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a_bytes(blob.data(), blob.size() * sizeof(float))));
    manifest["blob_fnv1a"] = digest;

    std::string blob_bytes(reinterpret_cast<const char*>(blob.data()),
                           blob.size() * sizeof(float));
    write_atomic(path + ".blob", blob_bytes);
    write_atomic(path, manifest.dump(2) + "\n");
}

json load_manifest(const std::string& path) {
    if (!fs::exists(path)) throw CheckpointError("checkpoint: missing manifest " + path);
    json manifest;
    try {
        manifest = json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw CheckpointError("checkpoint: malformed manifest " + path + ": " + e.what());
    }
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
        throw CheckpointError("checkpoint: unsupported format version " +
                              std::to_string(version) + " in " + path);
    return manifest;
}

std::vector<float> load_blob(const std::string& path, const json& manifest) {
    const std::string blob_path = path + ".blob";
    if (!fs::exists(blob_path))
        throw CheckpointError("checkpoint: missing blob file " + blob_path);
    const std::string bytes = read_text_file(blob_path);
    const size_t expected = manifest.at("blob_bytes").get<size_t>();
    if (bytes.size() != expected)
        throw CheckpointError("checkpoint: truncated blob (" + std::to_string(bytes.size()) +
                              " bytes, manifest says " + std::to_string(expected) + ")");
    char digest[32];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(fnv1a_bytes(bytes.data(), bytes.size())));
    if (manifest.at("blob_fnv1a").get<std::string>() != digest)
        throw CheckpointError("checkpoint: blob checksum mismatch for " + path);
    std::vector<float> blob(bytes.size() / sizeof(float));
    std::memcpy(blob.data(), bytes.data(), bytes.size());
    return blob;
}

struct BlobReader {
    const std::vector<float>& blob;
    const json& tensors;

    void read_into(const std::string& name, Tensor& t) const {
        for (const auto& e : tensors) {
            if (e.at("name").get<std::string>() != name) continue;
            const Shape shape = shape_from_json(e.at("shape"));
            const size_t offset = e.at("offset").get<size_t>();
            const long long count = e.at("count").get<long long>();
            if (shape.numel() != count || offset + count > blob.size())
                throw CheckpointError("checkpoint: bad tensor record for " + name);
            t = Tensor(shape);
            std::copy(blob.begin() + static_cast<long>(offset),
                      blob.begin() + static_cast<long>(offset) + count, t.data());
            return;
        }
        throw CheckpointError("checkpoint: tensor '" + name + "' not in manifest");
    }
    std::vector<float> read_floats(const std::string& name) const {
        Tensor t;
        read_into(name, t);
        return std::vector<float>(t.data(), t.data() + t.numel());
    }
};

}  // namespace

void save_checkpoint(const CountingModel<float>& model, const std::string& path, bool force) {
    json spec;
    spec["kind"] = "counting";
    spec["family"] = to_string(model.spec.family);
    spec["patch"] = model.spec.patch_size;
    spec["aux"] = to_string(model.spec.aux);
    json stages = json::array();
    for (const auto& s : model.spec.stages)
        stages.push_back({{"adaptive", s.adaptive}, {"filters", s.filters}, {"ksize", s.ksize}});
    spec["stages"] = stages;
    spec["fmn_hidden"] = model.spec.fmn_hidden;
    spec["fc"] = {model.spec.fc1_out, model.spec.fc2_out, model.spec.fc3_out,
                  model.spec.fc4_out, model.spec.n_classes};

    json manifest;
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["kind"] = "counting";
    manifest["spec"] = spec;
    manifest["aux_norm"] = norm_to_json(model.aux_norm);
    manifest["optimizer"] = opt_to_json(model.last_opt);
    manifest["trained"] = model.trained;
    manifest["target_scale"] = model.target_scale;

    std::vector<TensorEntry> tensors;
    model.visit_layers([&](const std::string& name, const LayerParams<float>& lp) {
        tensors.push_back({name + ".w", &lp.w});
        tensors.push_back({name + ".b", &lp.b});
    });
    save_manifest_and_blob(path, force, std::move(manifest), tensors, {});
}

void save_checkpoint(const DeconvModel<float>& model, const std::string& path, bool force) {
    json spec;
    spec["kind"] = "deconv";
    spec["adaptive"] = model.spec.adaptive;
    spec["channels"] = model.spec.channels;
    spec["filter_length"] = model.spec.filter_length;
    spec["fmn_hidden"] = model.spec.fmn_hidden;
    spec["leaky_slope"] = model.spec.leaky_slope;

    json manifest;
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["kind"] = "deconv";
    manifest["spec"] = spec;
    manifest["aux_norm"] = norm_to_json(model.aux_norm);
    manifest["optimizer"] = opt_to_json(model.last_opt);
    manifest["trained"] = model.trained;
    manifest["train_radii"] = model.train_radii;
    manifest["bn_initialized"] = {model.bn1.initialized, model.bn2.initialized};

    std::vector<TensorEntry> tensors;
    model.visit_layers([&](const std::string& name, const LayerParams<float>& lp) {
        tensors.push_back({name + ".w", &lp.w});
        tensors.push_back({name + ".b", &lp.b});
    });
    auto widen = [](const std::vector<float>& v) {
        return std::vector<double>(v.begin(), v.end());
    };
    std::vector<std::pair<std::string, std::vector<double>>> extras = {
        {"bn1.running_mean", widen(model.bn1.running_mean)},
        {"bn1.running_var", widen(model.bn1.running_var)},
        {"bn2.running_mean", widen(model.bn2.running_mean)},
        {"bn2.running_var", widen(model.bn2.running_var)},
    };
    save_manifest_and_blob(path, force, std::move(manifest), tensors, extras);
}

std::string checkpoint_kind(const std::string& path) {
    return load_manifest(path).at("kind").get<std::string>();
}

CountingModel<float> load_counting_checkpoint(const std::string& path) {
    const json manifest = load_manifest(path);
    if (manifest.at("kind").get<std::string>() != "counting")
        throw CheckpointError("checkpoint: expected a counting model in " + path);
    const std::vector<float> blob = load_blob(path, manifest);
    const json& spec_json = manifest.at("spec");

    CountingModel<float> model;
    if (!spec_json.at("stages").empty()) {
        ModelSpec spec;
        spec.family = model_family_from_string(spec_json.at("family").get<std::string>());
        spec.patch_size = spec_json.at("patch").get<int>();
        spec.aux = aux_kind_from_string(spec_json.at("aux").get<std::string>());
        for (const auto& s : spec_json.at("stages"))
            spec.stages.push_back({s.at("adaptive").get<bool>(), s.at("filters").get<int>(),
                                   s.at("ksize").get<int>()});
        spec.fmn_hidden = spec_json.at("fmn_hidden").get<std::vector<int>>();
        const auto fc = spec_json.at("fc");
        spec.fc1_out = fc[0];
        spec.fc2_out = fc[1];
        spec.fc3_out = fc[2];
        spec.fc4_out = fc[3];
        spec.n_classes = fc[4];
        model.build(spec, 0);

        BlobReader reader{blob, manifest.at("tensors")};
        model.visit_layers([&](const std::string& name, LayerParams<float>& lp) {
            reader.read_into(name + ".w", lp.w);
            reader.read_into(name + ".b", lp.b);
            lp.alloc_like_params();
        });
    }
    model.aux_norm = norm_from_json(manifest.at("aux_norm"));
    model.last_opt = opt_from_json(manifest.at("optimizer"));
    model.target_scale = manifest.at("target_scale").get<double>();
    model.trained = manifest.at("trained").get<bool>();
    return model;
}

DeconvModel<float> load_deconv_checkpoint(const std::string& path) {
    const json manifest = load_manifest(path);
    if (manifest.at("kind").get<std::string>() != "deconv")
        throw CheckpointError("checkpoint: expected a deconv model in " + path);
    const std::vector<float> blob = load_blob(path, manifest);
    const json& spec_json = manifest.at("spec");

    DeconvSpec spec;
    spec.adaptive = spec_json.at("adaptive").get<bool>();
    spec.channels = spec_json.at("channels").get<int>();
    spec.filter_length = spec_json.at("filter_length").get<int>();
    spec.fmn_hidden = spec_json.at("fmn_hidden").get<std::vector<int>>();
    spec.leaky_slope = spec_json.at("leaky_slope").get<double>();

    DeconvModel<float> model;
    model.build(spec, 0);
    BlobReader reader{blob, manifest.at("tensors")};
    model.visit_layers([&](const std::string& name, LayerParams<float>& lp) {
        reader.read_into(name + ".w", lp.w);
        reader.read_into(name + ".b", lp.b);
        lp.alloc_like_params();
    });
    model.bn1.running_mean = reader.read_floats("bn1.running_mean");
    model.bn1.running_var = reader.read_floats("bn1.running_var");
    model.bn2.running_mean = reader.read_floats("bn2.running_mean");
    model.bn2.running_var = reader.read_floats("bn2.running_var");
    const auto bn_init = manifest.at("bn_initialized");
    model.bn1.initialized = bn_init[0].get<bool>();
    model.bn2.initialized = bn_init[1].get<bool>();
    model.aux_norm = norm_from_json(manifest.at("aux_norm"));
    model.last_opt = opt_from_json(manifest.at("optimizer"));
    model.train_radii = manifest.at("train_radii").get<std::vector<int>>();
    model.trained = manifest.at("trained").get<bool>();
    return model;
}

}  // namespace acnn
