#include "acnn/model.hpp"

#include <sstream>

namespace acnn {

std::string to_string(ModelFamily family) {
    switch (family) {
        case ModelFamily::cnn64: return "cnn64";
        case ModelFamily::acnn_v1: return "acnn-v1";
        case ModelFamily::acnn_v2: return "acnn-v2";
        case ModelFamily::acnn_v3: return "acnn-v3";
        case ModelFamily::acnn_ah: return "acnn-ah";
    }
    return "?";
}

ModelFamily model_family_from_string(const std::string& name) {
    if (name == "cnn64") return ModelFamily::cnn64;
    if (name == "acnn-v1") return ModelFamily::acnn_v1;
    if (name == "acnn-v2") return ModelFamily::acnn_v2;
    if (name == "acnn-v3") return ModelFamily::acnn_v3;
    if (name == "acnn-ah") return ModelFamily::acnn_ah;
    throw std::invalid_argument("unknown model spec '" + name +
                                "' (expected cnn64|acnn-v1|acnn-v2|acnn-v3|acnn-ah)");
}

ModelSpec ModelSpec::for_family(ModelFamily family) {
    ModelSpec spec;
    spec.family = family;
    switch (family) {
        case ModelFamily::cnn64:
            spec.stages = {{false, 64}, {false, 64}};
            break;
        case ModelFamily::acnn_v1:
            spec.stages = {{true, 64}, {false, 64}};
            break;
        case ModelFamily::acnn_v2:
            spec.stages = {{false, 64}, {true, 30}};
            break;
        case ModelFamily::acnn_v3:
            spec.stages = {{true, 32}, {true, 32}};
            break;
        case ModelFamily::acnn_ah:
            spec.patch_size = 65;
            spec.aux = AuxKind::angle_height;
            spec.stages = {{true, 40}, {true, 40}, {true, 32}};
            break;
    }
    return spec;
}

template <typename T>
void CountingModel<T>::build(const ModelSpec& model_spec, uint64_t seed) {
    spec = model_spec;
    if (spec.stages.empty()) throw std::invalid_argument("model: no conv stages");
    Rng rng(seed);
    const int aux_dim = aux_dimension(spec.aux);

    stages.clear();
    stages.resize(spec.stages.size());
    int in_ch = 1;
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const auto& ss = spec.stages[i];
        Stage& st = stages[i];
        st.adaptive = ss.adaptive;
        if (ss.adaptive) {
            st.ad.fmn.build(aux_dim, spec.fmn_hidden,
                            FilterShape{ss.filters, in_ch, ss.ksize, ss.ksize}, rng);
            st.ad.act = Activation::relu;
            st.ad.pad = Padding::same;
        } else {
            st.conv.w = TensorT<T>(Shape{ss.filters, in_ch, ss.ksize, ss.ksize});
            st.conv.b = TensorT<T>(Shape{ss.filters});
            init_he(st.conv.w, static_cast<long long>(in_ch) * ss.ksize * ss.ksize, rng);
            st.conv.alloc_like_params();
        }
        in_ch = ss.filters;
    }

    const int flat = spec.flatten_size();
    auto make_fc = [&](LayerParams<T>& fc, int in_dim, int out_dim, bool relu_next) {
        fc.w = TensorT<T>(Shape{in_dim, out_dim});
        fc.b = TensorT<T>(Shape{out_dim});
        if (relu_next)
            init_he(fc.w, in_dim, rng);
        else
            init_xavier(fc.w, in_dim, out_dim, rng);
        fc.alloc_like_params();
    };
    make_fc(fc1, flat, spec.fc1_out, true);
    make_fc(fc2, spec.fc1_out, spec.fc2_out, true);
    make_fc(fc3, spec.fc2_out, spec.fc3_out, false);
    make_fc(fc4, flat, spec.fc4_out, true);
    make_fc(fc5, spec.fc4_out, spec.n_classes, false);

    aux_norm = AuxNormalization{};
    aux_norm.kind = spec.aux;
    aux_norm.components.assign(static_cast<size_t>(aux_dim), {0.0, 1.0});
    trained = false;
}

template <typename T>
TensorT<T> CountingModel<T>::conv_forward(const TensorT<T>& patch,
                                          const std::vector<double>& aux, Cache* cache) const {
    if (patch.rank() != 4 || patch.dim(0) != 1 || patch.dim(1) != 1 ||
        patch.dim(2) != spec.patch_size || patch.dim(3) != spec.patch_size)
        throw std::invalid_argument("model forward: patch must be [1,1," +
                                    std::to_string(spec.patch_size) + "," +
                                    std::to_string(spec.patch_size) + "]");
    if (cache) {
        cache->stages.clear();
        cache->stages.resize(stages.size());
    }
    TensorT<T> x = patch;
    for (size_t i = 0; i < stages.size(); ++i) {
        const Stage& st = stages[i];
        StageCache* sc = cache ? &cache->stages[i] : nullptr;
        TensorT<T> y;
        if (st.adaptive) {
            y = st.ad.forward(x, aux, sc ? &sc->ad : nullptr);
        } else {
            TensorT<T> pre = conv2d_forward(x, st.conv.w, st.conv.b, Padding::same);
            y = activate(pre, Activation::relu);
            if (sc) {
                sc->input = x;
                sc->pre_act = std::move(pre);
                sc->post_act = y;
            }
        }
        TensorT<T> l = lrn_forward(y, st.lrn);
        if (sc) {
            sc->lrn_in = std::move(y);
            sc->pre_pool_shape = l.shape();
        }
        x = maxpool2_forward(l, sc ? &sc->argmax : nullptr);
    }
    if (cache) cache->valid = true;
    return x.reshaped(Shape{1, spec.flatten_size()});
}

template <typename T>
void CountingModel<T>::heads_forward(const TensorT<T>& flats, HeadsCache* cache,
                                     TensorT<T>* densities, TensorT<T>* logits) const {
    TensorT<T> fc1_pre = dense_forward(flats, fc1.w, fc1.b);
    TensorT<T> fc1_post = activate(fc1_pre, Activation::relu);
    TensorT<T> fc2_pre = dense_forward(fc1_post, fc2.w, fc2.b);
    TensorT<T> fc2_post = activate(fc2_pre, Activation::relu);
    if (densities) *densities = dense_forward(fc2_post, fc3.w, fc3.b);
    TensorT<T> fc4_pre, fc4_post;
    if (logits || cache) {  // classification head only when wanted
        fc4_pre = dense_forward(flats, fc4.w, fc4.b);
        fc4_post = activate(fc4_pre, Activation::relu);
        if (logits) *logits = dense_forward(fc4_post, fc5.w, fc5.b);
    }
    if (cache) {
        cache->flats = flats;
        cache->fc1_pre = std::move(fc1_pre);
        cache->fc1_post = std::move(fc1_post);
        cache->fc2_pre = std::move(fc2_pre);
        cache->fc2_post = std::move(fc2_post);
        cache->fc4_pre = std::move(fc4_pre);
        cache->fc4_post = std::move(fc4_post);
        cache->valid = true;
    }
}

template <typename T>
int CountingModel<T>::heads_slot_base() const {
    int slot = 0;
    for (const auto& st : stages)
        slot += st.adaptive ? static_cast<int>(st.ad.fmn.stages.size()) : 1;
    return slot;
}

template <typename T>
void CountingModel<T>::heads_backward(const HeadsCache& cache, const TensorT<T>& d_density,
                                      const TensorT<T>& d_logits, ParamGrads<T>& grads,
                                      TensorT<T>* d_flats) const {
    if (!cache.valid) throw ContractViolation("heads backward: no cached forward pass");
    const int fc_base = heads_slot_base();

    TensorT<T> g;
    dense_backward(cache.fc2_post, fc3.w, d_density, &g, &grads.gw[fc_base + 2],
                   &grads.gb[fc_base + 2]);
    g = activate_backward(cache.fc2_pre, cache.fc2_post, Activation::relu, 0.0, g);
    TensorT<T> g1;
    dense_backward(cache.fc1_post, fc2.w, g, &g1, &grads.gw[fc_base + 1],
                   &grads.gb[fc_base + 1]);
    g1 = activate_backward(cache.fc1_pre, cache.fc1_post, Activation::relu, 0.0, g1);
    TensorT<T> g_flat_reg;
    dense_backward(cache.flats, fc1.w, g1, &g_flat_reg, &grads.gw[fc_base + 0],
                   &grads.gb[fc_base + 0]);

    TensorT<T> g4;
    dense_backward(cache.fc4_post, fc5.w, d_logits, &g4, &grads.gw[fc_base + 4],
                   &grads.gb[fc_base + 4]);
    g4 = activate_backward(cache.fc4_pre, cache.fc4_post, Activation::relu, 0.0, g4);
    TensorT<T> g_flat_cls;
    dense_backward(cache.flats, fc4.w, g4, &g_flat_cls, &grads.gw[fc_base + 3],
                   &grads.gb[fc_base + 3]);

    for (long long i = 0; i < g_flat_reg.numel(); ++i) g_flat_reg[i] += g_flat_cls[i];
    if (d_flats) *d_flats = std::move(g_flat_reg);
}

template <typename T>
void CountingModel<T>::conv_backward(const Cache& cache, const TensorT<T>& d_flat,
                                     ParamGrads<T>& grads) const {
    if (!cache.valid) throw ContractViolation("model backward: no cached forward pass");
    std::vector<int> stage_slot(stages.size());
    int slot = 0;
    for (size_t i = 0; i < stages.size(); ++i) {
        stage_slot[i] = slot;
        slot += stages[i].adaptive ? static_cast<int>(stages[i].ad.fmn.stages.size()) : 1;
    }

    const int s_out = spec.conv_output_spatial();
    TensorT<T> gx = d_flat.reshaped(Shape{1, spec.stages.back().filters, s_out, s_out});
    for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) {
        const Stage& st = stages[i];
        const StageCache& sc = cache.stages[i];
        gx = maxpool2_backward(gx, sc.pre_pool_shape, sc.argmax);
        gx = lrn_backward(sc.lrn_in, st.lrn, gx);
        const bool need_input_grad = i > 0;
        if (st.adaptive) {
            std::vector<TensorT<T>*> gw, gb;
            for (size_t s = 0; s < st.ad.fmn.stages.size(); ++s) {
                gw.push_back(&grads.gw[stage_slot[i] + static_cast<int>(s)]);
                gb.push_back(&grads.gb[stage_slot[i] + static_cast<int>(s)]);
            }
            gx = st.ad.backward_into(sc.ad, gx, gw, gb, need_input_grad);
        } else {
            TensorT<T> g_relu =
                activate_backward(sc.pre_act, sc.post_act, Activation::relu, 0.0, gx);
            TensorT<T> gin;
            conv2d_backward(sc.input, st.conv.w, Padding::same, g_relu,
                            need_input_grad ? &gin : nullptr, &grads.gw[stage_slot[i]],
                            &grads.gb[stage_slot[i]]);
            gx = std::move(gin);
        }
    }
}

template <typename T>
typename CountingModel<T>::Output CountingModel<T>::forward(const TensorT<T>& patch,
                                                            const std::vector<double>& aux,
                                                            Cache* cache) const {
    TensorT<T> flat = conv_forward(patch, aux, cache);
    HeadsCache* hc = nullptr;
    HeadsCache local;
    if (cache) hc = &local;
    TensorT<T> densities, logits;
    heads_forward(flat, hc, &densities, &logits);
    if (cache) {
        cache->flat = std::move(flat);
        cache->fc1_pre = std::move(local.fc1_pre);
        cache->fc1_post = std::move(local.fc1_post);
        cache->fc2_pre = std::move(local.fc2_pre);
        cache->fc2_post = std::move(local.fc2_post);
        cache->fc4_pre = std::move(local.fc4_pre);
        cache->fc4_post = std::move(local.fc4_post);
    }
    Output out;
    out.density = densities[0];
    out.logits = std::move(logits);
    return out;
}

template <typename T>
void CountingModel<T>::backward_into(const Cache& cache, T d_density,
                                     const TensorT<T>& d_logits, ParamGrads<T>& grads) const {
    if (!cache.valid) throw ContractViolation("model backward: no cached forward pass");
    HeadsCache hc;
    hc.flats = cache.flat;
    hc.fc1_pre = cache.fc1_pre;
    hc.fc1_post = cache.fc1_post;
    hc.fc2_pre = cache.fc2_pre;
    hc.fc2_post = cache.fc2_post;
    hc.fc4_pre = cache.fc4_pre;
    hc.fc4_post = cache.fc4_post;
    hc.valid = true;
    TensorT<T> g_density(Shape{1, 1});
    g_density[0] = d_density;
    TensorT<T> d_flat;
    heads_backward(hc, g_density, d_logits, grads, &d_flat);
    conv_backward(cache, d_flat, grads);
}

template <typename T>
void CountingModel<T>::visit_layers(
    const std::function<void(const std::string&, LayerParams<T>&)>& fn) {
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string tag = std::to_string(i + 1);
        if (stages[i].adaptive) {
            auto& fmn_stages = stages[i].ad.fmn.stages;
            for (size_t s = 0; s < fmn_stages.size(); ++s)
                fn("fmn" + tag + ".s" + std::to_string(s), fmn_stages[s]);
        } else {
            fn("conv" + tag, stages[i].conv);
        }
    }
    fn("fc1", fc1);
    fn("fc2", fc2);
    fn("fc3", fc3);
    fn("fc4", fc4);
    fn("fc5", fc5);
}

template <typename T>
void CountingModel<T>::visit_layers(
    const std::function<void(const std::string&, const LayerParams<T>&)>& fn) const {
    auto* self = const_cast<CountingModel<T>*>(this);
    self->visit_layers([&](const std::string& name, LayerParams<T>& lp) {
        fn(name, static_cast<const LayerParams<T>&>(lp));
    });
}

template <typename T>
ParamGrads<T> CountingModel<T>::make_grads() const {
    ParamGrads<T> g;
    visit_layers([&](const std::string&, const LayerParams<T>& lp) { g.add_slot(lp); });
    return g;
}

template <typename T>
void CountingModel<T>::install_grads(const ParamGrads<T>& grads) {
    size_t i = 0;
    visit_layers([&](const std::string&, LayerParams<T>& lp) {
        lp.gw = grads.gw[i];
        lp.gb = grads.gb[i];
        lp.grads_fresh = true;
        ++i;
    });
}

template <typename T>
void CountingModel<T>::adam_update(OptimizerConfig& cfg) {
    cfg.validate();
    ++cfg.step;
    visit_layers([&](const std::string&, LayerParams<T>& lp) { adam_apply(lp, cfg); });
    last_opt = cfg;
}

template <typename T>
std::vector<ParamRow> CountingModel<T>::param_table() const {
    std::vector<ParamRow> rows;
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string tag = std::to_string(i + 1);
        if (stages[i].adaptive) {
            rows.push_back({"FMN" + tag, stages[i].ad.fmn.param_count(),
                            stages[i].ad.fmn.out.flat_len()});
            rows.push_back({"conv" + tag, 0, spec.stages[i].filters});
        } else {
            rows.push_back({"conv" + tag, stages[i].conv.param_count(), spec.stages[i].filters});
        }
    }
    rows.push_back({"FC1", fc1.param_count(), spec.fc1_out});
    rows.push_back({"FC2", fc2.param_count(), spec.fc2_out});
    rows.push_back({"FC3", fc3.param_count(), spec.fc3_out});
    rows.push_back({"FC4", fc4.param_count(), spec.fc4_out});
    rows.push_back({"FC5", fc5.param_count(), spec.n_classes});
    return rows;
}

template <typename T>
long long CountingModel<T>::param_total() const {
    long long total = 0;
    for (const auto& row : param_table()) total += row.params;
    return total;
}

template struct CountingModel<float>;
template struct CountingModel<double>;

ParamReport count_params(const CountingModel<float>& model) {
    ParamReport report;
    report.rows = model.param_table();
    for (const auto& row : report.rows) report.total += row.params;
    // FC5 with a 16th class would hold fc4_out+1 more parameters
    const long long fc5_delta = model.spec.fc4_out + 1;
    report.total_with_16_class_head = report.total + fc5_delta;
    return report;
}

std::string format_param_report(const ParamReport& report, const std::string& name) {
    std::ostringstream os;
    os << "layer parameters for " << name << "\n";
    for (const auto& row : report.rows)
        os << "  " << row.layer << "  " << row.params << "  (" << row.outputs << ")\n";
    os << "  total  " << report.total << "\n";
    os << "  note: with a 16-way class head FC5 gains "
       << (report.total_with_16_class_head - report.total)
       << " parameters and the total becomes " << report.total_with_16_class_head << "\n";
    return os.str();
}

}  // namespace acnn
