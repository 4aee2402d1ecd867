#pragma once

#include <functional>
#include <string>
#include <vector>

#include "acnn/adaptive_conv.hpp"
#include "acnn/optimizer.hpp"
#include "acnn/sampling.hpp"

namespace acnn {

// Counting architectures. cnn64 is the parameter-matched static baseline;
// v1/v2/v3 vary which convolution stages are adaptive; ah is the three-stage
// model conditioned on tilt angle + camera height.
enum class ModelFamily { cnn64, acnn_v1, acnn_v2, acnn_v3, acnn_ah };

std::string to_string(ModelFamily family);
ModelFamily model_family_from_string(const std::string& name);

struct ConvStageSpec {
    bool adaptive = false;
    int filters = 32;
    int ksize = 5;
};

struct ModelSpec {
    ModelFamily family = ModelFamily::acnn_v3;
    int patch_size = 33;
    AuxKind aux = AuxKind::perspective;
    std::vector<ConvStageSpec> stages;
    std::vector<int> fmn_hidden{10, 40};
    // shared flatten feeds both heads: regression 512->81->1, classes 81->15
    int fc1_out = 512, fc2_out = 81, fc3_out = 1, fc4_out = 81;
    int n_classes = kCountClasses;

    static ModelSpec for_family(ModelFamily family);

    // spatial size after each conv(same)+pool(ceil /2) stage
    int conv_output_spatial() const {
        int s = patch_size;
        for (size_t i = 0; i < stages.size(); ++i) s = (s + 1) / 2;
        return s;
    }
    int flatten_size() const {
        const int s = conv_output_spatial();
        return s * s * stages.back().filters;
    }
};

struct ParamRow {
    std::string layer;
    long long params = 0;
    long long outputs = 0;  // filter count, FMN flat length, or FC width
};

template <typename T>
struct CountingModel {
    ModelSpec spec;

    struct Stage {
        bool adaptive = false;
        AdaptiveConvLayer<T> ad;  // adaptive path
        LayerParams<T> conv;      // static path
        LrnConfig lrn;
    };
    std::vector<Stage> stages;
    LayerParams<T> fc1, fc2, fc3, fc4, fc5;
    AuxNormalization aux_norm;
    OptimizerConfig last_opt;
    // density targets are standardized during training; raw-unit predictions
    // divide the head output by this factor
    double target_scale = 1.0;
    bool trained = false;

    void build(const ModelSpec& model_spec, uint64_t seed);

    struct StageCache {
        typename AdaptiveConvLayer<T>::Cache ad;
        TensorT<T> input, pre_act, post_act;  // static conv path
        TensorT<T> lrn_in;
        std::vector<long long> argmax;
        Shape pre_pool_shape;
    };
    struct Cache {
        std::vector<StageCache> stages;
        TensorT<T> flat;
        TensorT<T> fc1_pre, fc1_post, fc2_pre, fc2_post, fc4_pre, fc4_post;
        bool valid = false;
    };
    struct Output {
        T density = T(0);
        TensorT<T> logits;  // [1, n_classes]
    };

    // patch [1,1,s,s]; aux already normalized. Thread-safe for concurrent
    // callers with private caches.
    Output forward(const TensorT<T>& patch, const std::vector<double>& aux, Cache* cache) const;

    // Accumulates parameter grads into `grads` (slots in visit order).
    void backward_into(const Cache& cache, T d_density, const TensorT<T>& d_logits,
                       ParamGrads<T>& grads) const;

    // Split-phase path used by the trainer: per-sample convolution stages
    // (parallelizable), then both heads over a whole batch of flattened
    // features in a few GEMMs.
    struct HeadsCache {
        TensorT<T> flats;  // [B, D]
        TensorT<T> fc1_pre, fc1_post, fc2_pre, fc2_post, fc4_pre, fc4_post;
        bool valid = false;
    };
    // returns the flat feature row [1, D]
    TensorT<T> conv_forward(const TensorT<T>& patch, const std::vector<double>& aux,
                            Cache* cache) const;
    // densities [B,1], logits [B,K]
    void heads_forward(const TensorT<T>& flats, HeadsCache* cache, TensorT<T>* densities,
                       TensorT<T>* logits) const;
    // FC grads accumulate into `grads`; d_flats [B,D] is overwritten
    void heads_backward(const HeadsCache& cache, const TensorT<T>& d_density,
                        const TensorT<T>& d_logits, ParamGrads<T>& grads,
                        TensorT<T>* d_flats) const;
    // chains one sample's flat-feature grad [1,D] back through the stages
    void conv_backward(const Cache& cache, const TensorT<T>& d_flat,
                       ParamGrads<T>& grads) const;
    int heads_slot_base() const;

    // Fixed enumeration order shared by grads, Adam and serialization.
    void visit_layers(const std::function<void(const std::string&, LayerParams<T>&)>& fn);
    void visit_layers(
        const std::function<void(const std::string&, const LayerParams<T>&)>& fn) const;

    ParamGrads<T> make_grads() const;
    void install_grads(const ParamGrads<T>& grads);
    void adam_update(OptimizerConfig& cfg);

    std::vector<ParamRow> param_table() const;
    long long param_total() const;
};

// Table-style parameter accounting; the delta row documents the historical
// 16-output class head this build replaces with 15 classes.
struct ParamReport {
    std::vector<ParamRow> rows;
    long long total = 0;
    long long total_with_16_class_head = 0;
};
ParamReport count_params(const CountingModel<float>& model);
std::string format_param_report(const ParamReport& report, const std::string& name);

}  // namespace acnn
