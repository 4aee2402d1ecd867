#pragma once

#include <functional>

#include "acnn/adaptive_conv.hpp"
#include "acnn/optimizer.hpp"
#include "acnn/sampling.hpp"

namespace acnn {

// --- corruption pipeline ---

// Uniform circular kernel: binary taps inside i^2+j^2 <= r^2, normalized to
// sum exactly 1 (center tap absorbs the rounding residue).
struct DiskKernel {
    int radius = 0;
    TensorD taps;  // [(2r+1),(2r+1)]
};
DiskKernel make_disk_kernel(int radius);

enum class BorderMode { reflect, periodic };

Tensor disk_blur(const Tensor& image, int radius, BorderMode border = BorderMode::reflect);

struct CorruptionConfig {
    std::vector<int> radii;
    double sigma = 0.01;  // additive Gaussian noise std on the [0,1] scale
    uint64_t seed = 0;
};

// Disk blur, then clamped additive Gaussian noise; deterministic per seed.
Tensor corrupt(const Tensor& image, const CorruptionConfig& cfg, int radius, uint64_t noise_seed);

// Procedural texture corpus: gratings, smooth noise and hard-edged shapes.
std::vector<Tensor> gen_textures(int count, int size, uint64_t seed);

// --- deconvolution model ---

// Three-layer separable topology: C vertical Lx1 filters, C horizontal 1xL
// filters (batch norm + leaky ReLU after each), and one 1x1 fusion filter
// with a sigmoid output. Adaptive layers draw their weights from an FMN
// conditioned on the blur radius.
struct DeconvSpec {
    bool adaptive = true;
    int channels = 12;
    int filter_length = 121;  // odd
    std::vector<int> fmn_hidden{10};
    double leaky_slope = 0.01;

    static DeconvSpec acnn(int filter_length = 121);
    static DeconvSpec plain_cnn(int channels = 38, int filter_length = 121);
};

// Sigmoid outputs cannot reach 0/1, so clean targets are squeezed into
// [lo, lo+span] during training and predictions are unsqueezed for scoring.
constexpr double kDeconvTargetLo = 0.02;
constexpr double kDeconvTargetSpan = 0.96;

template <typename T>
struct DeconvModel {
    DeconvSpec spec;
    AdaptiveConvLayer<T> ad1, ad2, ad3;  // adaptive path
    LayerParams<T> conv1, conv2, conv3;  // static path
    BatchNorm<T> bn1, bn2;
    AuxNormalization aux_norm;
    OptimizerConfig last_opt;
    std::vector<int> train_radii;  // radii seen during training
    bool trained = false;

    void build(const DeconvSpec& model_spec, uint64_t seed);

    struct Cache {
        int batch = 0;
        std::vector<typename AdaptiveConvLayer<T>::Cache> ad1, ad2, ad3;
        std::vector<TensorT<T>> conv_in1, conv_in2, conv_in3;  // static path inputs
        std::vector<TensorT<T>> out3_pre, out3_post;           // static path sigmoid
        TensorT<T> bn1_out, leaky1_out, bn2_out, leaky2_out;
        typename BatchNorm<T>::Cache bn1c, bn2c;
        bool valid = false;
    };

    // images [H,W]; aux normalized per image. Train mode uses batch
    // statistics; per-image convolutions run in parallel.
    std::vector<TensorT<T>> forward_batch(const std::vector<TensorT<T>>& images,
                                          const std::vector<std::vector<double>>& aux,
                                          bool train, Cache* cache);

    // Per-image conv grads land in fixed chunks of chunk_grads (chunk size 1
    // image); batch-joint BN grads land in chunk_grads[0].
    void backward_into(const Cache& cache, const std::vector<TensorT<T>>& grad_out,
                       std::vector<ParamGrads<T>>& chunk_grads) const;

    // Single-image inference with running statistics.
    TensorT<T> infer_image(const TensorT<T>& image, const std::vector<double>& aux) const;

    void visit_layers(const std::function<void(const std::string&, LayerParams<T>&)>& fn);
    void visit_layers(
        const std::function<void(const std::string&, const LayerParams<T>&)>& fn) const;
    ParamGrads<T> make_grads() const;
    void install_grads(const ParamGrads<T>& grads);
    void adam_update(OptimizerConfig& cfg);
    long long param_total() const;
};

// --- training and evaluation ---

struct DeconvTrainConfig {
    int epochs = 60;
    int batch_size = 8;
    uint64_t seed = 1;
    OptimizerConfig opt;
    int patience = 10;
    bool verbose = false;
};

struct DeconvCurves {
    std::vector<double> train_loss, val_loss;
    int best_epoch = -1;
};

// Minimizes MSE between the model output and the (squeezed) clean image over
// corrupted/clean pairs drawn from train_clean x radii.
DeconvCurves train_deconv(DeconvModel<float>& model, const std::vector<Tensor>& train_clean,
                          const std::vector<Tensor>& val_clean, const std::vector<int>& radii,
                          const CorruptionConfig& corruption, const DeconvTrainConfig& cfg);

struct DeconvEvalRow {
    int radius = 0;
    bool seen = false;
    double psnr_blurred = 0.0;
    double psnr_model = 0.0;
    double delta = 0.0;
};

std::vector<DeconvEvalRow> eval_deconv(const DeconvModel<float>& model,
                                       const std::vector<Tensor>& test_clean,
                                       const std::vector<int>& test_radii,
                                       const std::vector<int>& train_radii,
                                       const CorruptionConfig& corruption);

}  // namespace acnn
