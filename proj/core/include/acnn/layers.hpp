#pragma once

#include <vector>

#include "acnn/rng.hpp"
#include "acnn/tensor.hpp"

// Layer-wise forward/backward kernels. Gradient convention throughout:
// gradients w.r.t. parameters ACCUMULATE (+=) into the given buffers so a
// mini-batch can sum sample contributions; gradients w.r.t. inputs are
// overwritten.

namespace acnn {

enum class Padding { valid, same };

enum class Activation { identity, relu, leaky_relu, sigmoid, tanh };

// Parameters of one learnable stage plus matching grad and Adam moment
// buffers (shape-locked to the parameters).
template <typename T>
struct LayerParams {
    TensorT<T> w, b;
    TensorT<T> gw, gb;
    TensorT<T> mw, vw, mb, vb;
    bool grads_fresh = false;

    void alloc_like_params() {
        gw = TensorT<T>(w.shape());
        gb = TensorT<T>(b.shape());
        mw = TensorT<T>(w.shape());
        vw = TensorT<T>(w.shape());
        mb = TensorT<T>(b.shape());
        vb = TensorT<T>(b.shape());
        grads_fresh = false;
    }
    void zero_grads() {
        gw.fill(T(0));
        gb.fill(T(0));
        grads_fresh = false;
    }
    long long param_count() const { return w.numel() + b.numel(); }
};

// Gradient buffers mirroring a model's layer list, for workers that
// accumulate per-chunk gradients outside the shared model.
template <typename T>
struct ParamGrads {
    std::vector<TensorT<T>> gw, gb;

    void add_slot(const LayerParams<T>& lp) {
        gw.emplace_back(lp.w.shape());
        gb.emplace_back(lp.b.shape());
    }
    void zero() {
        for (auto& t : gw) t.fill(T(0));
        for (auto& t : gb) t.fill(T(0));
    }
    void add(const ParamGrads& o) {
        for (size_t i = 0; i < gw.size(); ++i) {
            for (long long j = 0; j < gw[i].numel(); ++j) gw[i][j] += o.gw[i][j];
            for (long long j = 0; j < gb[i].numel(); ++j) gb[i][j] += o.gb[i][j];
        }
    }
    void scale(T f) {
        for (auto& t : gw)
            for (long long j = 0; j < t.numel(); ++j) t[j] *= f;
        for (auto& t : gb)
            for (long long j = 0; j < t.numel(); ++j) t[j] *= f;
    }
};

// --- convolution (cross-correlation, stride 1) ---

// input [N,C,H,W], filters [F,C,kh,kw] (kh,kw odd), bias [F].
// "same" zero-pads so the spatial size is preserved.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& filters,
                          const TensorT<T>& bias, Padding pad);

// Any of the grad outputs may be null to skip its computation.
// grad_filters/grad_bias accumulate; grad_input is overwritten.
template <typename T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& filters, Padding pad,
                     const TensorT<T>& grad_out, TensorT<T>* grad_input,
                     TensorT<T>* grad_filters, TensorT<T>* grad_bias);

// --- 2x2 stride-2 max pooling, ceil mode ---

// argmax records the flat input index feeding each output cell.
template <typename T>
TensorT<T> maxpool2_forward(const TensorT<T>& input, std::vector<long long>* argmax);

template <typename T>
TensorT<T> maxpool2_backward(const TensorT<T>& grad_out, const Shape& input_shape,
                             const std::vector<long long>& argmax);

// --- local response normalization across channels ---

struct LrnConfig {
    double k = 2.0;
    int n = 5;  // window size, odd
    double alpha = 1e-4;
    double beta = 0.75;
};

template <typename T>
TensorT<T> lrn_forward(const TensorT<T>& input, const LrnConfig& cfg);

template <typename T>
TensorT<T> lrn_backward(const TensorT<T>& input, const LrnConfig& cfg,
                        const TensorT<T>& grad_out);

// --- batch normalization (per channel over N,H,W) ---

template <typename T>
struct BatchNorm {
    explicit BatchNorm(int channels = 0) { reset(channels); }

    void reset(int channels);

    struct Cache {
        TensorT<T> input;
        std::vector<double> mean, inv_std;
    };

    // train mode uses batch statistics and updates the running estimates;
    // infer mode requires at least one prior training step.
    TensorT<T> forward(const TensorT<T>& input, bool train, Cache* cache);
    // read-only normalization by the running statistics
    TensorT<T> infer(const TensorT<T>& input) const {
        return const_cast<BatchNorm*>(this)->forward(input, false, nullptr);
    }
    // Accumulates dgamma/dbeta into the given buffers; returns grad w.r.t.
    // input.
    TensorT<T> backward_into(const Cache& cache, const TensorT<T>& grad_out,
                             TensorT<T>& grad_gamma, TensorT<T>& grad_beta) const;
    // Same, into the layer's own grad buffers.
    TensorT<T> backward(const Cache& cache, const TensorT<T>& grad_out);

    int channels = 0;
    double momentum = 0.9;
    double eps = 1e-5;
    LayerParams<T> params;  // w = gamma, b = beta
    // running statistics stay in T precision so checkpoints round-trip
    // bit-exactly through the float32 blob
    std::vector<T> running_mean, running_var;
    bool initialized = false;
};

// --- dense (affine) layer ---

// input [N,D], w [D,M], b [M] -> [N,M]
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& w, const TensorT<T>& b);

template <typename T>
void dense_backward(const TensorT<T>& input, const TensorT<T>& w, const TensorT<T>& grad_out,
                    TensorT<T>* grad_input, TensorT<T>* grad_w, TensorT<T>* grad_b);

// --- elementwise activations ---

template <typename T>
TensorT<T> activate(const TensorT<T>& x, Activation act, double leaky_slope = 0.01);

// Needs both the pre-activation input and the produced output so each kind
// can use whichever is cheaper.
template <typename T>
TensorT<T> activate_backward(const TensorT<T>& x, const TensorT<T>& y, Activation act,
                             double leaky_slope, const TensorT<T>& grad_out);

// --- initialization ---

// He-style fan-in init for ReLU stacks.
template <typename T>
void init_he(TensorT<T>& w, long long fan_in, Rng& rng);

// Xavier-style for tanh/linear stages.
template <typename T>
void init_xavier(TensorT<T>& w, long long fan_in, long long fan_out, Rng& rng);

}  // namespace acnn
