#pragma once

#include "acnn/fmn.hpp"

namespace acnn {

// Convolution whose filters and bias come from the FMN, so they change with
// the auxiliary input at inference time. Numerically identical to generating
// the filters, running the static convolution, then applying the activation.
template <typename T>
struct AdaptiveConvLayer {
    FilterManifoldNet<T> fmn;
    Activation act = Activation::relu;
    double leaky_slope = 0.01;
    Padding pad = Padding::same;

    struct Cache {
        typename FilterManifoldNet<T>::Cache fmn_cache;
        TensorT<T> filters, bias;
        TensorT<T> input, pre_act, out;
        bool valid = false;
    };

    TensorT<T> forward(const TensorT<T>& input, const std::vector<double>& aux,
                       Cache* cache) const {
        TensorT<T> filters, bias;
        fmn.forward(aux, &filters, &bias, cache ? &cache->fmn_cache : nullptr);
        TensorT<T> pre = conv2d_forward(input, filters, bias, pad);
        TensorT<T> out = activate(pre, act, leaky_slope);
        if (cache) {
            cache->filters = std::move(filters);
            cache->bias = std::move(bias);
            cache->input = input;
            cache->pre_act = std::move(pre);
            cache->out = out;
            cache->valid = true;
        }
        return out;
    }

    // Returns grad w.r.t. the layer input; FMN parameter grads accumulate
    // into the caller's buffers (one w/b pair per FMN stage). Const so
    // parallel workers can share the layer.
    TensorT<T> backward_into(const Cache& cache, const TensorT<T>& grad_out,
                             const std::vector<TensorT<T>*>& fmn_grad_w,
                             const std::vector<TensorT<T>*>& fmn_grad_b,
                             bool need_grad_input = true) const {
        if (!cache.valid)
            throw ContractViolation("adaptive conv backward: no cached forward pass");
        TensorT<T> g = activate_backward(cache.pre_act, cache.out, act, leaky_slope, grad_out);
        TensorT<T> grad_input;
        TensorT<T> grad_filters(cache.filters.shape());
        TensorT<T> grad_bias(cache.bias.shape());
        conv2d_backward(cache.input, cache.filters, pad, g,
                        need_grad_input ? &grad_input : nullptr, &grad_filters, &grad_bias);
        fmn.backward_into(cache.fmn_cache, grad_filters, grad_bias, fmn_grad_w, fmn_grad_b);
        return grad_input;
    }

    TensorT<T> backward(const Cache& cache, const TensorT<T>& grad_out) {
        std::vector<TensorT<T>*> gw, gb;
        for (auto& s : fmn.stages) {
            gw.push_back(&s.gw);
            gb.push_back(&s.gb);
            s.grads_fresh = true;
        }
        return backward_into(cache, grad_out, gw, gb);
    }

    long long param_count() const { return fmn.param_count(); }
};

}  // namespace acnn
