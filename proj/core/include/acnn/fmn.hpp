#pragma once

#include <vector>

#include "acnn/layers.hpp"
#include "acnn/rng.hpp"

namespace acnn {

// Target shape of the generated convolution: F filters over C input channels.
struct FilterShape {
    int f = 0, c = 0, kh = 0, kw = 0;
    long long weight_len() const { return static_cast<long long>(f) * c * kh * kw; }
    // flat layout: F*C*kh*kw weights (row-major over F,C,kh,kw) then F biases
    long long flat_len() const { return weight_len() + f; }
};

// Small fully connected net mapping a normalized auxiliary vector to a flat
// filter+bias vector. Hidden stages use tanh, the output stage is linear;
// stage widths strictly increase toward the output.
template <typename T>
struct FilterManifoldNet {
    int aux_dim = 1;
    std::vector<int> hidden{10, 40};
    FilterShape out;
    std::vector<LayerParams<T>> stages;

    struct Cache {
        TensorT<T> aux;                 // [1,aux_dim]
        std::vector<TensorT<T>> pre;    // pre-activation per stage
        std::vector<TensorT<T>> post;   // post-activation per stage
    };

    void build(int aux_dimension, std::vector<int> hidden_sizes, FilterShape output, Rng& rng);

    long long param_count() const;

    // filters [F,C,kh,kw], bias [F]; cache may be null for inference.
    void forward(const std::vector<double>& aux, TensorT<T>* filters, TensorT<T>* bias,
                 Cache* cache) const;

    // Chains one sample's flat gradient back through the dense stages,
    // accumulating into the caller's per-stage buffers. Const so concurrent
    // workers can share the net while writing to private buffers.
    void backward_into(const Cache& cache, const TensorT<T>& grad_filters,
                       const TensorT<T>& grad_bias, const std::vector<TensorT<T>*>& grad_w,
                       const std::vector<TensorT<T>*>& grad_b) const;

    // Accumulates into the stages' own grad buffers.
    void backward(const Cache& cache, const TensorT<T>& grad_filters,
                  const TensorT<T>& grad_bias);
};

// One filter tensor per grid entry, for manifold inspection.
template <typename T>
std::vector<TensorT<T>> manifold_probe(const FilterManifoldNet<T>& fmn,
                                       const std::vector<std::vector<double>>& aux_grid);

}  // namespace acnn
