#include "acnn/fmn.hpp"

#include <cmath>

namespace acnn {

template <typename T>
void FilterManifoldNet<T>::build(int aux_dimension, std::vector<int> hidden_sizes,
                                 FilterShape output, Rng& rng) {
    if (aux_dimension < 1) throw std::invalid_argument("fmn: aux dimension must be positive");
    if (output.f < 1 || output.c < 1 || output.kh < 1 || output.kw < 1)
        throw std::invalid_argument("fmn: bad output filter shape");
    const long long out_len = output.flat_len();
    int prev = 0;
    for (int hdim : hidden_sizes) {
        if (hdim <= prev) throw std::invalid_argument("fmn: hidden sizes must strictly increase");
        prev = hdim;
    }
    if (!hidden_sizes.empty() && out_len <= hidden_sizes.back())
        throw std::invalid_argument("fmn: output must be wider than the last hidden stage");

    aux_dim = aux_dimension;
    hidden = std::move(hidden_sizes);
    out = output;
    stages.clear();

    std::vector<int> widths;
    widths.push_back(aux_dim);
    for (int hdim : hidden) widths.push_back(hdim);
    widths.push_back(static_cast<int>(out_len));

    // Hidden stages get tanh-friendly fan init. The output stage is scaled so
    // the generated filters start with the magnitude a static conv layer of
    // the same fan-in would be initialized with.
    const double target_std = std::sqrt(1.0 / (static_cast<double>(out.c) * out.kh * out.kw));
    for (size_t s = 0; s + 1 < widths.size(); ++s) {
        LayerParams<T> lp;
        lp.w = TensorT<T>(Shape{widths[s], widths[s + 1]});
        lp.b = TensorT<T>(Shape{widths[s + 1]});
        const bool is_output = (s + 2 == widths.size());
        if (is_output) {
            const double w_std = target_std / std::sqrt(static_cast<double>(widths[s]));
            for (long long i = 0; i < lp.w.numel(); ++i)
                lp.w[i] = static_cast<T>(rng.normal(0.0, w_std));
            for (long long i = 0; i < lp.b.numel(); ++i)
                lp.b[i] = static_cast<T>(rng.normal(0.0, target_std));
        } else {
            init_xavier(lp.w, widths[s], widths[s + 1], rng);
        }
        lp.alloc_like_params();
        stages.push_back(std::move(lp));
    }
}

template <typename T>
long long FilterManifoldNet<T>::param_count() const {
    long long n = 0;
    for (const auto& s : stages) n += s.param_count();
    return n;
}

template <typename T>
void FilterManifoldNet<T>::forward(const std::vector<double>& aux, TensorT<T>* filters,
                                   TensorT<T>* bias, Cache* cache) const {
    if (static_cast<int>(aux.size()) != aux_dim)
        throw std::invalid_argument("fmn: aux dimension mismatch, got " +
                                    std::to_string(aux.size()) + " want " +
                                    std::to_string(aux_dim));
    TensorT<T> x(Shape{1, aux_dim});
    for (int i = 0; i < aux_dim; ++i) x[i] = static_cast<T>(aux[i]);
    if (cache) {
        cache->aux = x;
        cache->pre.clear();
        cache->post.clear();
    }
    for (size_t s = 0; s < stages.size(); ++s) {
        TensorT<T> pre = dense_forward(x, stages[s].w, stages[s].b);
        const bool is_output = (s + 1 == stages.size());
        TensorT<T> post = is_output ? pre : activate(pre, Activation::tanh);
        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        x = std::move(post);
    }
    const long long wlen = out.weight_len();
    if (filters) {
        *filters = TensorT<T>(Shape{out.f, out.c, out.kh, out.kw});
        for (long long i = 0; i < wlen; ++i) (*filters)[i] = x[i];
    }
    if (bias) {
        *bias = TensorT<T>(Shape{out.f});
        for (int i = 0; i < out.f; ++i) (*bias)[i] = x[wlen + i];
    }
}

template <typename T>
void FilterManifoldNet<T>::backward_into(const Cache& cache, const TensorT<T>& grad_filters,
                                         const TensorT<T>& grad_bias,
                                         const std::vector<TensorT<T>*>& grad_w,
                                         const std::vector<TensorT<T>*>& grad_b) const {
    if (cache.pre.size() != stages.size())
        throw ContractViolation("fmn backward: missing cached activations");
    if (grad_w.size() != stages.size() || grad_b.size() != stages.size())
        throw std::invalid_argument("fmn backward: grad buffer count mismatch");
    const long long wlen = out.weight_len();
    TensorT<T> g(Shape{1, static_cast<int>(out.flat_len())});
    for (long long i = 0; i < wlen; ++i) g[i] = grad_filters[i];
    for (int i = 0; i < out.f; ++i) g[wlen + i] = grad_bias[i];

    for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
        const bool is_output = (s + 1 == static_cast<int>(stages.size()));
        if (!is_output)
            g = activate_backward(cache.pre[s], cache.post[s], Activation::tanh, 0.0, g);
        const TensorT<T>& x = (s == 0) ? cache.aux : cache.post[s - 1];
        TensorT<T> gx;
        dense_backward(x, stages[s].w, g, s > 0 ? &gx : nullptr, grad_w[s], grad_b[s]);
        if (s > 0) g = std::move(gx);
    }
}

template <typename T>
void FilterManifoldNet<T>::backward(const Cache& cache, const TensorT<T>& grad_filters,
                                    const TensorT<T>& grad_bias) {
    std::vector<TensorT<T>*> gw, gb;
    for (auto& s : stages) {
        gw.push_back(&s.gw);
        gb.push_back(&s.gb);
        s.grads_fresh = true;
    }
    backward_into(cache, grad_filters, grad_bias, gw, gb);
}

template <typename T>
std::vector<TensorT<T>> manifold_probe(const FilterManifoldNet<T>& fmn,
                                       const std::vector<std::vector<double>>& aux_grid) {
    if (aux_grid.empty()) throw std::invalid_argument("manifold_probe: empty aux grid");
    std::vector<TensorT<T>> snapshots;
    snapshots.reserve(aux_grid.size());
    for (const auto& aux : aux_grid) {
        TensorT<T> filters;
        fmn.forward(aux, &filters, nullptr, nullptr);
        snapshots.push_back(std::move(filters));
    }
    return snapshots;
}

template struct FilterManifoldNet<float>;
template struct FilterManifoldNet<double>;
template std::vector<TensorT<float>> manifold_probe<float>(
    const FilterManifoldNet<float>&, const std::vector<std::vector<double>>&);
template std::vector<TensorT<double>> manifold_probe<double>(
    const FilterManifoldNet<double>&, const std::vector<std::vector<double>>&);

}  // namespace acnn
