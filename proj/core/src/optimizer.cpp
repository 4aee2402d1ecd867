#include "acnn/optimizer.hpp"

#include <cmath>

#include "acnn/errors.hpp"

namespace acnn {

namespace {

template <typename T>
void adam_tensor(TensorT<T>& p, const TensorT<T>& g, TensorT<T>& m, TensorT<T>& v,
                 const OptimizerConfig& cfg) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(cfg.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(cfg.step));
    for (long long i = 0; i < p.numel(); ++i) {
        const double gi = g[i];
        const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p[i] -= static_cast<T>(cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
    }
}

}  // namespace

template <typename T>
void adam_apply(LayerParams<T>& params, const OptimizerConfig& cfg) {
    if (cfg.step < 1) throw ContractViolation("adam: step counter not advanced");
    if (!params.grads_fresh)
        throw ContractViolation("adam: update with stale or unset gradients");
    adam_tensor(params.w, params.gw, params.mw, params.vw, cfg);
    adam_tensor(params.b, params.gb, params.mb, params.vb, cfg);
    params.grads_fresh = false;
}

template void adam_apply<float>(LayerParams<float>&, const OptimizerConfig&);
template void adam_apply<double>(LayerParams<double>&, const OptimizerConfig&);

}  // namespace acnn
