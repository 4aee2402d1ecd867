#pragma once

#include "acnn/layers.hpp"

namespace acnn {

struct OptimizerConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step = 0;  // strictly increases by 1 per update

    void validate() const {
        if (lr <= 0) throw std::invalid_argument("adam: lr must be positive");
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw std::invalid_argument("adam: betas must be in (0,1)");
        if (eps <= 0) throw std::invalid_argument("adam: eps must be positive");
    }
};

// Bias-corrected Adam update for one parameter group at step cfg.step
// (already incremented by the caller). Requires fresh grads; consumes them.
template <typename T>
void adam_apply(LayerParams<T>& params, const OptimizerConfig& cfg);

// Single-group convenience: bumps the step counter, then applies.
template <typename T>
void adam_step(LayerParams<T>& params, OptimizerConfig& cfg) {
    cfg.validate();
    ++cfg.step;
    adam_apply(params, cfg);
}

}  // namespace acnn
