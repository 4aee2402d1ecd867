#pragma once

#include <vector>

#include "acnn/tensor.hpp"

namespace acnn {

template <typename T>
struct LossResult {
    double value = 0.0;
    TensorT<T> grad;  // d loss / d prediction (or logits)
};

// Mean of squared differences over every element.
template <typename T>
LossResult<T> loss_mse(const TensorT<T>& pred, const TensorT<T>& target);

// Mean cross-entropy over the batch, log-sum-exp stabilized.
// logits [N,K], labels in [0,K).
template <typename T>
LossResult<T> loss_softmax_xent(const TensorT<T>& logits, const std::vector<int>& labels);

}  // namespace acnn
