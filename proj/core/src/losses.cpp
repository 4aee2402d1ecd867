#include "acnn/losses.hpp"

#include <cmath>

namespace acnn {

template <typename T>
LossResult<T> loss_mse(const TensorT<T>& pred, const TensorT<T>& target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("loss_mse: shape mismatch " + pred.shape().str() + " vs " +
                                    target.shape().str());
    const long long n = pred.numel();
    LossResult<T> res;
    res.grad = TensorT<T>(pred.shape());
    double sum = 0.0;
    for (long long i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        sum += d * d;
        res.grad[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
    }
    res.value = sum / static_cast<double>(n);
    return res;
}

template <typename T>
LossResult<T> loss_softmax_xent(const TensorT<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw std::invalid_argument("loss_softmax_xent: logits must be [N,K]");
    const int n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("loss_softmax_xent: label count mismatch");
    LossResult<T> res;
    res.grad = TensorT<T>(logits.shape());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= k)
            throw std::invalid_argument("loss_softmax_xent: label " + std::to_string(y) +
                                        " out of [0," + std::to_string(k) + ")");
        double mx = logits.at(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.at(i, j)));
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(logits.at(i, j)) - mx);
        const double log_z = std::log(z) + mx;
        total += log_z - static_cast<double>(logits.at(i, y));
        for (int j = 0; j < k; ++j) {
            const double p = std::exp(static_cast<double>(logits.at(i, j)) - log_z);
            res.grad.at(i, j) = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / n);
        }
    }
    res.value = total / n;
    return res;
}

template LossResult<float> loss_mse<float>(const TensorT<float>&, const TensorT<float>&);
template LossResult<double> loss_mse<double>(const TensorT<double>&, const TensorT<double>&);
template LossResult<float> loss_softmax_xent<float>(const TensorT<float>&,
                                                    const std::vector<int>&);
template LossResult<double> loss_softmax_xent<double>(const TensorT<double>&,
                                                      const std::vector<int>&);

}  // namespace acnn
