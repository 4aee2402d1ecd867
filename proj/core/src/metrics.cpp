#include "acnn/metrics.hpp"

#include <cmath>

namespace acnn {

double evaluate_mae(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.empty() || predicted.size() != truth.size())
        throw std::invalid_argument("evaluate_mae: empty or mismatched lists");
    double sum = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted[i] - truth[i]);
    return sum / static_cast<double>(predicted.size());
}

double psnr(const Tensor& reference, const Tensor& test) {
    if (reference.shape() != test.shape())
        throw std::invalid_argument("psnr: shape mismatch " + reference.shape().str() + " vs " +
                                    test.shape().str());
    double se = 0.0;
    for (long long i = 0; i < reference.numel(); ++i) {
        const double d = static_cast<double>(reference[i]) - static_cast<double>(test[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(reference.numel());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace acnn
