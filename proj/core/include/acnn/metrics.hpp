#pragma once

#include <vector>

#include "acnn/tensor.hpp"

namespace acnn {

// Mean absolute error between predicted and true counts.
double evaluate_mae(const std::vector<double>& predicted, const std::vector<double>& truth);

// 10*log10(1/MSE) for unit-range images; identical images cap at +100 dB.
constexpr double kPsnrCap = 100.0;
double psnr(const Tensor& reference, const Tensor& test);

}  // namespace acnn
