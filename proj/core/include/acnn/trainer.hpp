#pragma once

#include "acnn/density.hpp"
#include "acnn/metrics.hpp"
#include "acnn/model.hpp"

namespace acnn {

struct TrainConfig {
    double lambda = 0.1;  // weight of the count-class loss
    int epochs = 30;
    int batch_size = 64;
    uint64_t seed = 1;
    OptimizerConfig opt;
    int patience = 10;  // early stop on validation MAE
    int grad_chunk = 8;  // samples per deterministic gradient chunk
    bool verbose = false;
};

struct LossCurves {
    std::vector<double> train_loss;
    // early-stop metric per epoch: whole-scene count MAE when validation
    // scenes are supplied, otherwise patch-level density MAE
    std::vector<double> val_mae;
    int best_epoch = -1;
};

// One fully described scene for evaluation.
struct SceneData {
    std::string id;
    Tensor image;
    PerspectiveMap pmap;
    Annotation ann;
    TensorD dmap;
    SceneContext ctx;
    CameraExtrinsics cam;
};

// Multi-task mini-batch training: MSE on the center density plus
// lambda * cross-entropy on the count class. Early stopping tracks counting
// MAE over val_scenes when given (at eval_stride), else the val-patch
// density MAE. Deterministic per seed for any ACNN_THREADS value. Throws
// NumericError with diagnostics on NaN loss.
LossCurves train_counting(CountingModel<float>& model, const std::vector<PatchSample>& train,
                          const std::vector<PatchSample>& val, const TrainConfig& cfg,
                          const std::vector<SceneData>* val_scenes = nullptr,
                          int eval_stride = 8);

// Grid walk shared by predict_count: evaluates predict(r,c) at patch centers
// on an s-strided grid inside the ROI and returns s^2 times the sum.
// Predictions snap to 2^-24 so per-region sums add exactly.
double strided_count_estimate(int rows, int cols, int stride, const Mask& roi,
                              const std::function<double(int, int)>& predict);

// Evaluates the model at patch centers on an s-strided grid inside the ROI;
// count estimate = s^2 * sum of predictions.
double predict_count(const CountingModel<float>& model, const Tensor& image,
                     const PerspectiveMap& pmap, const SceneContext& ctx, int stride,
                     const Mask& roi);

struct SceneEval {
    std::string id;
    double truth = 0.0;
    double predicted = 0.0;
    std::vector<double> region_truth, region_predicted;
};

struct EvalResult {
    double mae = 0.0;
    std::vector<SceneEval> scenes;
    std::vector<double> region_mae;  // when region masks supplied
};

// MAE over scenes; with region masks, per-region counts too (the full-ROI
// count is then the sum of the regional counts).
EvalResult eval_counting(const CountingModel<float>& model, const std::vector<SceneData>& scenes,
                         int stride, const std::vector<Mask>* region_masks = nullptr);

}  // namespace acnn
