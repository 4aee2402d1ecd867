#include "acnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acnn/losses.hpp"
#include "acnn/parallel.hpp"

namespace acnn {

namespace {

// prediction quantum: sums over grid subsets stay exact in double
constexpr double kPredQuantum = 0x1.0p-34;

std::vector<std::vector<double>> normalize_all(const CountingModel<float>& model,
                                               const std::vector<PatchSample>& samples) {
    std::vector<std::vector<double>> out(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) out[i] = model.aux_norm.normalize(samples[i].aux);
    return out;
}

// Mini-batch processing splits into per-sample conv phases (parallel, chunk
// buffers keep the reduction order fixed) and one batched pass over the FC
// heads, whose weight matrices would otherwise be re-streamed per sample.
struct BatchResult {
    double loss = 0.0;          // mean combined loss
    Tensor densities;           // [B,1]
};

BatchResult run_batch(const CountingModel<float>& model,
                      const std::vector<PatchSample>& samples,
                      const std::vector<std::vector<double>>& aux,
                      const std::vector<size_t>& index, size_t start, long long bsz,
                      double lambda, long long grad_chunk,
                      std::vector<ParamGrads<float>>* chunk_grads, ParamGrads<float>* fc_grads) {
    const bool training = chunk_grads != nullptr;
    const float scale = static_cast<float>(model.target_scale);
    const int patch = model.spec.patch_size;
    const int flat_dim = model.spec.flatten_size();

    std::vector<typename CountingModel<float>::Cache> caches(training ? bsz : 0);
    Tensor flats(Shape{static_cast<int>(bsz), flat_dim});
    parallel_chunks(bsz, grad_chunk, [&](int, long long b, long long e) {
        for (long long i = b; i < e; ++i) {
            const size_t idx = index[start + i];
            Tensor flat = model.conv_forward(
                samples[idx].patch.reshaped(Shape{1, 1, patch, patch}), aux[idx],
                training ? &caches[i] : nullptr);
            std::copy(flat.data(), flat.data() + flat_dim, &flats.at(static_cast<int>(i), 0));
        }
    });

    typename CountingModel<float>::HeadsCache heads_cache;
    Tensor densities, logits;
    model.heads_forward(flats, training ? &heads_cache : nullptr, &densities, &logits);

    Tensor targets(Shape{static_cast<int>(bsz), 1});
    std::vector<int> labels(bsz);
    for (long long i = 0; i < bsz; ++i) {
        const auto& s = samples[index[start + i]];
        targets[i] = s.target * scale;
        labels[static_cast<size_t>(i)] = s.count_class;
    }
    auto reg = loss_mse(densities, targets);
    auto cls = loss_softmax_xent(logits, labels);

    BatchResult result;
    // report the density MSE in raw units
    result.loss = reg.value / (static_cast<double>(scale) * scale) + lambda * cls.value;
    result.densities = densities;
    if (!training) return result;

    for (long long i = 0; i < cls.grad.numel(); ++i)
        cls.grad[i] = static_cast<float>(lambda) * cls.grad[i];
    Tensor d_flats;
    model.heads_backward(heads_cache, reg.grad, cls.grad, *fc_grads, &d_flats);

    parallel_chunks(bsz, grad_chunk, [&](int chunk, long long b, long long e) {
        (*chunk_grads)[chunk].zero();
        for (long long i = b; i < e; ++i) {
            Tensor d_flat(Shape{1, flat_dim});
            std::copy(&d_flats.at(static_cast<int>(i), 0),
                      &d_flats.at(static_cast<int>(i), 0) + flat_dim, d_flat.data());
            model.conv_backward(caches[i], d_flat, (*chunk_grads)[chunk]);
        }
    });
    return result;
}

}  // namespace

LossCurves train_counting(CountingModel<float>& model, const std::vector<PatchSample>& train,
                          const std::vector<PatchSample>& val, const TrainConfig& cfg,
                          const std::vector<SceneData>* val_scenes, int eval_stride) {
    if (train.empty()) throw std::invalid_argument("train_counting: no training samples");
    if (cfg.lambda < 0) throw std::invalid_argument("train_counting: lambda must be >= 0");
    if (cfg.batch_size < 1 || cfg.epochs < 1)
        throw std::invalid_argument("train_counting: bad batch size or epoch count");

    {
        std::vector<std::vector<double>> aux_values;
        aux_values.reserve(train.size());
        for (const auto& s : train) aux_values.push_back(s.aux);
        model.aux_norm = AuxNormalization::fit(model.spec.aux, aux_values);
    }
    const auto train_aux = normalize_all(model, train);
    const auto val_aux = normalize_all(model, val);

    {
        // standardize the regression targets so the density loss competes
        // with the class loss on an O(1) scale
        double mean = 0.0;
        for (const auto& s : train) mean += s.target;
        mean /= static_cast<double>(train.size());
        double var = 0.0;
        for (const auto& s : train) {
            const double d = s.target - mean;
            var += d * d;
        }
        var /= static_cast<double>(train.size());
        model.target_scale = 1.0 / std::max(std::sqrt(var), 1e-9);
    }

    Rng rng(cfg.seed);
    OptimizerConfig opt = cfg.opt;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    const int n_chunks_max = chunk_count(cfg.batch_size, cfg.grad_chunk);
    std::vector<ParamGrads<float>> chunk_grads;
    for (int c = 0; c < n_chunks_max; ++c) chunk_grads.push_back(model.make_grads());
    ParamGrads<float> total = model.make_grads();

    LossCurves curves;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<Tensor> best_w, best_b;
    auto snapshot = [&] {
        best_w.clear();
        best_b.clear();
        model.visit_layers([&](const std::string&, const LayerParams<float>& lp) {
            best_w.push_back(lp.w);
            best_b.push_back(lp.b);
        });
    };
    auto restore = [&] {
        size_t i = 0;
        model.visit_layers([&](const std::string&, LayerParams<float>& lp) {
            lp.w = best_w[i];
            lp.b = best_b[i];
            ++i;
        });
    };

    std::vector<size_t> val_order(val.size());
    std::iota(val_order.begin(), val_order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const long long bsz =
                std::min<size_t>(cfg.batch_size, order.size() - start);
            const int n_chunks = chunk_count(bsz, cfg.grad_chunk);
            total.zero();
            auto batch = run_batch(model, train, train_aux, order, start, bsz, cfg.lambda,
                                   cfg.grad_chunk, &chunk_grads, &total);
            for (int c = 0; c < n_chunks; ++c) total.add(chunk_grads[c]);
            if (!std::isfinite(batch.loss))
                throw NumericError("train_counting: NaN loss at epoch " +
                                   std::to_string(epoch) + ", batch offset " +
                                   std::to_string(start));
            model.install_grads(total);
            model.adam_update(opt);
            epoch_loss += batch.loss * static_cast<double>(bsz);
        }
        epoch_loss /= static_cast<double>(order.size());
        curves.train_loss.push_back(epoch_loss);

        double val_metric;
        if (val_scenes && !val_scenes->empty()) {
            // counting MAE over the validation scenes
            model.trained = true;  // predict_count guard; restored on exit anyway
            double sum = 0.0;
            for (const auto& scene : *val_scenes) {
                const Mask& roi = scene.ann.roi.rows
                                      ? scene.ann.roi
                                      : Mask::full(scene.image.dim(0), scene.image.dim(1));
                const double pred = predict_count(model, scene.image, scene.pmap, scene.ctx,
                                                  eval_stride, roi);
                sum += std::abs(pred - count_in_roi(scene.dmap, roi));
            }
            val_metric = sum / static_cast<double>(val_scenes->size());
        } else if (!val.empty()) {
            double sum = 0.0;
            for (size_t start = 0; start < val.size(); start += cfg.batch_size) {
                const long long bsz = std::min<size_t>(cfg.batch_size, val.size() - start);
                auto batch = run_batch(model, val, val_aux, val_order, start, bsz, cfg.lambda,
                                       cfg.grad_chunk, nullptr, nullptr);
                for (long long i = 0; i < bsz; ++i)
                    sum += std::abs(static_cast<double>(batch.densities[i]) /
                                        model.target_scale -
                                    val[val_order[start + i]].target);
            }
            val_metric = sum / static_cast<double>(val.size());
        } else {
            val_metric = epoch_loss;
        }
        curves.val_mae.push_back(val_metric);
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d train_loss %.6g val %.6g\n", epoch, epoch_loss,
                         val_metric);

        if (val_metric < best_val) {
            best_val = val_metric;
            curves.best_epoch = epoch;
            since_best = 0;
            snapshot();
        } else if (++since_best > cfg.patience) {
            break;
        }
    }
    if (curves.best_epoch >= 0) restore();
    model.last_opt = opt;
    model.trained = true;
    return curves;
}

namespace {

std::vector<std::pair<int, int>> prediction_grid(int rows, int cols, int stride,
                                                 const Mask& roi) {
    if (stride < 1) throw std::invalid_argument("predict_count: stride must be >= 1");
    if (roi.rows != rows || roi.cols != cols)
        throw std::invalid_argument("predict_count: roi size mismatch");
    std::vector<std::pair<int, int>> points;
    for (int r = stride / 2; r < rows; r += stride)
        for (int c = stride / 2; c < cols; c += stride)
            if (roi.at(r, c)) points.emplace_back(r, c);
    return points;
}

double quantized_grid_sum(const std::vector<double>& preds, int stride) {
    double sum = 0.0;
    for (double p : preds) sum += std::nearbyint(p / kPredQuantum) * kPredQuantum;
    return static_cast<double>(stride) * stride * sum;
}

}  // namespace

double strided_count_estimate(int rows, int cols, int stride, const Mask& roi,
                              const std::function<double(int, int)>& predict) {
    const auto points = prediction_grid(rows, cols, stride, roi);
    if (points.empty()) return 0.0;
    std::vector<double> preds(points.size(), 0.0);
    parallel_chunks(static_cast<long long>(points.size()), 32,
                    [&](int, long long b, long long e) {
                        for (long long i = b; i < e; ++i)
                            preds[i] = predict(points[i].first, points[i].second);
                    });
    return quantized_grid_sum(preds, stride);
}

double predict_count(const CountingModel<float>& model, const Tensor& image,
                     const PerspectiveMap& pmap, const SceneContext& ctx, int stride,
                     const Mask& roi) {
    if (!model.trained) throw ContractViolation("predict_count: untrained model");
    const auto points = prediction_grid(image.dim(0), image.dim(1), stride, roi);
    if (points.empty()) return 0.0;
    const int patch = model.spec.patch_size;
    const int flat_dim = model.spec.flatten_size();
    std::vector<double> preds(points.size(), 0.0);

    const long long batch = 128;
    for (size_t start = 0; start < points.size(); start += batch) {
        const long long bsz = std::min<size_t>(batch, points.size() - start);
        Tensor flats(Shape{static_cast<int>(bsz), flat_dim});
        parallel_chunks(bsz, 16, [&](int, long long b, long long e) {
            for (long long i = b; i < e; ++i) {
                const auto [r, c] = points[start + i];
                std::vector<double> aux;
                if (model.spec.aux == AuxKind::perspective)
                    aux = {pmap.at(r, 0)};
                else
                    aux = ctx.raw;
                Tensor flat = model.conv_forward(
                    extract_patch(image, r, c, patch).reshaped(Shape{1, 1, patch, patch}),
                    model.aux_norm.normalize(aux), nullptr);
                std::copy(flat.data(), flat.data() + flat_dim,
                          &flats.at(static_cast<int>(i), 0));
            }
        });
        Tensor densities;
        model.heads_forward(flats, nullptr, &densities, nullptr);
        for (long long i = 0; i < bsz; ++i)
            preds[start + i] = densities[i] / model.target_scale;
    }
    return quantized_grid_sum(preds, stride);
}

EvalResult eval_counting(const CountingModel<float>& model, const std::vector<SceneData>& scenes,
                         int stride, const std::vector<Mask>* region_masks) {
    if (!model.trained) throw ContractViolation("eval_counting: untrained model");
    if (scenes.empty()) throw std::invalid_argument("eval_counting: no scenes");
    EvalResult result;
    std::vector<double> preds, truths;
    for (const auto& scene : scenes) {
        SceneEval ev;
        ev.id = scene.id;
        const Mask& roi = scene.ann.roi.rows ? scene.ann.roi
                                             : Mask::full(scene.image.dim(0), scene.image.dim(1));
        if (region_masks && !region_masks->empty()) {
            // regional counts; the full-ROI numbers are their exact sums
            for (const auto& region : *region_masks) {
                Mask inter = roi;
                for (size_t i = 0; i < inter.on.size(); ++i)
                    inter.on[i] = inter.on[i] && region.on[i];
                ev.region_predicted.push_back(
                    predict_count(model, scene.image, scene.pmap, scene.ctx, stride, inter));
                ev.region_truth.push_back(count_in_roi(scene.dmap, inter));
            }
            ev.predicted = 0.0;
            ev.truth = 0.0;
            for (double v : ev.region_predicted) ev.predicted += v;
            for (double v : ev.region_truth) ev.truth += v;
        } else {
            ev.predicted = predict_count(model, scene.image, scene.pmap, scene.ctx, stride, roi);
            ev.truth = count_in_roi(scene.dmap, roi);
        }
        preds.push_back(ev.predicted);
        truths.push_back(ev.truth);
        result.scenes.push_back(std::move(ev));
    }
    result.mae = evaluate_mae(preds, truths);
    if (region_masks && !region_masks->empty()) {
        result.region_mae.assign(region_masks->size(), 0.0);
        for (size_t r = 0; r < region_masks->size(); ++r) {
            double sum = 0.0;
            for (const auto& ev : result.scenes)
                sum += std::abs(ev.region_predicted[r] - ev.region_truth[r]);
            result.region_mae[r] = sum / static_cast<double>(result.scenes.size());
        }
    }
    return result;
}

}  // namespace acnn
