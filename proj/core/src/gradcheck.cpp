#include "acnn/gradcheck.hpp"

#include <cmath>

#include "acnn/adaptive_conv.hpp"
#include "acnn/errors.hpp"
#include "acnn/layers.hpp"
#include "acnn/losses.hpp"

namespace acnn {

double fd_max_rel_error(const std::function<double()>& loss,
                        const std::vector<GradCheckItem>& items, double step) {
    double worst = 0.0;
    for (const auto& item : items) {
        for (long long i = 0; i < item.count; ++i) {
            const double a = item.analytic[i];
            if (!std::isfinite(a))
                throw NumericError("gradcheck: non-finite analytic gradient in " + item.name);
            const double saved = item.values[i];
            item.values[i] = saved + step;
            const double fp = loss();
            item.values[i] = saved - step;
            const double fm = loss();
            item.values[i] = saved;
            const double n = (fp - fm) / (2.0 * step);
            if (!std::isfinite(n))
                throw NumericError("gradcheck: non-finite numeric gradient in " + item.name);
            const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

namespace {

TensorD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    TensorD t(s);
    for (long long i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

GradSuiteResult check_dense_mse() {
    Rng rng(11);
    TensorD input = random_tensor(Shape{2, 5}, rng);
    TensorD w = random_tensor(Shape{5, 4}, rng, 0.5);
    TensorD b = random_tensor(Shape{4}, rng, 0.1);
    TensorD target = random_tensor(Shape{2, 4}, rng);

    auto loss = [&] { return loss_mse(dense_forward(input, w, b), target).value; };

    auto res = loss_mse(dense_forward(input, w, b), target);
    TensorD gin, gw(w.shape()), gb(b.shape());
    dense_backward(input, w, res.grad, &gin, &gw, &gb);

    const double err = fd_max_rel_error(
        loss, {{w.data(), gw.data(), w.numel(), "w"},
               {b.data(), gb.data(), b.numel(), "b"},
               {input.data(), gin.data(), input.numel(), "input"}});
    return {"dense_mse", err, 1e-8, err < 1e-8};
}

GradSuiteResult check_loss_mse() {
    Rng rng(12);
    TensorD pred = random_tensor(Shape{3, 4}, rng);
    TensorD target = random_tensor(Shape{3, 4}, rng);
    auto res = loss_mse(pred, target);
    auto loss = [&] { return loss_mse(pred, target).value; };
    const double err =
        fd_max_rel_error(loss, {{pred.data(), res.grad.data(), pred.numel(), "pred"}});
    return {"loss_mse", err, 1e-8, err < 1e-8};
}

GradSuiteResult check_loss_softmax() {
    Rng rng(13);
    TensorD logits = random_tensor(Shape{4, 6}, rng);
    std::vector<int> labels{2, 0, 5, 3};
    auto res = loss_softmax_xent(logits, labels);
    auto loss = [&] { return loss_softmax_xent(logits, labels).value; };
    const double err =
        fd_max_rel_error(loss, {{logits.data(), res.grad.data(), logits.numel(), "logits"}});
    return {"loss_softmax_xent", err, 1e-8, err < 1e-8};
}

GradSuiteResult check_conv() {
    Rng rng(14);
    TensorD input = random_tensor(Shape{1, 2, 5, 5}, rng);
    TensorD filters = random_tensor(Shape{3, 2, 3, 3}, rng, 0.4);
    TensorD bias = random_tensor(Shape{3}, rng, 0.1);
    TensorD target = random_tensor(Shape{1, 3, 5, 5}, rng);

    auto loss = [&] {
        return loss_mse(conv2d_forward(input, filters, bias, Padding::same), target).value;
    };
    auto res = loss_mse(conv2d_forward(input, filters, bias, Padding::same), target);
    TensorD gin, gf(filters.shape()), gb(bias.shape());
    conv2d_backward(input, filters, Padding::same, res.grad, &gin, &gf, &gb);

    const double err = fd_max_rel_error(
        loss, {{filters.data(), gf.data(), filters.numel(), "filters"},
               {bias.data(), gb.data(), bias.numel(), "bias"},
               {input.data(), gin.data(), input.numel(), "input"}});
    return {"conv2d", err, 1e-6, err < 1e-6};
}

GradSuiteResult check_pool() {
    Rng rng(15);
    TensorD input = random_tensor(Shape{1, 2, 4, 4}, rng);
    TensorD target = random_tensor(Shape{1, 2, 2, 2}, rng);

    auto loss = [&] { return loss_mse(maxpool2_forward<double>(input, nullptr), target).value; };
    std::vector<long long> argmax;
    auto out = maxpool2_forward(input, &argmax);
    auto res = loss_mse(out, target);
    TensorD gin = maxpool2_backward(res.grad, input.shape(), argmax);

    const double err =
        fd_max_rel_error(loss, {{input.data(), gin.data(), input.numel(), "input"}});
    return {"maxpool2", err, 1e-6, err < 1e-6};
}

GradSuiteResult check_lrn() {
    Rng rng(16);
    TensorD input = random_tensor(Shape{1, 2, 3, 3}, rng);
    TensorD target = random_tensor(Shape{1, 2, 3, 3}, rng);
    LrnConfig cfg;  // AlexNet defaults

    auto loss = [&] { return loss_mse(lrn_forward(input, cfg), target).value; };
    auto res = loss_mse(lrn_forward(input, cfg), target);
    TensorD gin = lrn_backward(input, cfg, res.grad);

    const double err =
        fd_max_rel_error(loss, {{input.data(), gin.data(), input.numel(), "input"}});
    return {"lrn", err, 1e-5, err < 1e-5};
}

GradSuiteResult check_batchnorm() {
    Rng rng(17);
    TensorD input = random_tensor(Shape{2, 3, 4, 4}, rng);
    TensorD target = random_tensor(Shape{2, 3, 4, 4}, rng);
    BatchNorm<double> bn(3);
    for (int c = 0; c < 3; ++c) {
        bn.params.w[c] = 0.8 + 0.2 * c;
        bn.params.b[c] = 0.1 * c;
    }

    auto loss = [&] {
        BatchNorm<double> probe = bn;
        return loss_mse(probe.forward(input, true, nullptr), target).value;
    };
    typename BatchNorm<double>::Cache cache;
    auto res = loss_mse(bn.forward(input, true, &cache), target);
    bn.params.zero_grads();
    TensorD gin = bn.backward(cache, res.grad);

    const double err = fd_max_rel_error(
        loss, {{bn.params.w.data(), bn.params.gw.data(), bn.params.w.numel(), "gamma"},
               {bn.params.b.data(), bn.params.gb.data(), bn.params.b.numel(), "beta"},
               {input.data(), gin.data(), input.numel(), "input"}});
    return {"batchnorm", err, 1e-5, err < 1e-5};
}

GradSuiteResult check_conv_pool_lrn_stack() {
    Rng rng(18);
    TensorD input = random_tensor(Shape{1, 2, 9, 9}, rng);
    TensorD filters = random_tensor(Shape{4, 2, 3, 3}, rng, 0.4);
    TensorD bias = random_tensor(Shape{4}, rng, 0.1);
    TensorD target = random_tensor(Shape{1, 4, 5, 5}, rng);
    LrnConfig cfg;

    auto forward = [&] {
        TensorD c = conv2d_forward(input, filters, bias, Padding::same);
        TensorD l = lrn_forward(c, cfg);
        return maxpool2_forward<double>(l, nullptr);
    };
    auto loss = [&] { return loss_mse(forward(), target).value; };

    TensorD conv_out = conv2d_forward(input, filters, bias, Padding::same);
    TensorD lrn_out = lrn_forward(conv_out, cfg);
    std::vector<long long> argmax;
    TensorD pool_out = maxpool2_forward(lrn_out, &argmax);
    auto res = loss_mse(pool_out, target);
    TensorD g = maxpool2_backward(res.grad, lrn_out.shape(), argmax);
    g = lrn_backward(conv_out, cfg, g);
    TensorD gin, gf(filters.shape()), gb(bias.shape());
    conv2d_backward(input, filters, Padding::same, g, &gin, &gf, &gb);

    const double err = fd_max_rel_error(
        loss, {{filters.data(), gf.data(), filters.numel(), "filters"},
               {bias.data(), gb.data(), bias.numel(), "bias"},
               {input.data(), gin.data(), input.numel(), "input"}});
    return {"conv_pool_lrn_stack", err, 1e-5, err < 1e-5};
}

GradSuiteResult check_adaptive_chain() {
    Rng rng(19);
    AdaptiveConvLayer<double> layer;
    layer.fmn.build(1, {4, 10}, FilterShape{2, 1, 3, 3}, rng);
    layer.act = Activation::tanh;
    layer.pad = Padding::same;
    TensorD input = random_tensor(Shape{1, 1, 7, 7}, rng);
    TensorD target = random_tensor(Shape{1, 2, 7, 7}, rng);
    const std::vector<double> aux{0.37};

    auto loss = [&] { return loss_mse(layer.forward(input, aux, nullptr), target).value; };

    typename AdaptiveConvLayer<double>::Cache cache;
    auto res = loss_mse(layer.forward(input, aux, &cache), target);
    for (auto& s : layer.fmn.stages) s.zero_grads();
    TensorD gin = layer.backward(cache, res.grad);

    std::vector<GradCheckItem> items;
    for (size_t s = 0; s < layer.fmn.stages.size(); ++s) {
        auto& st = layer.fmn.stages[s];
        items.push_back({st.w.data(), st.gw.data(), st.w.numel(), "fmn_w" + std::to_string(s)});
        items.push_back({st.b.data(), st.gb.data(), st.b.numel(), "fmn_b" + std::to_string(s)});
    }
    items.push_back({input.data(), gin.data(), input.numel(), "input"});

    const double err = fd_max_rel_error(loss, items);
    return {"adaptive_chain", err, 1e-4, err < 1e-4};
}

}  // namespace

std::vector<GradSuiteResult> run_gradcheck_suites(const std::string& filter) {
    std::vector<GradSuiteResult> all;
    auto want = [&](const char* name) {
        return filter.empty() || filter == name;
    };
    if (want("dense_mse")) all.push_back(check_dense_mse());
    if (want("loss_mse")) all.push_back(check_loss_mse());
    if (want("loss_softmax_xent")) all.push_back(check_loss_softmax());
    if (want("conv2d")) all.push_back(check_conv());
    if (want("maxpool2")) all.push_back(check_pool());
    if (want("lrn")) all.push_back(check_lrn());
    if (want("batchnorm")) all.push_back(check_batchnorm());
    if (want("conv_pool_lrn_stack")) all.push_back(check_conv_pool_lrn_stack());
    if (want("adaptive_chain")) all.push_back(check_adaptive_chain());
    if (all.empty()) throw std::invalid_argument("gradcheck: unknown suite '" + filter + "'");
    return all;
}

}  // namespace acnn
