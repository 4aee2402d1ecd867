#include <doctest.h>

#include <cmath>

#include "acnn/gradcheck.hpp"
#include "acnn/layers.hpp"
#include "acnn/losses.hpp"
#include "acnn/optimizer.hpp"
#include "acnn/rng.hpp"

using namespace acnn;

namespace {

TensorD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    TensorD t(s);
    for (long long i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

}  // namespace

TEST_SUITE("tensor") {
    TEST_CASE("shape invariants") {
        Shape s{2, 3, 4};
        CHECK(s.numel() == 24);
        CHECK(s.rank() == 3);
        CHECK_THROWS_AS(Shape{0}, std::invalid_argument);
        TensorD t(Shape{2, 2});
        CHECK(t.numel() == 4);
        CHECK_THROWS_AS(t.reshaped(Shape{3, 3}), std::invalid_argument);
    }

    TEST_CASE("finite checks") {
        TensorD t(Shape{2, 2}, 1.0);
        CHECK(t.all_finite());
        t[2] = std::nan("");
        CHECK_FALSE(t.all_finite());
    }
}

TEST_SUITE("conv2d") {
    TEST_CASE("1x1 identity filter preserves input") {
        TensorD input(Shape{1, 1, 3, 3});
        for (int i = 0; i < 9; ++i) input[i] = i + 1;
        TensorD filt(Shape{1, 1, 1, 1}, 1.0);
        TensorD bias(Shape{1});
        auto out = conv2d_forward(input, filt, bias, Padding::same);
        CHECK(out.shape() == input.shape());
        for (int i = 0; i < 9; ++i) CHECK(out[i] == doctest::Approx(input[i]));
    }

    TEST_CASE("all-zero filters give constant bias") {
        Rng rng(1);
        TensorD input = random_tensor(Shape{2, 3, 4, 4}, rng);
        TensorD filt(Shape{2, 3, 3, 3});
        TensorD bias(Shape{2});
        bias[0] = 0.7;
        bias[1] = -0.2;
        auto out = conv2d_forward(input, filt, bias, Padding::same);
        for (int n = 0; n < 2; ++n)
            for (int f = 0; f < 2; ++f)
                for (int h = 0; h < 4; ++h)
                    for (int w = 0; w < 4; ++w)
                        CHECK(out.at(n, f, h, w) == doctest::Approx(bias[f]));
    }

    TEST_CASE("hand-summed valid cross-correlation") {
        // 3x3 ramp against a 3x3 box of ones, valid: single output = 1+..+9
        TensorD input(Shape{1, 1, 3, 3});
        for (int i = 0; i < 9; ++i) input[i] = i + 1;
        TensorD filt(Shape{1, 1, 3, 3}, 1.0);
        TensorD bias(Shape{1});
        auto out = conv2d_forward(input, filt, bias, Padding::valid);
        CHECK(out.shape() == Shape{1, 1, 1, 1});
        CHECK(out[0] == doctest::Approx(45.0));
    }

    TEST_CASE("cross-correlation orientation (no kernel flip)") {
        TensorD input(Shape{1, 1, 1, 3});
        input[0] = 1.0;  // impulse at left edge
        TensorD filt(Shape{1, 1, 1, 3});
        filt[0] = 5.0;  // tap at k=-1
        TensorD bias(Shape{1});
        auto out = conv2d_forward(input, filt, bias, Padding::same);
        // out[c] = sum_k input[c+k-1]*filt[k]; tap 0 aligns with input[c-1]
        CHECK(out.at(0, 0, 0, 1) == doctest::Approx(5.0));
        CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.0));
    }

    TEST_CASE("shape and argument validation") {
        TensorD input(Shape{1, 2, 5, 5});
        TensorD filt(Shape{1, 3, 3, 3});
        TensorD bias(Shape{1});
        CHECK_THROWS_AS(conv2d_forward(input, filt, bias, Padding::same),
                        std::invalid_argument);
        TensorD even(Shape{1, 2, 2, 2});
        CHECK_THROWS_AS(conv2d_forward(input, even, bias, Padding::same),
                        std::invalid_argument);
        TensorD bad = input;
        bad[0] = std::nan("");
        TensorD okf(Shape{1, 2, 3, 3});
        CHECK_THROWS_AS(conv2d_forward(bad, okf, bias, Padding::same), NumericError);
    }

    TEST_CASE("linearity with zero bias") {
        Rng rng(2);
        TensorD x1 = random_tensor(Shape{1, 2, 6, 6}, rng);
        TensorD x2 = random_tensor(Shape{1, 2, 6, 6}, rng);
        TensorD filt = random_tensor(Shape{3, 2, 3, 3}, rng);
        TensorD bias(Shape{3});
        const double a = 1.7, b = -0.4;
        TensorD mix(x1.shape());
        for (long long i = 0; i < mix.numel(); ++i) mix[i] = a * x1[i] + b * x2[i];
        auto lhs = conv2d_forward(mix, filt, bias, Padding::same);
        auto o1 = conv2d_forward(x1, filt, bias, Padding::same);
        auto o2 = conv2d_forward(x2, filt, bias, Padding::same);
        for (long long i = 0; i < lhs.numel(); ++i) {
            const double want = a * o1[i] + b * o2[i];
            CHECK(std::abs(lhs[i] - want) <=
                  1e-10 * std::max({std::abs(lhs[i]), std::abs(want), 1.0}));
        }
    }

    TEST_CASE("1-d kernels match a naive reference") {
        // the Lx1 / 1xL shapes take a direct path; pin it to a triple loop
        Rng rng(29);
        for (bool vertical : {true, false}) {
            const int len = 7;
            TensorD input = random_tensor(Shape{2, 3, 9, 8}, rng);
            TensorD filt =
                random_tensor(vertical ? Shape{4, 3, len, 1} : Shape{4, 3, 1, len}, rng, 0.4);
            TensorD bias = random_tensor(Shape{4}, rng, 0.1);
            auto out = conv2d_forward(input, filt, bias, Padding::same);

            const int off = (len - 1) / 2;
            for (int n = 0; n < 2; ++n)
                for (int f = 0; f < 4; ++f)
                    for (int y = 0; y < 9; ++y)
                        for (int x = 0; x < 8; ++x) {
                            double want = bias[f];
                            for (int c = 0; c < 3; ++c)
                                for (int k = 0; k < len; ++k) {
                                    const int iy = vertical ? y + k - off : y;
                                    const int ix = vertical ? x : x + k - off;
                                    if (iy < 0 || iy >= 9 || ix < 0 || ix >= 8) continue;
                                    const double wv = vertical ? filt.at(f, c, k, 0)
                                                               : filt.at(f, c, 0, k);
                                    want += wv * input.at(n, c, iy, ix);
                                }
                            CHECK(out.at(n, f, y, x) == doctest::Approx(want).epsilon(1e-12));
                        }
        }
    }

    TEST_CASE("1-d kernel gradients match finite differences") {
        Rng rng(30);
        TensorD input = random_tensor(Shape{1, 2, 6, 7}, rng);
        TensorD filt = random_tensor(Shape{3, 2, 1, 5}, rng, 0.4);
        TensorD bias = random_tensor(Shape{3}, rng, 0.1);
        TensorD target = random_tensor(Shape{1, 3, 6, 7}, rng);
        auto loss = [&] {
            return loss_mse(conv2d_forward(input, filt, bias, Padding::same), target).value;
        };
        auto res = loss_mse(conv2d_forward(input, filt, bias, Padding::same), target);
        TensorD gin, gf(filt.shape()), gb(bias.shape());
        conv2d_backward(input, filt, Padding::same, res.grad, &gin, &gf, &gb);
        const double err = fd_max_rel_error(
            loss, {{filt.data(), gf.data(), filt.numel(), "filters"},
                   {bias.data(), gb.data(), bias.numel(), "bias"},
                   {input.data(), gin.data(), input.numel(), "input"}});
        CHECK(err < 1e-6);
    }

    TEST_CASE("backward zero grad_out gives zero grads") {
        Rng rng(3);
        TensorD input = random_tensor(Shape{1, 2, 4, 4}, rng);
        TensorD filt = random_tensor(Shape{2, 2, 3, 3}, rng);
        TensorD gout(Shape{1, 2, 4, 4});
        TensorD gin, gf(filt.shape()), gb(Shape{2});
        conv2d_backward(input, filt, Padding::same, gout, &gin, &gf, &gb);
        for (long long i = 0; i < gin.numel(); ++i) CHECK(gin[i] == 0.0);
        for (long long i = 0; i < gf.numel(); ++i) CHECK(gf[i] == 0.0);
        CHECK(gb[0] == 0.0);
    }

    TEST_CASE("identity filter backward passes grad through") {
        Rng rng(4);
        TensorD input = random_tensor(Shape{1, 1, 4, 4}, rng);
        TensorD filt(Shape{1, 1, 1, 1}, 1.0);
        TensorD gout = random_tensor(Shape{1, 1, 4, 4}, rng);
        TensorD gin, gf(filt.shape()), gb(Shape{1});
        conv2d_backward(input, filt, Padding::same, gout, &gin, &gf, &gb);
        for (long long i = 0; i < gin.numel(); ++i) CHECK(gin[i] == doctest::Approx(gout[i]));
    }
}

TEST_SUITE("pooling") {
    TEST_CASE("constant input stays constant") {
        TensorD input(Shape{1, 1, 5, 5}, 3.25);
        auto out = maxpool2_forward<double>(input, nullptr);
        CHECK(out.shape() == Shape{1, 1, 3, 3});
        for (long long i = 0; i < out.numel(); ++i) CHECK(out[i] == 3.25);
    }

    TEST_CASE("ceil-mode output sizes") {
        TensorD a(Shape{1, 1, 33, 33});
        CHECK(maxpool2_forward<double>(a, nullptr).shape() == Shape{1, 1, 17, 17});
        TensorD b(Shape{1, 1, 17, 17});
        CHECK(maxpool2_forward<double>(b, nullptr).shape() == Shape{1, 1, 9, 9});
    }

    TEST_CASE("backward routes to argmax only") {
        TensorD input(Shape{1, 1, 2, 2});
        input[0] = 1;
        input[1] = 9;
        input[2] = 2;
        input[3] = 3;
        std::vector<long long> argmax;
        auto out = maxpool2_forward(input, &argmax);
        CHECK(out[0] == 9);
        TensorD gout(Shape{1, 1, 1, 1}, 2.5);
        auto gin = maxpool2_backward(gout, input.shape(), argmax);
        CHECK(gin[1] == 2.5);
        CHECK(gin[0] == 0.0);
        CHECK(gin[2] == 0.0);
        CHECK(gin[3] == 0.0);
    }
}

TEST_SUITE("lrn") {
    TEST_CASE("zero input maps to zero") {
        TensorD input(Shape{1, 3, 2, 2});
        LrnConfig cfg;
        auto out = lrn_forward(input, cfg);
        for (long long i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
    }

    TEST_CASE("single-channel closed form") {
        // n=1, k=2, alpha=1, beta=1, x=1 -> 1/(2+1) = 1/3
        TensorD input(Shape{1, 1, 1, 1}, 1.0);
        LrnConfig cfg{2.0, 1, 1.0, 1.0};
        auto out = lrn_forward(input, cfg);
        CHECK(out[0] == doctest::Approx(1.0 / 3.0));
    }
}

TEST_SUITE("batchnorm") {
    TEST_CASE("normalized input passes through with unit gamma") {
        // build an exactly zero-mean unit-variance channel
        TensorD input(Shape{1, 1, 2, 2});
        input[0] = 1.0;
        input[1] = -1.0;
        input[2] = 1.0;
        input[3] = -1.0;
        BatchNorm<double> bn(1);
        auto out = bn.forward(input, true, nullptr);
        for (long long i = 0; i < 4; ++i)
            CHECK(out[i] == doctest::Approx(input[i]).epsilon(1e-5));  // eps shrinks slightly
    }

    TEST_CASE("zero gamma gives constant beta") {
        Rng rng(5);
        TensorD input = random_tensor(Shape{2, 2, 3, 3}, rng);
        BatchNorm<double> bn(2);
        bn.params.w.fill(0.0);
        bn.params.b[0] = 0.4;
        bn.params.b[1] = -0.6;
        auto out = bn.forward(input, true, nullptr);
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 2; ++c)
                for (int h = 0; h < 3; ++h)
                    for (int w = 0; w < 3; ++w)
                        CHECK(out.at(n, c, h, w) == doctest::Approx(bn.params.b[c]));
    }

    TEST_CASE("train-mode output statistics") {
        Rng rng(6);
        TensorD input = random_tensor(Shape{4, 3, 8, 8}, rng, 2.0);
        BatchNorm<double> bn(3);
        auto out = bn.forward(input, true, nullptr);
        const long long m = 4 * 8 * 8;
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0, var = 0.0;
            for (int n = 0; n < 4; ++n)
                for (int h = 0; h < 8; ++h)
                    for (int w = 0; w < 8; ++w) mean += out.at(n, c, h, w);
            mean /= m;
            for (int n = 0; n < 4; ++n)
                for (int h = 0; h < 8; ++h)
                    for (int w = 0; w < 8; ++w) {
                        const double d = out.at(n, c, h, w) - mean;
                        var += d * d;
                    }
            var /= m;
            CHECK(std::abs(mean) < 1e-10);
            // sigma^2/(sigma^2+eps) shy of 1 by the eps adjustment
            CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
            CHECK(var < 1.0 + 1e-12);
        }
    }

    TEST_CASE("inference before training fails") {
        BatchNorm<double> bn(2);
        TensorD input(Shape{1, 2, 2, 2});
        CHECK_THROWS_AS(bn.forward(input, false, nullptr), ContractViolation);
    }
}

TEST_SUITE("dense") {
    TEST_CASE("identity weights pass input through") {
        TensorD input(Shape{2, 3});
        for (int i = 0; i < 6; ++i) input[i] = i * 0.5;
        TensorD w(Shape{3, 3});
        for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
        TensorD b(Shape{3});
        auto out = dense_forward(input, w, b);
        for (int i = 0; i < 6; ++i) CHECK(out[i] == doctest::Approx(input[i]));
    }

    TEST_CASE("parameter counts follow D*M+M") {
        LayerParams<double> fc1;
        fc1.w = TensorD(Shape{5184, 512});
        fc1.b = TensorD(Shape{512});
        CHECK(fc1.param_count() == 2654720);
        LayerParams<double> fc4;
        fc4.w = TensorD(Shape{2592, 81});
        fc4.b = TensorD(Shape{81});
        CHECK(fc4.param_count() == 210033);
    }

    TEST_CASE("shape mismatch rejected") {
        TensorD input(Shape{2, 3});
        TensorD w(Shape{4, 3});
        TensorD b(Shape{3});
        CHECK_THROWS_AS(dense_forward(input, w, b), std::invalid_argument);
    }
}

TEST_SUITE("activations") {
    TEST_CASE("pointwise values") {
        TensorD x(Shape{4});
        x[0] = -1.0;
        x[1] = 2.0;
        x[2] = 0.0;
        x[3] = -2.0;
        auto relu = activate(x, Activation::relu);
        CHECK(relu[0] == 0.0);
        CHECK(relu[1] == 2.0);
        auto sig = activate(x, Activation::sigmoid);
        CHECK(sig[2] == doctest::Approx(0.5));
        auto leaky = activate(x, Activation::leaky_relu, 0.01);
        CHECK(leaky[3] == doctest::Approx(-0.02));
        CHECK(leaky[1] == doctest::Approx(2.0));
        CHECK_THROWS_AS(activate(x, Activation::leaky_relu, 1.5), std::invalid_argument);
    }

    TEST_CASE("sigmoid output stays in (0,1)") {
        TensorD x(Shape{3});
        x[0] = -1000.0;
        x[1] = 1000.0;
        x[2] = 0.0;
        auto y = activate(x, Activation::sigmoid);
        for (int i = 0; i < 3; ++i) {
            CHECK(y[i] >= 0.0);
            CHECK(y[i] <= 1.0);
            CHECK(std::isfinite(y[i]));
        }
    }
}

TEST_SUITE("losses") {
    TEST_CASE("mse basics") {
        TensorD a(Shape{2, 2}, 1.0);
        CHECK(loss_mse(a, a).value == 0.0);
        TensorD b(Shape{2, 2});
        auto res = loss_mse(a, b);  // diff constant 1
        CHECK(res.value == doctest::Approx(1.0));
        TensorD c(Shape{3});
        CHECK_THROWS_AS(loss_mse(a, c), std::invalid_argument);
    }

    TEST_CASE("softmax cross entropy analytic values") {
        TensorD logits(Shape{1, 15});
        auto res = loss_softmax_xent(logits, {7});
        CHECK(res.value == doctest::Approx(std::log(15.0)));  // ~2.70805
        TensorD confident(Shape{1, 4});
        confident.at(0, 2) = 1e3;
        CHECK(loss_softmax_xent(confident, {2}).value == doctest::Approx(0.0).epsilon(1e-9));
        CHECK_THROWS_AS(loss_softmax_xent(logits, {15}), std::invalid_argument);
        CHECK_THROWS_AS(loss_softmax_xent(logits, {-1}), std::invalid_argument);
    }
}

TEST_SUITE("adam") {
    TEST_CASE("zero gradient leaves fresh parameters unchanged") {
        LayerParams<double> p;
        p.w = TensorD(Shape{3}, 1.5);
        p.b = TensorD(Shape{1}, -0.5);
        p.alloc_like_params();
        p.grads_fresh = true;
        OptimizerConfig cfg;
        adam_step(p, cfg);
        CHECK(p.w[0] == 1.5);
        CHECK(p.b[0] == -0.5);
        CHECK(cfg.step == 1);
    }

    TEST_CASE("moments decay toward zero after gradients stop") {
        LayerParams<double> p;
        p.w = TensorD(Shape{1});
        p.b = TensorD(Shape{1});
        p.alloc_like_params();
        OptimizerConfig cfg;
        p.gw[0] = 1.0;
        p.grads_fresh = true;
        adam_step(p, cfg);
        const double m1 = p.mw[0];
        p.gw[0] = 0.0;
        p.grads_fresh = true;
        adam_step(p, cfg);
        CHECK(p.mw[0] == doctest::Approx(cfg.beta1 * m1));
    }

    TEST_CASE("first step moves by about lr in gradient sign") {
        LayerParams<double> p;
        p.w = TensorD(Shape{2});
        p.b = TensorD(Shape{1});
        p.alloc_like_params();
        p.gw[0] = 0.73;
        p.gw[1] = -4.1;
        p.grads_fresh = true;
        OptimizerConfig cfg;
        cfg.lr = 1e-3;
        adam_step(p, cfg);
        CHECK(p.w[0] == doctest::Approx(-1e-3).epsilon(1e-4));
        CHECK(p.w[1] == doctest::Approx(1e-3).epsilon(1e-4));
    }

    TEST_CASE("stale grads violate the contract") {
        LayerParams<double> p;
        p.w = TensorD(Shape{1});
        p.b = TensorD(Shape{1});
        p.alloc_like_params();
        OptimizerConfig cfg;
        CHECK_THROWS_AS(adam_step(p, cfg), ContractViolation);  // never marked fresh
        p.grads_fresh = true;
        adam_step(p, cfg);
        CHECK_THROWS_AS(adam_apply(p, cfg), ContractViolation);  // consumed by the update
    }
}

TEST_SUITE("gradcheck") {
    TEST_CASE("all layer suites meet their tolerances") {
        for (const auto& res : run_gradcheck_suites()) {
            INFO(res.name, " max rel err ", res.max_rel_err, " tol ", res.tolerance);
            CHECK(res.pass);
        }
    }
}
