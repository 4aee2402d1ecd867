#include "acnn/deconv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acnn/losses.hpp"
#include "acnn/metrics.hpp"
#include "acnn/parallel.hpp"

namespace acnn {

DiskKernel make_disk_kernel(int radius) {
    if (radius < 1) throw std::invalid_argument("disk kernel: radius must be >= 1");
    const int n = 2 * radius + 1;
    DiskKernel k;
    k.radius = radius;
    k.taps = TensorD(Shape{n, n});
    long long inside = 0;
    for (int i = -radius; i <= radius; ++i)
        for (int j = -radius; j <= radius; ++j)
            if (i * i + j * j <= radius * radius) {
                k.taps.at(i + radius, j + radius) = 1.0;
                ++inside;
            }
    const double w = 1.0 / static_cast<double>(inside);
    for (long long i = 0; i < k.taps.numel(); ++i)
        if (k.taps[i] > 0.0) k.taps[i] = w;
    // pin the sum to exactly 1 via the center tap
    double sum = 0.0;
    for (long long i = 0; i < k.taps.numel(); ++i) sum += k.taps[i];
    k.taps.at(radius, radius) += 1.0 - sum;
    return k;
}

namespace {

int wrap_index(int i, int n, BorderMode border) {
    if (border == BorderMode::periodic) {
        i %= n;
        return i < 0 ? i + n : i;
    }
    while (i < 0 || i >= n) i = (i < 0) ? -i - 1 : 2 * n - 1 - i;
    return i;
}

}  // namespace

Tensor disk_blur(const Tensor& image, int radius, BorderMode border) {
    if (image.rank() != 2) throw std::invalid_argument("disk_blur: image must be [H,W]");
    const int rows = image.dim(0), cols = image.dim(1);
    const DiskKernel kernel = make_disk_kernel(radius);
    if (2 * radius + 1 > rows || 2 * radius + 1 > cols)
        throw std::invalid_argument("disk_blur: kernel larger than image");
    Tensor out(image.shape());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const double* trow = &kernel.taps.at(i + radius, 0);
                const int rr = wrap_index(r + i, rows, border);
                for (int j = -radius; j <= radius; ++j) {
                    const double t = trow[j + radius];
                    if (t == 0.0) continue;
                    acc += t * image.at(rr, wrap_index(c + j, cols, border));
                }
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    return out;
}

Tensor corrupt(const Tensor& image, const CorruptionConfig& cfg, int radius,
               uint64_t noise_seed) {
    if (cfg.sigma < 0.0) throw std::invalid_argument("corrupt: sigma must be >= 0");
    Tensor out = disk_blur(image, radius, BorderMode::reflect);
    if (cfg.sigma > 0.0) {
        Rng rng(mix_seed(cfg.seed, noise_seed));
        for (long long i = 0; i < out.numel(); ++i) {
            const double v = out[i] + rng.normal(0.0, cfg.sigma);
            out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

std::vector<Tensor> gen_textures(int count, int size, uint64_t seed) {
    if (count < 1 || size < 8) throw std::invalid_argument("gen_textures: bad corpus spec");
    std::vector<Tensor> images;
    images.reserve(count);
    constexpr double kPi = 3.14159265358979323846;
    for (int n = 0; n < count; ++n) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(n)));
        Tensor img(Shape{size, size}, 0.5f);
        // layered gratings, wavelengths ~10..60 px: attenuated but not erased
        // by disk blur up to r=11, so deblurring has signal to recover
        const int gratings = 2 + rng.uniform_int(3);
        for (int g = 0; g < gratings; ++g) {
            const double theta = rng.uniform(0.0, kPi);
            const double freq = rng.uniform(0.10, 0.60);  // rad per pixel
            const double phase = rng.uniform(0.0, 2.0 * kPi);
            const double amp = rng.uniform(0.08, 0.20);
            const double kx = std::cos(theta) * freq, ky = std::sin(theta) * freq;
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c)
                    img.at(r, c) += static_cast<float>(amp * std::sin(kx * c + ky * r + phase));
        }
        // hard-edged rectangles and disks
        const int shapes = 2 + rng.uniform_int(3);
        for (int s = 0; s < shapes; ++s) {
            const bool disk = rng.uniform() < 0.5;
            const double level = rng.uniform(-0.28, 0.28);
            const int cr = rng.uniform_int(size), cc = rng.uniform_int(size);
            const int extent = 3 + rng.uniform_int(size / 3);
            if (disk) {
                for (int r = std::max(0, cr - extent); r <= std::min(size - 1, cr + extent); ++r)
                    for (int c = std::max(0, cc - extent); c <= std::min(size - 1, cc + extent);
                         ++c)
                        if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= extent * extent)
                            img.at(r, c) += static_cast<float>(level);
            } else {
                const int h = 2 + rng.uniform_int(extent), w = 2 + rng.uniform_int(extent);
                for (int r = std::max(0, cr - h); r <= std::min(size - 1, cr + h); ++r)
                    for (int c = std::max(0, cc - w); c <= std::min(size - 1, cc + w); ++c)
                        img.at(r, c) += static_cast<float>(level);
            }
        }
        for (long long i = 0; i < img.numel(); ++i)
            img[i] = static_cast<float>(std::clamp(static_cast<double>(img[i]), 0.02, 0.98));
        images.push_back(std::move(img));
    }
    return images;
}

DeconvSpec DeconvSpec::acnn(int filter_length) {
    DeconvSpec s;
    s.adaptive = true;
    s.channels = 12;
    s.filter_length = filter_length;
    return s;
}

DeconvSpec DeconvSpec::plain_cnn(int channels, int filter_length) {
    DeconvSpec s;
    s.adaptive = false;
    s.channels = channels;
    s.filter_length = filter_length;
    return s;
}

template <typename T>
void DeconvModel<T>::build(const DeconvSpec& model_spec, uint64_t seed) {
    if (model_spec.filter_length < 1 || model_spec.filter_length % 2 == 0)
        throw std::invalid_argument("deconv: filter length must be odd");
    spec = model_spec;
    Rng rng(seed);
    const int ch = spec.channels, len = spec.filter_length;
    if (spec.adaptive) {
        ad1.fmn.build(1, spec.fmn_hidden, FilterShape{ch, 1, len, 1}, rng);
        ad1.act = Activation::identity;
        ad2.fmn.build(1, spec.fmn_hidden, FilterShape{ch, ch, 1, len}, rng);
        ad2.act = Activation::identity;
        ad3.fmn.build(1, spec.fmn_hidden, FilterShape{1, ch, 1, 1}, rng);
        ad3.act = Activation::sigmoid;
    } else {
        auto init_conv = [&](LayerParams<T>& lp, Shape shape, bool output) {
            lp.w = TensorT<T>(shape);
            lp.b = TensorT<T>(Shape{shape[0]});
            const long long fan = static_cast<long long>(shape[1]) * shape[2] * shape[3];
            if (output)
                init_xavier(lp.w, fan, shape[0], rng);
            else
                init_he(lp.w, fan, rng);
            lp.alloc_like_params();
        };
        init_conv(conv1, Shape{ch, 1, len, 1}, false);
        init_conv(conv2, Shape{ch, ch, 1, len}, false);
        init_conv(conv3, Shape{1, ch, 1, 1}, true);
    }
    bn1.reset(ch);
    bn2.reset(ch);
    aux_norm = AuxNormalization{};
    aux_norm.kind = AuxKind::kernel_radius;
    aux_norm.components.assign(1, {0.0, 1.0});
    trained = false;
}

namespace {

template <typename T>
void scatter_into_batch(TensorT<T>& batch, int index, const TensorT<T>& sample) {
    const long long plane = sample.numel();
    std::copy(sample.data(), sample.data() + plane, batch.data() + index * plane);
}

template <typename T>
TensorT<T> slice_from_batch(const TensorT<T>& batch, int index) {
    TensorT<T> out(Shape{1, batch.dim(1), batch.dim(2), batch.dim(3)});
    const long long plane = out.numel();
    std::copy(batch.data() + index * plane, batch.data() + (index + 1) * plane, out.data());
    return out;
}

}  // namespace

template <typename T>
std::vector<TensorT<T>> DeconvModel<T>::forward_batch(const std::vector<TensorT<T>>& images,
                                                      const std::vector<std::vector<double>>& aux,
                                                      bool train, Cache* cache) {
    if (images.empty() || images.size() != aux.size())
        throw std::invalid_argument("deconv forward: empty batch or aux mismatch");
    const int b = static_cast<int>(images.size());
    const int rows = images[0].dim(0), cols = images[0].dim(1);
    const int ch = spec.channels;

    if (cache) {
        *cache = Cache{};
        cache->batch = b;
        cache->ad1.resize(b);
        cache->ad2.resize(b);
        cache->ad3.resize(b);
        cache->conv_in1.resize(b);
        cache->conv_in2.resize(b);
        cache->conv_in3.resize(b);
        cache->out3_pre.resize(b);
        cache->out3_post.resize(b);
    }

    TensorT<T> y1(Shape{b, ch, rows, cols});
    parallel_chunks(b, 1, [&](int, long long i0, long long) {
        const int i = static_cast<int>(i0);
        TensorT<T> x = images[i].reshaped(Shape{1, 1, rows, cols});
        TensorT<T> y;
        if (spec.adaptive) {
            y = ad1.forward(x, aux[i], cache ? &cache->ad1[i] : nullptr);
        } else {
            y = conv2d_forward(x, conv1.w, conv1.b, Padding::same);
            if (cache) cache->conv_in1[i] = x;
        }
        scatter_into_batch(y1, i, y);
    });

    TensorT<T> bn1_out = bn1.forward(y1, train, cache ? &cache->bn1c : nullptr);
    TensorT<T> l1 = activate(bn1_out, Activation::leaky_relu, spec.leaky_slope);
    if (cache) {
        cache->bn1_out = bn1_out;
        cache->leaky1_out = l1;
    }

    TensorT<T> y2(Shape{b, ch, rows, cols});
    parallel_chunks(b, 1, [&](int, long long i0, long long) {
        const int i = static_cast<int>(i0);
        TensorT<T> x = slice_from_batch(l1, i);
        TensorT<T> y;
        if (spec.adaptive) {
            y = ad2.forward(x, aux[i], cache ? &cache->ad2[i] : nullptr);
        } else {
            y = conv2d_forward(x, conv2.w, conv2.b, Padding::same);
            if (cache) cache->conv_in2[i] = x;
        }
        scatter_into_batch(y2, i, y);
    });

    TensorT<T> bn2_out = bn2.forward(y2, train, cache ? &cache->bn2c : nullptr);
    TensorT<T> l2 = activate(bn2_out, Activation::leaky_relu, spec.leaky_slope);
    if (cache) {
        cache->bn2_out = bn2_out;
        cache->leaky2_out = l2;
    }

    std::vector<TensorT<T>> outputs(b);
    parallel_chunks(b, 1, [&](int, long long i0, long long) {
        const int i = static_cast<int>(i0);
        TensorT<T> x = slice_from_batch(l2, i);
        TensorT<T> y;
        if (spec.adaptive) {
            y = ad3.forward(x, aux[i], cache ? &cache->ad3[i] : nullptr);
        } else {
            TensorT<T> pre = conv2d_forward(x, conv3.w, conv3.b, Padding::same);
            y = activate(pre, Activation::sigmoid);
            if (cache) {
                cache->conv_in3[i] = x;
                cache->out3_pre[i] = pre;
                cache->out3_post[i] = y;
            }
        }
        outputs[i] = y.reshaped(Shape{rows, cols});
    });
    if (cache) cache->valid = true;
    return outputs;
}

template <typename T>
void DeconvModel<T>::backward_into(const Cache& cache, const std::vector<TensorT<T>>& grad_out,
                                   std::vector<ParamGrads<T>>& chunk_grads) const {
    if (!cache.valid) throw ContractViolation("deconv backward: no cached forward pass");
    const int b = cache.batch;
    if (static_cast<int>(grad_out.size()) != b ||
        static_cast<int>(chunk_grads.size()) < b)
        throw std::invalid_argument("deconv backward: grad/chunk count mismatch");
    const int rows = grad_out[0].dim(0), cols = grad_out[0].dim(1);
    const int ch = spec.channels;

    // slot layout per visit_layers
    const int n_fmn = spec.adaptive ? static_cast<int>(ad1.fmn.stages.size()) : 0;
    const int slot1 = 0;
    const int slot_bn1 = spec.adaptive ? n_fmn : 1;
    const int slot2 = slot_bn1 + 1;
    const int slot_bn2 = spec.adaptive ? slot2 + n_fmn : slot2 + 1;
    const int slot3 = slot_bn2 + 1;

    auto fmn_slots = [&](ParamGrads<T>& g, const AdaptiveConvLayer<T>& layer, int base,
                         std::vector<TensorT<T>*>& gw, std::vector<TensorT<T>*>& gb) {
        gw.clear();
        gb.clear();
        for (size_t s = 0; s < layer.fmn.stages.size(); ++s) {
            gw.push_back(&g.gw[base + static_cast<int>(s)]);
            gb.push_back(&g.gb[base + static_cast<int>(s)]);
        }
    };

    // layer 3 back, per image
    TensorT<T> g2(Shape{b, ch, rows, cols});
    parallel_chunks(b, 1, [&](int, long long i0, long long) {
        const int i = static_cast<int>(i0);
        TensorT<T> g = grad_out[i].reshaped(Shape{1, 1, rows, cols});
        TensorT<T> gin;
        if (spec.adaptive) {
            std::vector<TensorT<T>*> gw, gb;
            fmn_slots(chunk_grads[i], ad3, slot3, gw, gb);
            gin = ad3.backward_into(cache.ad3[i], g, gw, gb, true);
        } else {
            TensorT<T> gs = activate_backward(cache.out3_pre[i], cache.out3_post[i],
                                              Activation::sigmoid, 0.0, g);
            conv2d_backward(cache.conv_in3[i], conv3.w, Padding::same, gs, &gin,
                            &chunk_grads[i].gw[slot3], &chunk_grads[i].gb[slot3]);
        }
        scatter_into_batch(g2, i, gin);
    });

    // batch-joint: leaky + bn2
    g2 = activate_backward(cache.bn2_out, cache.leaky2_out, Activation::leaky_relu,
                           spec.leaky_slope, g2);
    g2 = bn2.backward_into(cache.bn2c, g2, chunk_grads[0].gw[slot_bn2],
                           chunk_grads[0].gb[slot_bn2]);

    // layer 2 back, per image
    TensorT<T> g1(Shape{b, ch, rows, cols});
    parallel_chunks(b, 1, [&](int, long long i0, long long) {
        const int i = static_cast<int>(i0);
        TensorT<T> g = slice_from_batch(g2, i);
        TensorT<T> gin;
        if (spec.adaptive) {
            std::vector<TensorT<T>*> gw, gb;
            fmn_slots(chunk_grads[i], ad2, slot2, gw, gb);
            gin = ad2.backward_into(cache.ad2[i], g, gw, gb, true);
        } else {
            conv2d_backward(cache.conv_in2[i], conv2.w, Padding::same, g, &gin,
                            &chunk_grads[i].gw[slot2], &chunk_grads[i].gb[slot2]);
        }
        scatter_into_batch(g1, i, gin);
    });

    g1 = activate_backward(cache.bn1_out, cache.leaky1_out, Activation::leaky_relu,
                           spec.leaky_slope, g1);
    g1 = bn1.backward_into(cache.bn1c, g1, chunk_grads[0].gw[slot_bn1],
                           chunk_grads[0].gb[slot_bn1]);

    // layer 1 back, per image, input grad not needed
    parallel_chunks(b, 1, [&](int, long long i0, long long) {
        const int i = static_cast<int>(i0);
        TensorT<T> g = slice_from_batch(g1, i);
        if (spec.adaptive) {
            std::vector<TensorT<T>*> gw, gb;
            fmn_slots(chunk_grads[i], ad1, slot1, gw, gb);
            ad1.backward_into(cache.ad1[i], g, gw, gb, false);
        } else {
            conv2d_backward(cache.conv_in1[i], conv1.w, Padding::same, g,
                            static_cast<TensorT<T>*>(nullptr), &chunk_grads[i].gw[slot1],
                            &chunk_grads[i].gb[slot1]);
        }
    });
}

template <typename T>
TensorT<T> DeconvModel<T>::infer_image(const TensorT<T>& image,
                                       const std::vector<double>& aux) const {
    const int rows = image.dim(0), cols = image.dim(1);
    TensorT<T> x = image.reshaped(Shape{1, 1, rows, cols});
    TensorT<T> y;
    if (spec.adaptive)
        y = ad1.forward(x, aux, nullptr);
    else
        y = conv2d_forward(x, conv1.w, conv1.b, Padding::same);
    y = bn1.infer(y);
    y = activate(y, Activation::leaky_relu, spec.leaky_slope);
    if (spec.adaptive)
        y = ad2.forward(y, aux, nullptr);
    else
        y = conv2d_forward(y, conv2.w, conv2.b, Padding::same);
    y = bn2.infer(y);
    y = activate(y, Activation::leaky_relu, spec.leaky_slope);
    if (spec.adaptive) {
        y = ad3.forward(y, aux, nullptr);
    } else {
        y = conv2d_forward(y, conv3.w, conv3.b, Padding::same);
        y = activate(y, Activation::sigmoid);
    }
    return y.reshaped(Shape{rows, cols});
}

template <typename T>
void DeconvModel<T>::visit_layers(
    const std::function<void(const std::string&, LayerParams<T>&)>& fn) {
    auto visit_conv = [&](const std::string& tag, AdaptiveConvLayer<T>& ad,
                          LayerParams<T>& conv) {
        if (spec.adaptive) {
            for (size_t s = 0; s < ad.fmn.stages.size(); ++s)
                fn("fmn" + tag + ".s" + std::to_string(s), ad.fmn.stages[s]);
        } else {
            fn("conv" + tag, conv);
        }
    };
    visit_conv("1", ad1, conv1);
    fn("bn1", bn1.params);
    visit_conv("2", ad2, conv2);
    fn("bn2", bn2.params);
    visit_conv("3", ad3, conv3);
}

template <typename T>
void DeconvModel<T>::visit_layers(
    const std::function<void(const std::string&, const LayerParams<T>&)>& fn) const {
    auto* self = const_cast<DeconvModel<T>*>(this);
    self->visit_layers([&](const std::string& name, LayerParams<T>& lp) {
        fn(name, static_cast<const LayerParams<T>&>(lp));
    });
}

template <typename T>
ParamGrads<T> DeconvModel<T>::make_grads() const {
    ParamGrads<T> g;
    visit_layers([&](const std::string&, const LayerParams<T>& lp) { g.add_slot(lp); });
    return g;
}

template <typename T>
void DeconvModel<T>::install_grads(const ParamGrads<T>& grads) {
    size_t i = 0;
    visit_layers([&](const std::string&, LayerParams<T>& lp) {
        lp.gw = grads.gw[i];
        lp.gb = grads.gb[i];
        lp.grads_fresh = true;
        ++i;
    });
}

template <typename T>
void DeconvModel<T>::adam_update(OptimizerConfig& cfg) {
    cfg.validate();
    ++cfg.step;
    visit_layers([&](const std::string&, LayerParams<T>& lp) { adam_apply(lp, cfg); });
    last_opt = cfg;
}

template <typename T>
long long DeconvModel<T>::param_total() const {
    long long total = 0;
    visit_layers(
        [&](const std::string&, const LayerParams<T>& lp) { total += lp.param_count(); });
    return total;
}

template struct DeconvModel<float>;
template struct DeconvModel<double>;

namespace {

Tensor squeeze_target(const Tensor& clean) {
    Tensor t(clean.shape());
    for (long long i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(kDeconvTargetLo + kDeconvTargetSpan * clean[i]);
    return t;
}

Tensor unsqueeze_output(const Tensor& out) {
    Tensor t(out.shape());
    for (long long i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(
            std::clamp((out[i] - kDeconvTargetLo) / kDeconvTargetSpan, 0.0, 1.0));
    return t;
}

}  // namespace

DeconvCurves train_deconv(DeconvModel<float>& model, const std::vector<Tensor>& train_clean,
                          const std::vector<Tensor>& val_clean, const std::vector<int>& radii,
                          const CorruptionConfig& corruption, const DeconvTrainConfig& cfg) {
    if (train_clean.empty() || radii.empty())
        throw std::invalid_argument("train_deconv: empty corpus or radius set");

    {
        std::vector<std::vector<double>> aux;
        for (size_t i = 0; i < train_clean.size(); ++i)
            for (int r : radii) aux.push_back({static_cast<double>(r)});
        model.aux_norm = AuxNormalization::fit(AuxKind::kernel_radius, aux);
    }

    struct Pair {
        Tensor input;   // corrupted
        Tensor target;  // squeezed clean
        std::vector<double> aux;
    };
    auto build_pairs = [&](const std::vector<Tensor>& clean, uint64_t tag) {
        std::vector<Pair> pairs;
        for (size_t i = 0; i < clean.size(); ++i)
            for (int r : radii) {
                Pair p;
                p.input = corrupt(clean[i], corruption, r,
                                  mix_seed(tag, mix_seed(i, static_cast<uint64_t>(r))));
                p.target = squeeze_target(clean[i]);
                p.aux = model.aux_norm.normalize({static_cast<double>(r)});
                pairs.push_back(std::move(p));
            }
        return pairs;
    };
    std::vector<Pair> train_pairs = build_pairs(train_clean, 0);
    std::vector<Pair> val_pairs = build_pairs(val_clean, 1);

    Rng rng(cfg.seed);
    OptimizerConfig opt = cfg.opt;
    std::vector<size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});

    std::vector<ParamGrads<float>> chunk_grads;
    for (int i = 0; i < cfg.batch_size; ++i) chunk_grads.push_back(model.make_grads());
    ParamGrads<float> total = model.make_grads();

    DeconvCurves curves;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<Tensor> best_w, best_b;
    std::vector<float> best_rm1, best_rv1, best_rm2, best_rv2;
    auto snapshot = [&] {
        best_w.clear();
        best_b.clear();
        model.visit_layers([&](const std::string&, const LayerParams<float>& lp) {
            best_w.push_back(lp.w);
            best_b.push_back(lp.b);
        });
        best_rm1 = model.bn1.running_mean;
        best_rv1 = model.bn1.running_var;
        best_rm2 = model.bn2.running_mean;
        best_rv2 = model.bn2.running_var;
    };
    auto restore = [&] {
        size_t i = 0;
        model.visit_layers([&](const std::string&, LayerParams<float>& lp) {
            lp.w = best_w[i];
            lp.b = best_b[i];
            ++i;
        });
        model.bn1.running_mean = best_rm1;
        model.bn1.running_var = best_rv1;
        model.bn2.running_mean = best_rm2;
        model.bn2.running_var = best_rv2;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        long long batches = 0;
        for (size_t start = 0; start + 1 <= order.size(); start += cfg.batch_size) {
            const int bsz = static_cast<int>(
                std::min<size_t>(cfg.batch_size, order.size() - start));
            std::vector<Tensor> inputs(bsz);
            std::vector<std::vector<double>> aux(bsz);
            std::vector<const Tensor*> targets(bsz);
            for (int i = 0; i < bsz; ++i) {
                const Pair& p = train_pairs[order[start + i]];
                inputs[i] = p.input;
                aux[i] = p.aux;
                targets[i] = &p.target;
            }
            typename DeconvModel<float>::Cache cache;
            auto outputs = model.forward_batch(inputs, aux, true, &cache);

            const long long px = outputs[0].numel();
            const double denom = static_cast<double>(bsz) * px;
            double loss = 0.0;
            std::vector<Tensor> grad_out(bsz);
            for (int i = 0; i < bsz; ++i) {
                grad_out[i] = Tensor(outputs[i].shape());
                for (long long j = 0; j < px; ++j) {
                    const double d = static_cast<double>(outputs[i][j]) - (*targets[i])[j];
                    loss += d * d;
                    grad_out[i][j] = static_cast<float>(2.0 * d / denom);
                }
            }
            loss /= denom;
            if (!std::isfinite(loss))
                throw NumericError("train_deconv: NaN loss at epoch " + std::to_string(epoch));

            for (int i = 0; i < bsz; ++i) chunk_grads[i].zero();
            model.backward_into(cache, grad_out, chunk_grads);
            total.zero();
            for (int i = 0; i < bsz; ++i) total.add(chunk_grads[i]);
            model.install_grads(total);
            model.adam_update(opt);
            epoch_loss += loss;
            ++batches;
        }
        epoch_loss /= std::max<long long>(1, batches);
        curves.train_loss.push_back(epoch_loss);

        double val_loss;
        if (!val_pairs.empty()) {
            std::vector<double> errs(val_pairs.size(), 0.0);
            parallel_chunks(static_cast<long long>(val_pairs.size()), 2,
                            [&](int, long long b, long long e) {
                                for (long long i = b; i < e; ++i) {
                                    const Pair& p = val_pairs[i];
                                    Tensor out = model.infer_image(p.input, p.aux);
                                    double se = 0.0;
                                    for (long long j = 0; j < out.numel(); ++j) {
                                        const double d = static_cast<double>(out[j]) -
                                                         p.target[j];
                                        se += d * d;
                                    }
                                    errs[i] = se / static_cast<double>(out.numel());
                                }
                            });
            double sum = 0.0;
            for (double e : errs) sum += e;
            val_loss = sum / static_cast<double>(val_pairs.size());
        } else {
            val_loss = epoch_loss;
        }
        curves.val_loss.push_back(val_loss);
        if (cfg.verbose)
            std::fprintf(stderr, "deconv epoch %d train %.6g val %.6g\n", epoch, epoch_loss,
                         val_loss);

        if (val_loss < best_val) {
            best_val = val_loss;
            curves.best_epoch = epoch;
            since_best = 0;
            snapshot();
        } else if (++since_best > cfg.patience) {
            break;
        }
    }
    if (curves.best_epoch >= 0) restore();
    model.last_opt = opt;
    model.train_radii = radii;
    model.trained = true;
    return curves;
}

std::vector<DeconvEvalRow> eval_deconv(const DeconvModel<float>& model,
                                       const std::vector<Tensor>& test_clean,
                                       const std::vector<int>& test_radii,
                                       const std::vector<int>& train_radii,
                                       const CorruptionConfig& corruption) {
    if (!model.trained) throw ContractViolation("eval_deconv: untrained model");
    if (test_clean.empty() || test_radii.empty())
        throw std::invalid_argument("eval_deconv: empty corpus or radius set");
    std::vector<DeconvEvalRow> rows;
    for (int r : test_radii) {
        DeconvEvalRow row;
        row.radius = r;
        row.seen = std::find(train_radii.begin(), train_radii.end(), r) != train_radii.end();
        std::vector<double> pb(test_clean.size()), pm(test_clean.size());
        parallel_chunks(static_cast<long long>(test_clean.size()), 2,
                        [&](int, long long b, long long e) {
                            for (long long i = b; i < e; ++i) {
                                const Tensor& clean = test_clean[i];
                                Tensor bad = corrupt(
                                    clean, corruption, r,
                                    mix_seed(2, mix_seed(i, static_cast<uint64_t>(r))));
                                pb[i] = psnr(clean, bad);
                                Tensor out = model.infer_image(
                                    bad,
                                    model.aux_norm.normalize({static_cast<double>(r)}));
                                pm[i] = psnr(clean, unsqueeze_output(out));
                            }
                        });
        double sb = 0.0, sm = 0.0;
        for (size_t i = 0; i < test_clean.size(); ++i) {
            sb += pb[i];
            sm += pm[i];
        }
        row.psnr_blurred = sb / static_cast<double>(test_clean.size());
        row.psnr_model = sm / static_cast<double>(test_clean.size());
        row.delta = row.psnr_model - row.psnr_blurred;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace acnn
