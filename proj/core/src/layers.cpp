#include "acnn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace acnn {

namespace {

template <typename T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& filters, const TensorT<T>& bias) {
    if (input.rank() != 4) throw std::invalid_argument("conv2d: input must be [N,C,H,W]");
    if (filters.rank() != 4) throw std::invalid_argument("conv2d: filters must be [F,C,kh,kw]");
    if (bias.rank() != 1 || bias.dim(0) != filters.dim(0))
        throw std::invalid_argument("conv2d: bias must be [F]");
    if (input.dim(1) != filters.dim(1))
        throw std::invalid_argument("conv2d: channel mismatch, input " + input.shape().str() +
                                    " vs filters " + filters.shape().str());
    if (filters.dim(2) % 2 == 0 || filters.dim(3) % 2 == 0)
        throw std::invalid_argument("conv2d: kernel dims must be odd");
}

struct ConvGeom {
    int hout, wout, ph, pw;
};

template <typename T>
ConvGeom conv_geometry(const TensorT<T>& input, const TensorT<T>& filters, Padding pad) {
    const int h = input.dim(2), w = input.dim(3);
    const int kh = filters.dim(2), kw = filters.dim(3);
    if (pad == Padding::same) return {h, w, (kh - 1) / 2, (kw - 1) / 2};
    if (h < kh || w < kw) throw std::invalid_argument("conv2d: kernel larger than valid input");
    return {h - kh + 1, w - kw + 1, 0, 0};
}

// cols [C*kh*kw, hout*wout] for one sample, zero-filled outside the image.
template <typename T>
void im2col(const TensorT<T>& input, int n, int kh, int kw, const ConvGeom& g, T* cols) {
    const int c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const long long plane = static_cast<long long>(g.hout) * g.wout;
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* row = cols + ((static_cast<long long>(c) * kh + ki) * kw + kj) * plane;
                for (int oh = 0; oh < g.hout; ++oh) {
                    const int ih = oh + ki - g.ph;
                    if (ih < 0 || ih >= h) {
                        std::fill(row + static_cast<long long>(oh) * g.wout,
                                  row + static_cast<long long>(oh + 1) * g.wout, T(0));
                        continue;
                    }
                    const T* src = &input.at(n, c, ih, 0);
                    T* dst = row + static_cast<long long>(oh) * g.wout;
                    for (int ow = 0; ow < g.wout; ++ow) {
                        const int iw = ow + kj - g.pw;
                        dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int n, int c_in, int kh, int kw, const ConvGeom& g,
                TensorT<T>& grad_input) {
    const int h = grad_input.dim(2), w = grad_input.dim(3);
    const long long plane = static_cast<long long>(g.hout) * g.wout;
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* row = cols + ((static_cast<long long>(c) * kh + ki) * kw + kj) * plane;
                for (int oh = 0; oh < g.hout; ++oh) {
                    const int ih = oh + ki - g.ph;
                    if (ih < 0 || ih >= h) continue;
                    T* dst = &grad_input.at(n, c, ih, 0);
                    const T* src = row + static_cast<long long>(oh) * g.wout;
                    for (int ow = 0; ow < g.wout; ++ow) {
                        const int iw = ow + kj - g.pw;
                        if (iw >= 0 && iw < w) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

// same-padded convolutions with 1-D kernels (Lx1 or 1xL) skip im2col: the
// channel counts of the separable deconvolution nets are too small for GEMM
// to pay off, while these unit-stride loops vectorize fully.

template <typename T>
bool use_direct_1d(const TensorT<T>& filters, Padding pad) {
    return pad == Padding::same && (filters.dim(2) == 1 || filters.dim(3) == 1) &&
           filters.dim(2) * filters.dim(3) > 1;
}

// 64-byte register vectors for the 1-d stencil kernels; the lane structure
// is fixed, so reductions stay order-deterministic everywhere.
template <typename T>
struct VecTraits;
template <>
struct VecTraits<float> {
    typedef float V __attribute__((vector_size(64)));
    static constexpr int lanes = 16;
};
template <>
struct VecTraits<double> {
    typedef double V __attribute__((vector_size(64)));
    static constexpr int lanes = 8;
};

template <typename T>
inline typename VecTraits<T>::V load_vec(const T* p) {
    typename VecTraits<T>::V v;
    __builtin_memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
inline void store_vec(T* p, typename VecTraits<T>::V v) {
    __builtin_memcpy(p, &v, sizeof v);
}

// y[x] += a * s[x]
template <typename T>
inline void axpy_row(T a, const T* __restrict__ s, T* __restrict__ y, int n) {
    constexpr int L = VecTraits<T>::lanes;
    int x = 0;
    for (; x + L <= n; x += L) store_vec(y + x, load_vec(y + x) + a * load_vec(s + x));
    for (; x < n; ++x) y[x] += a * s[x];
}

template <typename T>
inline T dot_row(const T* __restrict__ a, const T* __restrict__ b, int n) {
    constexpr int L = VecTraits<T>::lanes;
    typename VecTraits<T>::V acc = {};
    int x = 0;
    for (; x + L <= n; x += L) acc += load_vec(a + x) * load_vec(b + x);
    T lanes[L];
    store_vec(lanes, acc);
    for (int j = 0; x + j < n; ++j) lanes[j] += a[x + j] * b[x + j];
    T total = T(0);
    for (int j = 0; j < L; ++j) total += lanes[j];
    return total;
}

// out[x] += sum_k taps[k] * in[x+k-off]; the accumulator vector stays in a
// register across the whole tap loop.
template <typename T>
void correlate_row_interior(const T* __restrict__ in, const T* __restrict__ taps, int len,
                            int off, T* __restrict__ out, int lo, int hi) {
    constexpr int L = VecTraits<T>::lanes;
    int x = lo;
    for (; x + L <= hi; x += L) {
        auto acc = load_vec(out + x);
        const T* s = in + x - off;
        for (int k = 0; k < len; ++k) acc += taps[k] * load_vec(s + k);
        store_vec(out + x, acc);
    }
    for (; x < hi; ++x) {
        T acc = out[x];
        for (int k = 0; k < len; ++k) acc += taps[k] * in[x + k - off];
        out[x] = acc;
    }
}

// zero-padded copy of one row so the stencil kernels never branch on bounds
template <typename T>
const T* padded_row(const T* in, int w, int off, int len) {
    thread_local std::vector<double> storage;  // widest element type
    const int slack = 64;  // vector kernels may read past the last tap
    const size_t count = static_cast<size_t>(w + len + slack);
    const size_t need = count * sizeof(T) / sizeof(double) + 2;
    if (storage.size() < need) storage.resize(need);
    T* buf = reinterpret_cast<T*>(storage.data());
    std::fill(buf, buf + count, T(0));
    std::copy(in, in + w, buf + off);
    return buf;
}

// full row with zero padding outside [0,w)
template <typename T>
void correlate_row(const T* in, const T* taps, int len, int off, T* out, int w) {
    const T* padded = padded_row(in, w, off, len);
    correlate_row_interior(padded + off, taps, len, off, out, 0, w);
}

// taps_grad[k] += sum_x grow[x] * in[x+k-off]; per-tap accumulator vectors
// held in registers across the row (taps capped at 8 vector blocks).
template <typename T>
void correlate_row_tapgrad(const T* in, const T* __restrict__ grow, int len, int off,
                           T* __restrict__ taps_grad, int w) {
    constexpr int L = VecTraits<T>::lanes;
    constexpr int kMaxBlocks = 8;
    const T* s_base = padded_row(in, w, off, len) + off;
    const int blocks = (len + L - 1) / L;
    if (blocks <= kMaxBlocks) {
        // padded tap scratch so the last partial block accumulates harmlessly
        T scratch[kMaxBlocks * L];
        typename VecTraits<T>::V acc[kMaxBlocks] = {};
        for (int x = 0; x < w; ++x) {
            const T g = grow[x];
            const T* s = s_base + x - off;
            for (int b = 0; b < blocks; ++b) acc[b] += g * load_vec(s + b * L);
        }
        for (int b = 0; b < blocks; ++b) store_vec(scratch + b * L, acc[b]);
        for (int k = 0; k < len; ++k) taps_grad[k] += scratch[k];
    } else {
        for (int x = 0; x < w; ++x) {
            const T g = grow[x];
            const T* s = s_base + x - off;
            for (int k = 0; k < len; ++k) taps_grad[k] += g * s[k];
        }
    }
}

template <typename T>
void conv1d_forward_same(const TensorT<T>& input, const TensorT<T>& filters,
                         const TensorT<T>& bias, TensorT<T>& out) {
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int f_out = filters.dim(0);
    const bool vertical = filters.dim(3) == 1;
    const int len = vertical ? filters.dim(2) : filters.dim(3);
    const int off = (len - 1) / 2;
    const long long plane = static_cast<long long>(h) * w;
    for (int n = 0; n < n_batch; ++n)
        for (int f = 0; f < f_out; ++f) {
            T* oplane = &out.at(n, f, 0, 0);
            std::fill(oplane, oplane + plane, bias[f]);
            for (int c = 0; c < c_in; ++c) {
                const T* wrow = &filters.at(f, c, 0, 0);
                if (vertical) {
                    // one long axpy per tap over the overlapping row block
                    for (int k = 0; k < len; ++k) {
                        const int shift = k - off;
                        const int y0 = std::max(0, -shift), y1 = std::min(h, h - shift);
                        if (y0 >= y1) continue;
                        axpy_row(wrow[k], &input.at(n, c, y0 + shift, 0),
                                 oplane + static_cast<long long>(y0) * w,
                                 (y1 - y0) * w);
                    }
                } else {
                    for (int y = 0; y < h; ++y)
                        correlate_row(&input.at(n, c, y, 0), wrow, len, off,
                                      oplane + static_cast<long long>(y) * w, w);
                }
            }
        }
}

template <typename T>
void conv1d_backward_same(const TensorT<T>& input, const TensorT<T>& filters,
                          const TensorT<T>& grad_out, TensorT<T>* grad_input,
                          TensorT<T>* grad_filters) {
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int f_out = filters.dim(0);
    const bool vertical = filters.dim(3) == 1;
    const int len = vertical ? filters.dim(2) : filters.dim(3);
    const int off = (len - 1) / 2;
    std::vector<T> reversed(static_cast<size_t>(len));
    for (int n = 0; n < n_batch; ++n)
        for (int f = 0; f < f_out; ++f)
            for (int c = 0; c < c_in; ++c) {
                const T* wrow = &filters.at(f, c, 0, 0);
                T* wgrad = grad_filters ? &grad_filters->at(f, c, 0, 0) : nullptr;
                if (vertical) {
                    for (int k = 0; k < len; ++k) {
                        const int shift = k - off;
                        const int y0 = std::max(0, -shift), y1 = std::min(h, h - shift);
                        if (y0 >= y1) continue;
                        const T* gblock = &grad_out.at(n, f, y0, 0);
                        const long long count = static_cast<long long>(y1 - y0) * w;
                        if (grad_input)
                            axpy_row(wrow[k], gblock, &grad_input->at(n, c, y0 + shift, 0),
                                     static_cast<int>(count));
                        if (wgrad)
                            wgrad[k] += dot_row(gblock, &input.at(n, c, y0 + shift, 0),
                                                static_cast<int>(count));
                    }
                } else {
                    if (grad_input) {
                        // transposed correlation = correlation with reversed taps
                        for (int k = 0; k < len; ++k) reversed[k] = wrow[len - 1 - k];
                        for (int y = 0; y < h; ++y)
                            correlate_row(&grad_out.at(n, f, y, 0), reversed.data(), len,
                                          len - 1 - off, &grad_input->at(n, c, y, 0), w);
                    }
                    if (wgrad)
                        for (int y = 0; y < h; ++y)
                            correlate_row_tapgrad(&input.at(n, c, y, 0),
                                                  &grad_out.at(n, f, y, 0), len, off, wgrad, w);
                }
            }
}

}  // namespace

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& filters,
                          const TensorT<T>& bias, Padding pad) {
    check_conv_args(input, filters, bias);
    require_finite(input, "conv2d_forward");
    const ConvGeom g = conv_geometry(input, filters, pad);
    const int n_batch = input.dim(0), f_out = filters.dim(0);
    const int kh = filters.dim(2), kw = filters.dim(3);
    const int ckk = filters.dim(1) * kh * kw;
    const long long plane = static_cast<long long>(g.hout) * g.wout;

    TensorT<T> out(Shape{n_batch, f_out, g.hout, g.wout});
    if (use_direct_1d(filters, pad)) {
        conv1d_forward_same(input, filters, bias, out);
        return out;
    }
    std::vector<T> cols(static_cast<size_t>(ckk) * plane);
    for (int n = 0; n < n_batch; ++n) {
        im2col(input, n, kh, kw, g, cols.data());
        detail::gemm_nn(false, filters.data(), cols.data(), &out.at(n, 0, 0, 0), f_out, ckk,
                        static_cast<int>(plane));
        for (int f = 0; f < f_out; ++f) {
            T* o = &out.at(n, f, 0, 0);
            const T bv = bias[f];
            for (long long i = 0; i < plane; ++i) o[i] += bv;
        }
    }
    return out;
}

template <typename T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& filters, Padding pad,
                     const TensorT<T>& grad_out, TensorT<T>* grad_input,
                     TensorT<T>* grad_filters, TensorT<T>* grad_bias) {
    TensorT<T> bias_probe(Shape{filters.dim(0)});
    check_conv_args(input, filters, bias_probe);
    const ConvGeom g = conv_geometry(input, filters, pad);
    const int n_batch = input.dim(0), f_out = filters.dim(0);
    const int kh = filters.dim(2), kw = filters.dim(3);
    const int ckk = filters.dim(1) * kh * kw;
    const long long plane = static_cast<long long>(g.hout) * g.wout;
    if (grad_out.shape() != Shape{n_batch, f_out, g.hout, g.wout})
        throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                                    " does not match forward output");

    if (grad_bias) {
        if (grad_bias->shape() != Shape{f_out})
            throw std::invalid_argument("conv2d_backward: grad_bias shape");
        for (int n = 0; n < n_batch; ++n)
            for (int f = 0; f < f_out; ++f) {
                const T* go = &grad_out.at(n, f, 0, 0);
                T acc = T(0);
                for (long long i = 0; i < plane; ++i) acc += go[i];
                (*grad_bias)[f] += acc;
            }
    }

    if (use_direct_1d(filters, pad)) {
        if (grad_filters && grad_filters->shape() != filters.shape())
            throw std::invalid_argument("conv2d_backward: grad_filters shape");
        if (grad_input) *grad_input = TensorT<T>(input.shape());
        conv1d_backward_same(input, filters, grad_out, grad_input, grad_filters);
        return;
    }

    std::vector<T> cols;
    if (grad_filters) {
        if (grad_filters->shape() != filters.shape())
            throw std::invalid_argument("conv2d_backward: grad_filters shape");
        cols.resize(static_cast<size_t>(ckk) * plane);
        for (int n = 0; n < n_batch; ++n) {
            im2col(input, n, kh, kw, g, cols.data());
            detail::gemm_nt(true, &grad_out.at(n, 0, 0, 0), cols.data(), grad_filters->data(),
                            f_out, static_cast<int>(plane), ckk);
        }
    }

    if (grad_input) {
        *grad_input = TensorT<T>(input.shape());
        std::vector<T> gcols(static_cast<size_t>(ckk) * plane);
        for (int n = 0; n < n_batch; ++n) {
            detail::gemm_tn(false, filters.data(), &grad_out.at(n, 0, 0, 0), gcols.data(), ckk,
                            f_out, static_cast<int>(plane));
            col2im_add(gcols.data(), n, filters.dim(1), kh, kw, g, *grad_input);
        }
    }
}

template <typename T>
TensorT<T> maxpool2_forward(const TensorT<T>& input, std::vector<long long>* argmax) {
    if (input.rank() != 4) throw std::invalid_argument("maxpool2: input must be [N,C,H,W]");
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int ho = (h + 1) / 2, wo = (w + 1) / 2;
    TensorT<T> out(Shape{n_batch, c_in, ho, wo});
    if (argmax) argmax->assign(static_cast<size_t>(out.numel()), -1);

    long long oi = 0;
    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < c_in; ++c)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow, ++oi) {
                    T best{};
                    long long best_idx = -1;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const int ih = 2 * oh + di, iw = 2 * ow + dj;
                            if (ih >= h || iw >= w) continue;
                            const T v = input.at(n, c, ih, iw);
                            if (best_idx < 0 || v > best) {
                                best = v;
                                best_idx =
                                    ((static_cast<long long>(n) * c_in + c) * h + ih) * w + iw;
                            }
                        }
                    out[oi] = best;
                    if (argmax) (*argmax)[static_cast<size_t>(oi)] = best_idx;
                }
    return out;
}

template <typename T>
TensorT<T> maxpool2_backward(const TensorT<T>& grad_out, const Shape& input_shape,
                             const std::vector<long long>& argmax) {
    if (static_cast<long long>(argmax.size()) != grad_out.numel())
        throw std::invalid_argument("maxpool2_backward: argmax/grad size mismatch");
    TensorT<T> grad_input(input_shape);
    for (long long i = 0; i < grad_out.numel(); ++i)
        grad_input[argmax[static_cast<size_t>(i)]] += grad_out[i];
    return grad_input;
}

// s^(-beta) and s^(-beta-1); the AlexNet beta=3/4 avoids pow entirely
inline double lrn_pow_nbeta(double s, double beta) {
    if (beta == 0.75) return 1.0 / (std::sqrt(s) * std::sqrt(std::sqrt(s)));
    return std::pow(s, -beta);
}

template <typename T>
TensorT<T> lrn_forward(const TensorT<T>& input, const LrnConfig& cfg) {
    if (input.rank() != 4) throw std::invalid_argument("lrn: input must be [N,C,H,W]");
    if (cfg.n % 2 == 0 || cfg.n < 1) throw std::invalid_argument("lrn: window must be odd");
    if (cfg.alpha <= 0 || cfg.beta <= 0) throw std::invalid_argument("lrn: alpha,beta > 0");
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int half = (cfg.n - 1) / 2;
    const double an = cfg.alpha / cfg.n;
    TensorT<T> out(input.shape());
    for (int n = 0; n < n_batch; ++n)
        for (int hh = 0; hh < h; ++hh)
            for (int ww = 0; ww < w; ++ww)
                for (int c = 0; c < c_in; ++c) {
                    double s = cfg.k;
                    const int lo = std::max(0, c - half), hi = std::min(c_in - 1, c + half);
                    for (int j = lo; j <= hi; ++j) {
                        const double v = input.at(n, j, hh, ww);
                        s += an * v * v;
                    }
                    out.at(n, c, hh, ww) =
                        static_cast<T>(input.at(n, c, hh, ww) * lrn_pow_nbeta(s, cfg.beta));
                }
    return out;
}

template <typename T>
TensorT<T> lrn_backward(const TensorT<T>& input, const LrnConfig& cfg,
                        const TensorT<T>& grad_out) {
    if (grad_out.shape() != input.shape())
        throw std::invalid_argument("lrn_backward: shape mismatch");
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int half = (cfg.n - 1) / 2;
    const double an = cfg.alpha / cfg.n;
    TensorT<T> grad_in(input.shape());
    std::vector<double> s(c_in), gpow(c_in);
    for (int n = 0; n < n_batch; ++n)
        for (int hh = 0; hh < h; ++hh)
            for (int ww = 0; ww < w; ++ww) {
                for (int c = 0; c < c_in; ++c) {
                    s[c] = cfg.k;
                    const int lo = std::max(0, c - half), hi = std::min(c_in - 1, c + half);
                    for (int j = lo; j <= hi; ++j) {
                        const double v = input.at(n, j, hh, ww);
                        s[c] += an * v * v;
                    }
                    // g[c] * x[c] * s[c]^(-beta-1), reused by every j in c's window
                    gpow[c] = grad_out.at(n, c, hh, ww) * input.at(n, c, hh, ww) *
                              lrn_pow_nbeta(s[c], cfg.beta) / s[c];
                }
                for (int j = 0; j < c_in; ++j) {
                    double g = grad_out.at(n, j, hh, ww) * lrn_pow_nbeta(s[j], cfg.beta);
                    double cross = 0.0;
                    const int lo = std::max(0, j - half), hi = std::min(c_in - 1, j + half);
                    for (int c = lo; c <= hi; ++c) cross += gpow[c];
                    g -= 2.0 * cfg.beta * an * input.at(n, j, hh, ww) * cross;
                    grad_in.at(n, j, hh, ww) = static_cast<T>(g);
                }
            }
    return grad_in;
}

template <typename T>
void BatchNorm<T>::reset(int ch) {
    channels = ch;
    initialized = false;
    if (ch <= 0) return;
    params.w = TensorT<T>(Shape{ch}, T(1));
    params.b = TensorT<T>(Shape{ch}, T(0));
    params.alloc_like_params();
    running_mean.assign(ch, T(0));
    running_var.assign(ch, T(1));
}

template <typename T>
TensorT<T> BatchNorm<T>::forward(const TensorT<T>& input, bool train, Cache* cache) {
    if (input.rank() != 4 || input.dim(1) != channels)
        throw std::invalid_argument("batchnorm: input must be [N,C,H,W] with C=channels");
    const int n_batch = input.dim(0), h = input.dim(2), w = input.dim(3);
    const long long m = static_cast<long long>(n_batch) * h * w;
    TensorT<T> out(input.shape());

    std::vector<double> mean(channels), inv_std(channels);
    if (train) {
        if (m < 2) throw std::invalid_argument("batchnorm: train mode needs N*H*W >= 2");
        for (int c = 0; c < channels; ++c) {
            double sum = 0.0;
            for (int n = 0; n < n_batch; ++n) {
                const T* p = &input.at(n, c, 0, 0);
                for (long long i = 0; i < static_cast<long long>(h) * w; ++i) sum += p[i];
            }
            const double mu = sum / static_cast<double>(m);
            double ss = 0.0;
            for (int n = 0; n < n_batch; ++n) {
                const T* p = &input.at(n, c, 0, 0);
                for (long long i = 0; i < static_cast<long long>(h) * w; ++i) {
                    const double d = p[i] - mu;
                    ss += d * d;
                }
            }
            const double var = ss / static_cast<double>(m);
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + eps);
            if (initialized) {
                running_mean[c] =
                    static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * mu);
                running_var[c] =
                    static_cast<T>(momentum * running_var[c] + (1.0 - momentum) * var);
            } else {
                running_mean[c] = static_cast<T>(mu);
                running_var[c] = static_cast<T>(var);
            }
        }
        initialized = true;
    } else {
        if (!initialized)
            throw ContractViolation("batchnorm: inference before any training step");
        for (int c = 0; c < channels; ++c) {
            mean[c] = running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
        }
    }

    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < channels; ++c) {
            const T* p = &input.at(n, c, 0, 0);
            T* o = &out.at(n, c, 0, 0);
            const double g = params.w[c], bb = params.b[c];
            for (long long i = 0; i < static_cast<long long>(h) * w; ++i)
                o[i] = static_cast<T>(g * (p[i] - mean[c]) * inv_std[c] + bb);
        }

    if (cache) {
        cache->input = input;
        cache->mean = mean;
        cache->inv_std = inv_std;
    }
    return out;
}

template <typename T>
TensorT<T> BatchNorm<T>::backward_into(const Cache& cache, const TensorT<T>& grad_out,
                                       TensorT<T>& grad_gamma, TensorT<T>& grad_beta) const {
    const TensorT<T>& x = cache.input;
    if (grad_out.shape() != x.shape())
        throw std::invalid_argument("batchnorm backward: shape mismatch");
    const int n_batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const long long m = static_cast<long long>(n_batch) * h * w;
    const long long hw = static_cast<long long>(h) * w;
    TensorT<T> grad_in(x.shape());

    for (int c = 0; c < channels; ++c) {
        const double mu = cache.mean[c], is = cache.inv_std[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < n_batch; ++n) {
            const T* px = &x.at(n, c, 0, 0);
            const T* pg = &grad_out.at(n, c, 0, 0);
            for (long long i = 0; i < hw; ++i) {
                const double xhat = (px[i] - mu) * is;
                sum_g += pg[i];
                sum_gx += pg[i] * xhat;
            }
        }
        grad_gamma[c] += static_cast<T>(sum_gx);
        grad_beta[c] += static_cast<T>(sum_g);
        const double gamma = params.w[c];
        const double scale = gamma * is / static_cast<double>(m);
        for (int n = 0; n < n_batch; ++n) {
            const T* px = &x.at(n, c, 0, 0);
            const T* pg = &grad_out.at(n, c, 0, 0);
            T* po = &grad_in.at(n, c, 0, 0);
            for (long long i = 0; i < hw; ++i) {
                const double xhat = (px[i] - mu) * is;
                po[i] = static_cast<T>(scale * (m * pg[i] - sum_g - xhat * sum_gx));
            }
        }
    }
    return grad_in;
}

template <typename T>
TensorT<T> BatchNorm<T>::backward(const Cache& cache, const TensorT<T>& grad_out) {
    TensorT<T> g = backward_into(cache, grad_out, params.gw, params.gb);
    params.grads_fresh = true;
    return g;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& w, const TensorT<T>& b) {
    if (input.rank() != 2 || w.rank() != 2 || b.rank() != 1)
        throw std::invalid_argument("dense: input [N,D], w [D,M], b [M]");
    if (input.dim(1) != w.dim(0) || w.dim(1) != b.dim(0))
        throw std::invalid_argument("dense: dimension mismatch, input " + input.shape().str() +
                                    " w " + w.shape().str());
    const int n = input.dim(0), d = input.dim(1), m = w.dim(1);
    TensorT<T> out(Shape{n, m});
    detail::gemm_nn(false, input.data(), w.data(), out.data(), n, d, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) += b[j];
    return out;
}

template <typename T>
void dense_backward(const TensorT<T>& input, const TensorT<T>& w, const TensorT<T>& grad_out,
                    TensorT<T>* grad_input, TensorT<T>* grad_w, TensorT<T>* grad_b) {
    const int n = input.dim(0), d = input.dim(1), m = w.dim(1);
    if (grad_out.shape() != Shape{n, m})
        throw std::invalid_argument("dense_backward: grad_out shape mismatch");
    if (grad_w) {
        if (grad_w->shape() != w.shape())
            throw std::invalid_argument("dense_backward: grad_w shape");
        detail::gemm_tn(true, input.data(), grad_out.data(), grad_w->data(), d, n, m);
    }
    if (grad_b) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) (*grad_b)[j] += grad_out.at(i, j);
    }
    if (grad_input) {
        *grad_input = TensorT<T>(input.shape());
        detail::gemm_nt(false, grad_out.data(), w.data(), grad_input->data(), n, m, d);
    }
}

template <typename T>
TensorT<T> activate(const TensorT<T>& x, Activation act, double leaky_slope) {
    if (act == Activation::leaky_relu && (leaky_slope <= 0.0 || leaky_slope >= 1.0))
        throw std::invalid_argument("activate: leaky slope must be in (0,1)");
    TensorT<T> y(x.shape());
    const long long n = x.numel();
    switch (act) {
        case Activation::identity:
            y = x;
            break;
        case Activation::relu:
            for (long long i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
            break;
        case Activation::leaky_relu:
            for (long long i = 0; i < n; ++i)
                y[i] = x[i] > T(0) ? x[i] : static_cast<T>(leaky_slope * x[i]);
            break;
        case Activation::sigmoid:
            for (long long i = 0; i < n; ++i) {
                const double v = x[i];
                y[i] = static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                             : std::exp(v) / (1.0 + std::exp(v)));
            }
            break;
        case Activation::tanh:
            for (long long i = 0; i < n; ++i) y[i] = static_cast<T>(std::tanh(x[i]));
            break;
    }
    return y;
}

template <typename T>
TensorT<T> activate_backward(const TensorT<T>& x, const TensorT<T>& y, Activation act,
                             double leaky_slope, const TensorT<T>& grad_out) {
    TensorT<T> g(x.shape());
    const long long n = x.numel();
    switch (act) {
        case Activation::identity:
            g = grad_out;
            break;
        case Activation::relu:
            for (long long i = 0; i < n; ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
            break;
        case Activation::leaky_relu:
            for (long long i = 0; i < n; ++i)
                g[i] = x[i] > T(0) ? grad_out[i] : static_cast<T>(leaky_slope * grad_out[i]);
            break;
        case Activation::sigmoid:
            for (long long i = 0; i < n; ++i)
                g[i] = static_cast<T>(grad_out[i] * y[i] * (T(1) - y[i]));
            break;
        case Activation::tanh:
            for (long long i = 0; i < n; ++i)
                g[i] = static_cast<T>(grad_out[i] * (T(1) - y[i] * y[i]));
            break;
    }
    return g;
}

template <typename T>
void init_he(TensorT<T>& w, long long fan_in, Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (long long i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std));
}

template <typename T>
void init_xavier(TensorT<T>& w, long long fan_in, long long fan_out, Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    for (long long i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std));
}

#define ACNN_INSTANTIATE(T)                                                                      \
    template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&,                  \
                                          const TensorT<T>&, Padding);                           \
    template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, Padding,              \
                                     const TensorT<T>&, TensorT<T>*, TensorT<T>*, TensorT<T>*);  \
    template TensorT<T> maxpool2_forward<T>(const TensorT<T>&, std::vector<long long>*);         \
    template TensorT<T> maxpool2_backward<T>(const TensorT<T>&, const Shape&,                    \
                                             const std::vector<long long>&);                     \
    template TensorT<T> lrn_forward<T>(const TensorT<T>&, const LrnConfig&);                     \
    template TensorT<T> lrn_backward<T>(const TensorT<T>&, const LrnConfig&, const TensorT<T>&); \
    template struct BatchNorm<T>;                                                                \
    template TensorT<T> dense_forward<T>(const TensorT<T>&, const TensorT<T>&,                   \
                                         const TensorT<T>&);                                     \
    template void dense_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,     \
                                    TensorT<T>*, TensorT<T>*, TensorT<T>*);                      \
    template TensorT<T> activate<T>(const TensorT<T>&, Activation, double);                      \
    template TensorT<T> activate_backward<T>(const TensorT<T>&, const TensorT<T>&, Activation,   \
                                             double, const TensorT<T>&);                         \
    template void init_he<T>(TensorT<T>&, long long, Rng&);                                      \
    template void init_xavier<T>(TensorT<T>&, long long, long long, Rng&);

ACNN_INSTANTIATE(float)
ACNN_INSTANTIATE(double)

#undef ACNN_INSTANTIATE

}  // namespace acnn
