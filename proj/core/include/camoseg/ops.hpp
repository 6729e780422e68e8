#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "camoseg/tensor.hpp"

namespace camoseg {

// 2-D convolution descriptor. Padding is always the zero-filled "same"
// policy: at stride 1 the spatial extent is preserved exactly; at stride s
// the output extent is ceil(extent / s).
struct ConvSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;  // 1 or 3
    std::size_t dilation = 1;
    std::size_t groups = 1;
    std::size_t stride = 1;

    std::size_t pad() const { return dilation * (kernel - 1) / 2; }
};

namespace detail {

inline void check_conv_args(const Shape& in, const Shape& w, const ConvSpec& s) {
    if (in.size() != 4) {
        throw std::invalid_argument("conv2d: input must be rank 4 [B,C,rows,cols], got " +
                                    shape_str(in));
    }
    if (s.kernel != 1 && s.kernel != 3) {
        throw std::invalid_argument("conv2d: kernel extent must be 1 or 3");
    }
    if (s.dilation == 0 || s.groups == 0 || s.stride == 0) {
        throw std::invalid_argument("conv2d: dilation/groups/stride must be positive");
    }
    if (s.in_channels % s.groups != 0 || s.out_channels % s.groups != 0) {
        throw std::invalid_argument("conv2d: groups=" + std::to_string(s.groups) +
                                    " must divide in_channels=" + std::to_string(s.in_channels) +
                                    " and out_channels=" + std::to_string(s.out_channels));
    }
    if (in[1] != s.in_channels) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(in[1]) +
                                    " channels, spec expects " + std::to_string(s.in_channels));
    }
    const Shape expect = {s.out_channels, s.in_channels / s.groups, s.kernel, s.kernel};
    if (w != expect) {
        throw std::invalid_argument("conv2d: weight shape " + shape_str(w) +
                                    " inconsistent with spec (want " + shape_str(expect) + ")");
    }
}

}  // namespace detail

// Cross-correlation with zero padding, supporting dilation, channel groups
// and stride. weights are [out_ch, in_ch/groups, k, k]; bias, when given, is
// rank-1 [out_ch].
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, const ConvSpec& spec,
                  const TensorT<T>* bias = nullptr) {
    detail::check_conv_args(input.shape(), weights.shape(), spec);
    if (bias && bias->shape() != Shape{spec.out_channels}) {
        throw std::invalid_argument("conv2d: bias must be rank-1 [out_channels]");
    }
    const std::size_t B = input.extent(0), Cin = input.extent(1);
    const std::size_t R = input.extent(2), Co = input.extent(3);
    const std::size_t Ro = (R - 1) / spec.stride + 1;
    const std::size_t Cout_sp = (Co - 1) / spec.stride + 1;
    const std::size_t G = spec.groups, Cg = Cin / G, Og = spec.out_channels / G;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.pad());
    const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(spec.dilation);
    const std::ptrdiff_t st = static_cast<std::ptrdiff_t>(spec.stride);

    TensorT<T> out({B, spec.out_channels, Ro, Cout_sp});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            T* out_base = out.data() + ((b * spec.out_channels + oc) * Ro) * Cout_sp;
            if (bias) {
                const T bv = (*bias)[oc];
                for (std::size_t i = 0; i < Ro * Cout_sp; ++i) out_base[i] = bv;
            }
            const std::size_t g = oc / Og;
            for (std::size_t icg = 0; icg < Cg; ++icg) {
                const std::size_t ic = g * Cg + icg;
                const T* in_base = input.data() + ((b * Cin + ic) * R) * Co;
                for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                        const T w = weights.at4(oc, icg, ky, kx);
                        if (w == T(0)) continue;
                        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(ky) * dil - pad;
                        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(kx) * dil - pad;
                        if (spec.stride == 1) {
                            // tight branch-free path; the inner loop vectorizes
                            const std::size_t y_lo =
                                static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -oy));
                            const std::size_t y_hi = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(Ro, static_cast<std::ptrdiff_t>(R) - oy));
                            const std::size_t x_lo =
                                static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ox));
                            const std::size_t x_hi = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(Cout_sp,
                                                         static_cast<std::ptrdiff_t>(Co) - ox));
                            for (std::size_t yo = y_lo; yo < y_hi; ++yo) {
                                const T* in_row = in_base + (yo + oy) * static_cast<std::ptrdiff_t>(Co) + ox;
                                T* out_row = out_base + yo * Cout_sp;
                                for (std::size_t xo = x_lo; xo < x_hi; ++xo) {
                                    out_row[xo] += w * in_row[xo];
                                }
                            }
                        } else {
                            for (std::size_t yo = 0; yo < Ro; ++yo) {
                                const std::ptrdiff_t yi =
                                    static_cast<std::ptrdiff_t>(yo) * st + oy;
                                if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(R)) continue;
                                const T* in_row = in_base + yi * static_cast<std::ptrdiff_t>(Co);
                                T* out_row = out_base + yo * Cout_sp;
                                for (std::size_t xo = 0; xo < Cout_sp; ++xo) {
                                    const std::ptrdiff_t xi =
                                        static_cast<std::ptrdiff_t>(xo) * st + ox;
                                    if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(Co)) continue;
                                    out_row[xo] += w * in_row[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
struct ConvGrads {
    TensorT<T> input;    // same shape as forward input
    TensorT<T> weights;  // same shape as forward weights
    TensorT<T> bias;     // [out_channels]
};

// Reverse pass of conv2d for the stride-1 convolutions of the trainable
// subgraph. grad_out must match the forward output shape.
template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const ConvSpec& spec, const TensorT<T>& grad_out) {
    detail::check_conv_args(input.shape(), weights.shape(), spec);
    if (spec.stride != 1) {
        throw std::invalid_argument("conv2d_backward: only stride 1 is supported");
    }
    const std::size_t B = input.extent(0), Cin = input.extent(1);
    const std::size_t R = input.extent(2), Co = input.extent(3);
    if (grad_out.shape() != Shape{B, spec.out_channels, R, Co}) {
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");
    }
    const std::size_t G = spec.groups, Cg = Cin / G, Og = spec.out_channels / G;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.pad());
    const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(spec.dilation);

    ConvGrads<T> g{TensorT<T>(input.shape()), TensorT<T>(weights.shape()),
                   TensorT<T>({spec.out_channels})};
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            const T* go_base = grad_out.data() + ((b * spec.out_channels + oc) * R) * Co;
            T acc_b = T(0);
            for (std::size_t i = 0; i < R * Co; ++i) acc_b += go_base[i];
            g.bias[oc] += acc_b;

            const std::size_t grp = oc / Og;
            for (std::size_t icg = 0; icg < Cg; ++icg) {
                const std::size_t ic = grp * Cg + icg;
                const T* in_base = input.data() + ((b * Cin + ic) * R) * Co;
                T* gi_base = g.input.data() + ((b * Cin + ic) * R) * Co;
                for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(ky) * dil - pad;
                        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(kx) * dil - pad;
                        const T w = weights.at4(oc, icg, ky, kx);
                        T acc_w = T(0);
                        for (std::size_t yo = 0; yo < R; ++yo) {
                            const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(yo) + oy;
                            if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(R)) continue;
                            const T* in_row = in_base + yi * static_cast<std::ptrdiff_t>(Co);
                            T* gi_row = gi_base + yi * static_cast<std::ptrdiff_t>(Co);
                            const T* go_row = go_base + yo * Co;
                            const std::size_t x_lo =
                                static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ox));
                            const std::size_t x_hi = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(Co, static_cast<std::ptrdiff_t>(Co) - ox));
                            for (std::size_t xo = x_lo; xo < x_hi; ++xo) {
                                const std::size_t xi = static_cast<std::size_t>(
                                    static_cast<std::ptrdiff_t>(xo) + ox);
                                acc_w += go_row[xo] * in_row[xi];
                                gi_row[xi] += go_row[xo] * w;
                            }
                        }
                        g.weights.at4(oc, icg, ky, kx) += acc_w;
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: operands must be rank 2");
    }
    if (a.extent(1) != b.extent(0)) {
        throw std::invalid_argument("matmul: inner extents disagree: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    TensorT<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const T av = a.at2(i, l);
            if (av == T(0)) continue;
            const T* brow = b.data() + l * n;
            T* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// Normalizes each (sample, channel) plane to zero mean / unit variance using
// statistics of the current input (population variance), then applies the
// per-channel affine. This is the frozen-normalization semantic used by the
// whole pipeline: untrained running averages do not exist, so the statistics
// always come from the data being normalized.
template <typename T>
TensorT<T> instance_norm(const TensorT<T>& input, const TensorT<T>& gamma,
                         const TensorT<T>& beta, T eps = T(1e-5)) {
    if (input.rank() != 4) {
        throw std::invalid_argument("instance_norm: input must be rank 4");
    }
    const std::size_t B = input.extent(0), C = input.extent(1);
    const std::size_t N = input.extent(2) * input.extent(3);
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
        throw std::invalid_argument("instance_norm: gamma/beta must be rank-1 [C]");
    }
    if (eps <= T(0)) {
        throw std::invalid_argument("instance_norm: eps must be positive");
    }
    TensorT<T> out(input.shape());
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* in = input.data() + (b * C + c) * N;
            T* o = out.data() + (b * C + c) * N;
            T mean = T(0);
            for (std::size_t i = 0; i < N; ++i) mean += in[i];
            mean /= static_cast<T>(N);
            T var = T(0);
            for (std::size_t i = 0; i < N; ++i) {
                const T d = in[i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(N);
            const T inv = T(1) / std::sqrt(var + eps);
            const T gc = gamma[c], bc = beta[c];
            for (std::size_t i = 0; i < N; ++i) o[i] = gc * (in[i] - mean) * inv + bc;
        }
    }
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

// grad through relu given the forward *input*.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out) {
    TensorT<T> g(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i)
        g[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return g;
}

namespace detail {

struct LerpTap {
    std::size_t i0, i1;
    double w1;  // weight on i1; i0 gets (1 - w1)
};

// align-corners-false sampling: src = (dst + 0.5) * in/out - 0.5, clamped.
inline std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<LerpTap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (s < 0.0) s = 0.0;
        const auto limit = static_cast<double>(in - 1);
        if (s > limit) s = limit;
        const auto i0 = static_cast<std::size_t>(s);
        const double w1 = s - static_cast<double>(i0);
        taps[o] = {i0, std::min(i0 + 1, in - 1), w1};
    }
    return taps;
}

}  // namespace detail

template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& input, std::size_t rows_out, std::size_t cols_out) {
    if (input.rank() != 4) {
        throw std::invalid_argument("resize_bilinear: input must be rank 4");
    }
    if (rows_out == 0 || cols_out == 0) {
        throw std::invalid_argument("resize_bilinear: target extents must be >= 1");
    }
    const std::size_t B = input.extent(0), C = input.extent(1);
    const std::size_t R = input.extent(2), Co = input.extent(3);
    const auto ty = detail::bilinear_taps(R, rows_out);
    const auto tx = detail::bilinear_taps(Co, cols_out);
    TensorT<T> out({B, C, rows_out, cols_out});
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* in = input.data() + bc * R * Co;
        T* o = out.data() + bc * rows_out * cols_out;
        for (std::size_t y = 0; y < rows_out; ++y) {
            const auto& t0 = ty[y];
            const T* r0 = in + t0.i0 * Co;
            const T* r1 = in + t0.i1 * Co;
            const T wy1 = static_cast<T>(t0.w1), wy0 = T(1) - wy1;
            for (std::size_t x = 0; x < cols_out; ++x) {
                const auto& t1 = tx[x];
                const T wx1 = static_cast<T>(t1.w1), wx0 = T(1) - wx1;
                o[y * cols_out + x] = wy0 * (wx0 * r0[t1.i0] + wx1 * r0[t1.i1]) +
                                      wy1 * (wx0 * r1[t1.i0] + wx1 * r1[t1.i1]);
            }
        }
    }
    return out;
}

// Transpose of resize_bilinear: scatters grad_out back through the same taps.
template <typename T>
TensorT<T> resize_bilinear_backward(const Shape& input_shape, const TensorT<T>& grad_out) {
    const std::size_t B = input_shape[0], C = input_shape[1];
    const std::size_t R = input_shape[2], Co = input_shape[3];
    const std::size_t Ro = grad_out.extent(2), Cout = grad_out.extent(3);
    const auto ty = detail::bilinear_taps(R, Ro);
    const auto tx = detail::bilinear_taps(Co, Cout);
    TensorT<T> g(input_shape);
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* go = grad_out.data() + bc * Ro * Cout;
        T* gi = g.data() + bc * R * Co;
        for (std::size_t y = 0; y < Ro; ++y) {
            const auto& t0 = ty[y];
            const T wy1 = static_cast<T>(t0.w1), wy0 = T(1) - wy1;
            for (std::size_t x = 0; x < Cout; ++x) {
                const auto& t1 = tx[x];
                const T wx1 = static_cast<T>(t1.w1), wx0 = T(1) - wx1;
                const T v = go[y * Cout + x];
                gi[t0.i0 * Co + t1.i0] += wy0 * wx0 * v;
                gi[t0.i0 * Co + t1.i1] += wy0 * wx1 * v;
                gi[t0.i1 * Co + t1.i0] += wy1 * wx0 * v;
                gi[t0.i1 * Co + t1.i1] += wy1 * wx1 * v;
            }
        }
    }
    return g;
}

template <typename T>
TensorT<T> upsample_nearest2x(const TensorT<T>& input) {
    const std::size_t B = input.extent(0), C = input.extent(1);
    const std::size_t R = input.extent(2), Co = input.extent(3);
    TensorT<T> out({B, C, R * 2, Co * 2});
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* in = input.data() + bc * R * Co;
        T* o = out.data() + bc * 4 * R * Co;
        for (std::size_t y = 0; y < 2 * R; ++y) {
            const T* irow = in + (y / 2) * Co;
            T* orow = o + y * 2 * Co;
            for (std::size_t x = 0; x < 2 * Co; ++x) orow[x] = irow[x / 2];
        }
    }
    return out;
}

template <typename T>
TensorT<T> upsample_nearest2x_backward(const Shape& input_shape, const TensorT<T>& grad_out) {
    const std::size_t B = input_shape[0], C = input_shape[1];
    const std::size_t R = input_shape[2], Co = input_shape[3];
    TensorT<T> g(input_shape);
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* go = grad_out.data() + bc * 4 * R * Co;
        T* gi = g.data() + bc * R * Co;
        for (std::size_t y = 0; y < 2 * R; ++y) {
            const T* grow = go + y * 2 * Co;
            T* girow = gi + (y / 2) * Co;
            for (std::size_t x = 0; x < 2 * Co; ++x) girow[x / 2] += grow[x];
        }
    }
    return g;
}

}  // namespace camoseg
