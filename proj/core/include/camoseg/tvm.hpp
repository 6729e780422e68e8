#pragma once

#include <stdexcept>
#include <vector>

#include "camoseg/ops.hpp"
#include "camoseg/tensor.hpp"
#include "camoseg/ttt.hpp"

namespace camoseg {

// Single-level orthonormal 2-D Haar analysis of a feature map.
// ll carries the approximation, lh/hl/hh the horizontal/vertical/diagonal
// detail; each subband has half the spatial extent per axis.
template <typename T>
struct DwtSubbandsT {
    TensorT<T> ll, lh, hl, hh;
};

using DwtSubbands = DwtSubbandsT<float>;

template <typename T>
DwtSubbandsT<T> haar_dwt2d(const TensorT<T>& x) {
    if (x.rank() != 4) throw std::invalid_argument("haar_dwt2d: input must be rank 4");
    const std::size_t B = x.extent(0), C = x.extent(1), R = x.extent(2), Co = x.extent(3);
    if (R % 2 != 0 || Co % 2 != 0) {
        throw std::invalid_argument("haar_dwt2d: spatial extents must be even, got " +
                                    shape_str(x.shape()));
    }
    const std::size_t Rh = R / 2, Ch = Co / 2;
    DwtSubbandsT<T> s{TensorT<T>({B, C, Rh, Ch}), TensorT<T>({B, C, Rh, Ch}),
                      TensorT<T>({B, C, Rh, Ch}), TensorT<T>({B, C, Rh, Ch})};
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* in = x.data() + bc * R * Co;
        T* ll = s.ll.data() + bc * Rh * Ch;
        T* lh = s.lh.data() + bc * Rh * Ch;
        T* hl = s.hl.data() + bc * Rh * Ch;
        T* hh = s.hh.data() + bc * Rh * Ch;
        for (std::size_t i = 0; i < Rh; ++i) {
            const T* r0 = in + (2 * i) * Co;
            const T* r1 = in + (2 * i + 1) * Co;
            for (std::size_t j = 0; j < Ch; ++j) {
                const T a = r0[2 * j], b = r0[2 * j + 1];
                const T c = r1[2 * j], d = r1[2 * j + 1];
                const std::size_t o = i * Ch + j;
                ll[o] = (a + b + c + d) / T(2);
                lh[o] = (a + b - c - d) / T(2);
                hl[o] = (a - b + c - d) / T(2);
                hh[o] = (a - b - c + d) / T(2);
            }
        }
    }
    return s;
}

template <typename T>
TensorT<T> haar_idwt2d(const DwtSubbandsT<T>& s) {
    const std::size_t B = s.ll.extent(0), C = s.ll.extent(1);
    const std::size_t Rh = s.ll.extent(2), Ch = s.ll.extent(3);
    TensorT<T> x({B, C, Rh * 2, Ch * 2});
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* ll = s.ll.data() + bc * Rh * Ch;
        const T* lh = s.lh.data() + bc * Rh * Ch;
        const T* hl = s.hl.data() + bc * Rh * Ch;
        const T* hh = s.hh.data() + bc * Rh * Ch;
        T* out = x.data() + bc * 4 * Rh * Ch;
        for (std::size_t i = 0; i < Rh; ++i) {
            T* r0 = out + (2 * i) * (2 * Ch);
            T* r1 = out + (2 * i + 1) * (2 * Ch);
            for (std::size_t j = 0; j < Ch; ++j) {
                const std::size_t o = i * Ch + j;
                r0[2 * j] = (ll[o] + lh[o] + hl[o] + hh[o]) / T(2);
                r0[2 * j + 1] = (ll[o] + lh[o] - hl[o] - hh[o]) / T(2);
                r1[2 * j] = (ll[o] - lh[o] + hl[o] - hh[o]) / T(2);
                r1[2 * j + 1] = (ll[o] - lh[o] - hl[o] + hh[o]) / T(2);
            }
        }
    }
    return x;
}

// [B, C, rows, cols] -> [B, rows*cols, C], row-major spatial scan:
// the pixel at (r, c) becomes token r*cols + c.
template <typename T>
TensorT<T> seq_flatten(const TensorT<T>& x) {
    if (x.rank() != 4) throw std::invalid_argument("seq_flatten: input must be rank 4");
    const std::size_t B = x.extent(0), C = x.extent(1), R = x.extent(2), Co = x.extent(3);
    const std::size_t n = R * Co;
    TensorT<T> s({B, n, C});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* in = x.data() + (b * C + c) * n;
            T* out = s.data() + b * n * C + c;
            for (std::size_t t = 0; t < n; ++t) out[t * C] = in[t];
        }
    }
    return s;
}

template <typename T>
TensorT<T> seq_unflatten(const TensorT<T>& s, std::size_t rows, std::size_t cols) {
    if (s.rank() != 3) throw std::invalid_argument("seq_unflatten: input must be rank 3");
    if (s.extent(1) != rows * cols) {
        throw std::invalid_argument("seq_unflatten: sequence length " +
                                    std::to_string(s.extent(1)) + " != rows*cols = " +
                                    std::to_string(rows * cols));
    }
    const std::size_t B = s.extent(0), n = s.extent(1), C = s.extent(2);
    TensorT<T> x({B, C, rows, cols});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* in = s.data() + b * n * C + c;
            T* out = x.data() + (b * C + c) * n;
            for (std::size_t t = 0; t < n; ++t) out[t] = in[t * C];
        }
    }
    return x;
}

// Token positions 0..n-1 normalized to [0, 1]; a single token gets 0.
// Input-independent by construction.
template <typename T>
TensorT<T> pos_encoding(std::size_t n) {
    if (n == 0) throw std::invalid_argument("pos_encoding: need at least one token");
    TensorT<T> p({n});
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i)
            p[i] = static_cast<T>(static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return p;
}

// High-frequency route: Haar detail -> token sequence (+ positional ramp) ->
// TTT-Linear -> spatial restore -> bilinear upsample back to input size.
struct TvmConfig {
    TttConfig ttt;
    bool sum_details = false;  // feed lh+hl+hh instead of hh alone
};

template <typename T>
struct TvmStackT {
    TvmConfig cfg;
    ViewProjectionsT<T> proj;
    TensorT<T> w0;  // [C, C]
};

using TvmStack = TvmStackT<float>;

template <typename T>
TvmStackT<T> tvm_init(const TvmConfig& cfg, std::uint64_t seed) {
    const std::size_t C = cfg.ttt.dim;
    TvmStackT<T> s{cfg,
                   {prng_fill<T>({C, C}, derive_seed(seed, 1), Init::UniformKaiming),
                    prng_fill<T>({C, C}, derive_seed(seed, 2), Init::UniformKaiming),
                    prng_fill<T>({C, C}, derive_seed(seed, 3), Init::UniformKaiming)},
                   TensorT<T>({C, C})};
    return s;
}

template <typename T>
struct TvmTapeT {
    std::vector<TensorT<T>> token_seqs;      // per batch item, [T, C]
    std::vector<TttTapeT<T>> ttt_tapes;      // per batch item
    Shape small_shape;                       // [B, C, R/2, Co/2]
};

template <typename T>
TensorT<T> tvm_apply(const TensorT<T>& em, const TvmStackT<T>& stack,
                     TvmTapeT<T>* tape = nullptr) {
    const std::size_t B = em.extent(0), C = em.extent(1);
    const std::size_t R = em.extent(2), Co = em.extent(3);
    if (C != stack.cfg.ttt.dim) {
        throw std::invalid_argument("tvm_apply: embedding channels != ttt dim");
    }
    auto sub = haar_dwt2d(em);
    TensorT<T> detail = sub.hh;
    if (stack.cfg.sum_details) {
        detail += sub.lh;
        detail += sub.hl;
    }
    const std::size_t Rh = R / 2, Ch = Co / 2, n_tok = Rh * Ch;
    TensorT<T> tokens = seq_flatten(detail);
    const TensorT<T> pos = pos_encoding<T>(n_tok);
    for (std::size_t b = 0; b < B; ++b) {
        T* base = tokens.data() + b * n_tok * C;
        for (std::size_t t = 0; t < n_tok; ++t) {
            const T p = pos[t];
            for (std::size_t c = 0; c < C; ++c) base[t * C + c] += p;
        }
    }

    if (tape) {
        tape->token_seqs.clear();
        tape->ttt_tapes.assign(B, {});
        tape->small_shape = {B, C, Rh, Ch};
    }
    TensorT<T> z({B, n_tok, C});
    for (std::size_t b = 0; b < B; ++b) {
        TensorT<T> seq_b = TensorT<T>::from_data(
            {n_tok, C}, std::vector<T>(tokens.data() + b * n_tok * C,
                                       tokens.data() + (b + 1) * n_tok * C));
        auto fwd = ttt_forward(seq_b, stack.proj, stack.cfg.ttt, stack.w0,
                               tape ? &tape->ttt_tapes[b] : nullptr);
        std::copy(fwd.outputs.data(), fwd.outputs.data() + n_tok * C,
                  z.data() + b * n_tok * C);
        if (tape) tape->token_seqs.push_back(std::move(seq_b));
    }
    TensorT<T> small = seq_unflatten(z, Rh, Ch);
    return resize_bilinear(small, R, Co);
}

template <typename T>
struct TvmGradsT {
    TensorT<T> theta_k, theta_v, theta_q, w0;
};

// Gradients of tvm_apply w.r.t. the view projections and w0. Nothing
// upstream of the wavelet stage is trainable, so the chain stops at the
// token sequence.
template <typename T>
TvmGradsT<T> tvm_backward(const TvmStackT<T>& stack, const TvmTapeT<T>& tape,
                          const TensorT<T>& grad_out) {
    const std::size_t B = tape.small_shape[0], C = tape.small_shape[1];
    const std::size_t Rh = tape.small_shape[2], Ch = tape.small_shape[3];
    const std::size_t n_tok = Rh * Ch;
    TensorT<T> dsmall = resize_bilinear_backward(tape.small_shape, grad_out);
    TensorT<T> dz = seq_flatten(dsmall);  // inverse of seq_unflatten

    TvmGradsT<T> g{TensorT<T>({C, C}), TensorT<T>({C, C}), TensorT<T>({C, C}),
                   TensorT<T>({C, C})};
    for (std::size_t b = 0; b < B; ++b) {
        TensorT<T> dz_b = TensorT<T>::from_data(
            {n_tok, C},
            std::vector<T>(dz.data() + b * n_tok * C, dz.data() + (b + 1) * n_tok * C));
        auto gb = ttt_backward(tape.token_seqs[b], stack.cfg.ttt, tape.ttt_tapes[b], dz_b);
        g.theta_k += gb.theta_k;
        g.theta_v += gb.theta_v;
        g.theta_q += gb.theta_q;
        g.w0 += gb.w0;
    }
    return g;
}

}  // namespace camoseg
