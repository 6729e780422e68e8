#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "camoseg/tensor.hpp"

namespace camoseg {

// Sequence layer whose hidden state is the weight matrix W of a linear model
// f(x) = W x, updated online by gradient descent on the reconstruction loss
//   l(W; x) = || W * (theta_k x) - theta_v x ||^2,
// and read out through the test view q = theta_q x.
//
// Tokens are consumed in groups of `mini_batch`: every gradient in a group is
// evaluated at the group-start state, the committed hidden state advances
// once per group (so a length-T sequence performs exactly
// ceil(T / mini_batch) updates), and the output of token t reads the partial
// state that already includes the gradients of tokens up to and including t.
// Outputs therefore never depend on later tokens.
struct TttConfig {
    std::size_t dim = 0;         // token channel count C
    double inner_lr = 0.1;       // eta of the inner loop, >= 0
    std::size_t mini_batch = 1;  // tokens per update group, >= 1
    bool residual = false;       // output q + layernorm(W q) instead of W q
};

template <typename T>
struct ViewProjectionsT {
    TensorT<T> theta_k;  // train view
    TensorT<T> theta_v;  // label view
    TensorT<T> theta_q;  // test view
};

template <typename T>
struct TttStateT {
    TensorT<T> w;  // [C, C]
    std::uint64_t step_count = 0;
};

using ViewProjections = ViewProjectionsT<float>;
using TttState = TttStateT<float>;

namespace detail {

template <typename T>
void matvec(const TensorT<T>& a, const T* x, T* y) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = a.data() + i * n;
        T acc = T(0);
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

template <typename T>
void matvec_t(const TensorT<T>& a, const T* x, T* y) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    for (std::size_t j = 0; j < n; ++j) y[j] = T(0);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = a.data() + i * n;
        const T xi = x[i];
        for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * xi;
    }
}

template <typename T>
void outer_add(TensorT<T>& m, const T* a, const T* b, T scale = T(1)) {
    const std::size_t rows = m.extent(0), cols = m.extent(1);
    for (std::size_t i = 0; i < rows; ++i) {
        T* row = m.data() + i * cols;
        const T ai = a[i] * scale;
        for (std::size_t j = 0; j < cols; ++j) row[j] += ai * b[j];
    }
}

constexpr double kLayerNormEps = 1e-5;

// Parameter-free layer norm over a channel vector; returns (mean, inv_std).
template <typename T>
std::pair<T, T> layer_norm(const T* h, T* y, std::size_t n) {
    T mean = T(0);
    for (std::size_t i = 0; i < n; ++i) mean += h[i];
    mean /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = h[i] - mean;
        var += d * d;
    }
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t i = 0; i < n; ++i) y[i] = (h[i] - mean) * inv;
    return {mean, inv};
}

}  // namespace detail

// One inner gradient step: W' = W - eta * 2 (W k - v) k^T. Rejects
// non-finite inputs; eta = 0 leaves W bit-identical.
template <typename T>
TttStateT<T> ttt_step(const TttStateT<T>& state, const TensorT<T>& x_train,
                      const TensorT<T>& v_label, T eta) {
    const std::size_t C = state.w.extent(0);
    if (x_train.shape() != Shape{C} || v_label.shape() != Shape{C}) {
        throw std::invalid_argument("ttt_step: views must be rank-1 [C]");
    }
    if (!x_train.all_finite() || !v_label.all_finite() ||
        !std::isfinite(static_cast<double>(eta))) {
        throw std::invalid_argument("ttt_step: non-finite input rejected");
    }
    TttStateT<T> next{state.w, state.step_count + 1};
    if (eta != T(0)) {
        std::vector<T> e(C);
        detail::matvec(state.w, x_train.data(), e.data());
        for (std::size_t i = 0; i < C; ++i) e[i] -= v_label[i];
        detail::outer_add(next.w, e.data(), x_train.data(), T(-2) * eta);
    }
    return next;
}

// Recorded intermediates of one forward pass; consumed by ttt_backward.
template <typename T>
struct TttTapeT {
    std::vector<std::pair<std::size_t, std::size_t>> groups;  // [start, end)
    std::vector<TensorT<T>> w_states;  // group-start states + final, size G+1
    std::vector<T> k, v, q, e;         // T x C each, row per token
};

template <typename T>
struct TttForwardResultT {
    TensorT<T> outputs;  // [T, C]
    TttStateT<T> state;
    std::size_t updates = 0;
};

template <typename T>
TttForwardResultT<T> ttt_forward(const TensorT<T>& seq, const ViewProjectionsT<T>& proj,
                                 const TttConfig& cfg, const TensorT<T>& w0,
                                 TttTapeT<T>* tape = nullptr) {
    if (seq.rank() != 2 || seq.extent(1) != cfg.dim) {
        throw std::invalid_argument("ttt_forward: sequence must be [T, C] with C = cfg.dim");
    }
    const std::size_t C = cfg.dim, n_tokens = seq.extent(0);
    if (n_tokens == 0) throw std::invalid_argument("ttt_forward: empty sequence");
    if (proj.theta_k.shape() != Shape{C, C} || proj.theta_v.shape() != Shape{C, C} ||
        proj.theta_q.shape() != Shape{C, C} || w0.shape() != Shape{C, C}) {
        throw std::invalid_argument("ttt_forward: projections and w0 must be [C, C]");
    }
    if (cfg.mini_batch == 0) throw std::invalid_argument("ttt_forward: mini_batch must be >= 1");
    if (cfg.inner_lr < 0) throw std::invalid_argument("ttt_forward: inner_lr must be >= 0");

    const T eta = static_cast<T>(cfg.inner_lr);
    TttForwardResultT<T> res{TensorT<T>({n_tokens, C}), {w0, 0}, 0};
    if (tape) {
        tape->groups.clear();
        tape->w_states.clear();
        tape->w_states.push_back(w0);
        tape->k.assign(n_tokens * C, T(0));
        tape->v.assign(n_tokens * C, T(0));
        tape->q.assign(n_tokens * C, T(0));
        tape->e.assign(n_tokens * C, T(0));
    }

    std::vector<T> k(C), v(C), q(C), e(C), h(C);
    TensorT<T>& w = res.state.w;  // committed state, advanced per group
    TensorT<T> wp = w;            // partial state read by outputs
    for (std::size_t start = 0; start < n_tokens; start += cfg.mini_batch) {
        const std::size_t end = std::min(start + cfg.mini_batch, n_tokens);
        wp = w;
        for (std::size_t t = start; t < end; ++t) {
            const T* x = seq.data() + t * C;
            detail::matvec(proj.theta_k, x, k.data());
            detail::matvec(proj.theta_v, x, v.data());
            detail::matvec(proj.theta_q, x, q.data());
            // Gradient at the group-start state.
            detail::matvec(w, k.data(), e.data());
            for (std::size_t i = 0; i < C; ++i) e[i] -= v[i];
            if (eta != T(0)) detail::outer_add(wp, e.data(), k.data(), T(-2) * eta);
            if (tape) {
                std::copy(k.begin(), k.end(), tape->k.begin() + t * C);
                std::copy(v.begin(), v.end(), tape->v.begin() + t * C);
                std::copy(q.begin(), q.end(), tape->q.begin() + t * C);
                std::copy(e.begin(), e.end(), tape->e.begin() + t * C);
            }
            // Output reads the partial state including this token's gradient.
            T* z = res.outputs.data() + t * C;
            detail::matvec(wp, q.data(), h.data());
            if (cfg.residual) {
                detail::layer_norm(h.data(), z, C);
                for (std::size_t i = 0; i < C; ++i) z[i] += q[i];
            } else {
                std::copy(h.begin(), h.end(), z);
            }
        }
        w = wp;
        res.updates += 1;
        res.state.step_count += end - start;
        if (tape) {
            tape->groups.emplace_back(start, end);
            tape->w_states.push_back(w);
        }
    }
    return res;
}

template <typename T>
struct TttGradsT {
    TensorT<T> theta_k, theta_v, theta_q;  // [C, C] each
    TensorT<T> w0;                         // [C, C]
};

// Reverse-mode gradients of a recorded forward pass with respect to the view
// projections and the initial state. grad_out is dL/d(outputs), [T, C].
template <typename T>
TttGradsT<T> ttt_backward(const TensorT<T>& seq, const TttConfig& cfg,
                          const TttTapeT<T>& tape, const TensorT<T>& grad_out) {
    const std::size_t C = cfg.dim;
    if (grad_out.shape() != seq.shape()) {
        throw std::invalid_argument("ttt_backward: grad_out must match sequence shape");
    }
    const T eta = static_cast<T>(cfg.inner_lr);
    TttGradsT<T> g{TensorT<T>({C, C}), TensorT<T>({C, C}), TensorT<T>({C, C}),
                   TensorT<T>({C, C})};
    TensorT<T> acc({C, C});   // dL/d(partial state) walking backwards
    TensorT<T> extra({C, C}); // sum of de_s k_s^T terms entering dL/dW_group

    std::vector<T> h(C), y(C), dh(C), dq(C), dk(C), dv(C), de(C), tmp(C);
    std::vector<TensorT<T>> partials;
    for (std::size_t gi = tape.groups.size(); gi-- > 0;) {
        const auto [start, end] = tape.groups[gi];
        const TensorT<T>& w_group = tape.w_states[gi];
        const std::size_t m = end - start;

        // Replay the partial states of the group; partials[s] is the state
        // read by the output of token start+s.
        partials.assign(m, w_group);
        for (std::size_t s = 0; s < m; ++s) {
            if (s > 0) partials[s] = partials[s - 1];
            if (eta != T(0)) {
                detail::outer_add(partials[s], tape.e.data() + (start + s) * C,
                                  tape.k.data() + (start + s) * C, T(-2) * eta);
            }
        }

        for (std::size_t i = 0; i < C * C; ++i) extra[i] = T(0);
        for (std::size_t s = m; s-- > 0;) {
            const std::size_t t = start + s;
            const T* x = seq.data() + t * C;
            const T* kt = tape.k.data() + t * C;
            const T* et = tape.e.data() + t * C;
            const T* qt = tape.q.data() + t * C;
            const T* gz = grad_out.data() + t * C;
            const TensorT<T>& wp = partials[s];

            if (cfg.residual) {
                detail::matvec(wp, qt, h.data());
                const auto [mean, inv] = detail::layer_norm(h.data(), y.data(), C);
                (void)mean;
                T m_gz = T(0), m_gzy = T(0);
                for (std::size_t i = 0; i < C; ++i) {
                    m_gz += gz[i];
                    m_gzy += gz[i] * y[i];
                }
                m_gz /= static_cast<T>(C);
                m_gzy /= static_cast<T>(C);
                for (std::size_t i = 0; i < C; ++i)
                    dh[i] = (gz[i] - m_gz - y[i] * m_gzy) * inv;
                detail::matvec_t(wp, dh.data(), dq.data());
                for (std::size_t i = 0; i < C; ++i) dq[i] += gz[i];
            } else {
                std::copy(gz, gz + C, dh.begin());
                detail::matvec_t(wp, dh.data(), dq.data());
            }
            detail::outer_add(acc, dh.data(), qt, T(1));
            detail::outer_add(g.theta_q, dq.data(), x, T(1));

            if (eta != T(0)) {
                // de_s = -2 eta acc k_s; dv_s = -de_s;
                // dk_s = -2 eta (acc^T e_s + w_group^T acc k_s)
                detail::matvec(acc, kt, tmp.data());
                for (std::size_t i = 0; i < C; ++i) de[i] = T(-2) * eta * tmp[i];
                for (std::size_t i = 0; i < C; ++i) dv[i] = -de[i];
                detail::matvec_t(acc, et, dk.data());
                detail::matvec_t(w_group, tmp.data(), h.data());  // h as scratch
                for (std::size_t i = 0; i < C; ++i)
                    dk[i] = T(-2) * eta * (dk[i] + h[i]);
                detail::outer_add(g.theta_k, dk.data(), x, T(1));
                detail::outer_add(g.theta_v, dv.data(), x, T(1));
                detail::outer_add(extra, de.data(), kt, T(1));
            }
        }
        // dL/dW_group = acc + sum_s de_s k_s^T (e_s = W_group k_s - v_s).
        acc += extra;
    }
    g.w0 = acc;
    return g;
}

// True iff perturbing the token at `t_perturb` leaves every output strictly
// before it bit-identical; the recurrent contract of the layer.
template <typename T>
bool ttt_causality_probe(const TensorT<T>& seq, const ViewProjectionsT<T>& proj,
                         const TttConfig& cfg, const TensorT<T>& w0, std::size_t t_perturb) {
    if (t_perturb >= seq.extent(0)) {
        throw std::invalid_argument("ttt_causality_probe: token index out of range");
    }
    const std::size_t C = cfg.dim;
    auto base = ttt_forward(seq, proj, cfg, w0);
    TensorT<T> perturbed = seq;
    for (std::size_t i = 0; i < C; ++i) perturbed.data()[t_perturb * C + i] += T(1);
    auto mod = ttt_forward(perturbed, proj, cfg, w0);
    for (std::size_t t = 0; t < t_perturb; ++t) {
        for (std::size_t i = 0; i < C; ++i) {
            if (base.outputs.data()[t * C + i] != mod.outputs.data()[t * C + i]) return false;
        }
    }
    return true;
}

}  // namespace camoseg
