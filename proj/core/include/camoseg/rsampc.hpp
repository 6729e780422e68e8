#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "camoseg/ops.hpp"
#include "camoseg/tensor.hpp"

namespace camoseg {

enum class RunMode { Train, Infer };

// Frozen, randomly initialized perturbation pipeline applied to the image
// embedding during training only:
//   channel expansion (1x1, C -> 2C, norm + relu)
//   depth x spatial interaction (3x3, 2C -> 2C, norm + relu)
//   channel reduction (1x1, 2C -> C, norm, no relu)
// followed by an optional fixed per-channel scale. Weights are drawn once at
// construction and never updated; at inference the module is the identity.
struct RsampcConfig {
    std::size_t channels = 0;    // C of the incoming embedding
    std::size_t depth = 4;       // number of 3x3 layers, 1..5
    bool channel_scale = false;  // apply the fixed per-channel epsilon scale
    double scale_spread = 0.1;   // scale drawn from uniform(1-s, 1+s)
    std::uint64_t seed = 0;
};

template <typename T>
struct RsampcStackT {
    RsampcConfig cfg;
    TensorT<T> ci_d;                // [2C, C, 1, 1]
    std::vector<TensorT<T>> si;     // depth x [2C, 2C, 3, 3]
    TensorT<T> ci_r;                // [C, 2C, 1, 1]
    std::vector<T> channel_scale;   // empty unless cfg.channel_scale
    TensorT<T> gamma_wide, beta_wide;    // [2C] affine of the wide norms
    TensorT<T> gamma_narrow, beta_narrow;  // [C] affine of the output norm

    // How many times the perturbation pipeline has actually run; infer-mode
    // calls never touch it.
    mutable std::atomic<std::uint64_t> pipeline_runs{0};

    RsampcStackT() = default;
    RsampcStackT(const RsampcStackT& o)
        : cfg(o.cfg), ci_d(o.ci_d), si(o.si), ci_r(o.ci_r),
          channel_scale(o.channel_scale), gamma_wide(o.gamma_wide),
          beta_wide(o.beta_wide), gamma_narrow(o.gamma_narrow),
          beta_narrow(o.beta_narrow), pipeline_runs(o.pipeline_runs.load()) {}
    RsampcStackT& operator=(const RsampcStackT& o) {
        if (this != &o) {
            cfg = o.cfg; ci_d = o.ci_d; si = o.si; ci_r = o.ci_r;
            channel_scale = o.channel_scale;
            gamma_wide = o.gamma_wide; beta_wide = o.beta_wide;
            gamma_narrow = o.gamma_narrow; beta_narrow = o.beta_narrow;
            pipeline_runs.store(o.pipeline_runs.load());
        }
        return *this;
    }
};

using RsampcStack = RsampcStackT<float>;

template <typename T>
RsampcStackT<T> rsampc_init(const RsampcConfig& cfg) {
    if (cfg.channels == 0) throw std::invalid_argument("rsampc_init: channels must be > 0");
    if (cfg.depth < 1 || cfg.depth > 5) {
        throw std::invalid_argument("rsampc_init: depth must be in 1..5");
    }
    if (cfg.channel_scale && !(cfg.scale_spread > 0 && std::isfinite(cfg.scale_spread))) {
        throw std::invalid_argument("rsampc_init: scale_spread must be positive and finite");
    }
    const std::size_t C = cfg.channels, C2 = 2 * C;
    RsampcStackT<T> s;
    s.cfg = cfg;
    s.ci_d = prng_fill<T>({C2, C, 1, 1}, derive_seed(cfg.seed, 10), Init::UniformKaiming);
    for (std::size_t d = 0; d < cfg.depth; ++d) {
        s.si.push_back(
            prng_fill<T>({C2, C2, 3, 3}, derive_seed(cfg.seed, 20 + d), Init::UniformKaiming));
    }
    s.ci_r = prng_fill<T>({C, C2, 1, 1}, derive_seed(cfg.seed, 30), Init::UniformKaiming);
    s.gamma_wide = prng_fill<T>({C2}, 0, Init::Ones);
    s.beta_wide = prng_fill<T>({C2}, 0, Init::Zeros);
    s.gamma_narrow = prng_fill<T>({C}, 0, Init::Ones);
    s.beta_narrow = prng_fill<T>({C}, 0, Init::Zeros);
    if (cfg.channel_scale) {
        Prng rng(derive_seed(cfg.seed, 40));
        s.channel_scale.resize(C);
        for (auto& v : s.channel_scale)
            v = static_cast<T>(rng.uniform(1.0 - cfg.scale_spread, 1.0 + cfg.scale_spread));
    }
    return s;
}

template <typename T>
TensorT<T> rsampc_apply(const TensorT<T>& em, const RsampcStackT<T>& stack, RunMode mode) {
    if (em.rank() != 4 || em.extent(1) != stack.cfg.channels) {
        throw std::invalid_argument("rsampc_apply: embedding must be [B," +
                                    std::to_string(stack.cfg.channels) + ",rows,cols]");
    }
    if (mode == RunMode::Infer) return em;  // absent at inference

    stack.pipeline_runs.fetch_add(1, std::memory_order_relaxed);
    const std::size_t C = stack.cfg.channels, C2 = 2 * C;
    ConvSpec expand{C, C2, 1, 1, 1, 1};
    TensorT<T> x = conv2d(em, stack.ci_d, expand);
    x = relu(instance_norm(x, stack.gamma_wide, stack.beta_wide));
    ConvSpec spatial{C2, C2, 3, 1, 1, 1};
    for (const auto& w : stack.si) {
        x = conv2d(x, w, spatial);
        x = relu(instance_norm(x, stack.gamma_wide, stack.beta_wide));
    }
    ConvSpec reduce{C2, C, 1, 1, 1, 1};
    x = conv2d(x, stack.ci_r, reduce);
    x = instance_norm(x, stack.gamma_narrow, stack.beta_narrow);
    if (!stack.channel_scale.empty()) {
        const std::size_t B = x.extent(0), N = x.extent(2) * x.extent(3);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                T* p = x.data() + (b * C + c) * N;
                const T sc = stack.channel_scale[c];
                for (std::size_t i = 0; i < N; ++i) p[i] *= sc;
            }
        }
    }
    return x;
}

}  // namespace camoseg
