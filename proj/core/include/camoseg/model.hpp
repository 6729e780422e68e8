#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "camoseg/ops.hpp"
#include "camoseg/rsampc.hpp"
#include "camoseg/tensor.hpp"
#include "camoseg/tvm.hpp"

namespace camoseg {

// Ablation variants: M1 = baseline, M2 = baseline + frozen perturbation
// route, M3 = M2 + high-frequency TTT route. The parameter sets nest
// strictly: every variant shares the fusion/decoder shapes (an absent route
// contributes a zero block to the fusion input).
enum class Variant { M1 = 1, M2 = 2, M3 = 3 };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::M1: return "M1";
        case Variant::M2: return "M2";
        default: return "M3";
    }
}

struct ModelConfig {
    std::size_t image_size = 256;     // divisible by 8
    std::size_t channels = 32;        // embedding width C (even)
    std::size_t decoder_channels = 16;
    Variant variant = Variant::M3;
    RsampcConfig rsampc{};            // channels/seed filled by model_init
    TvmConfig tvm{};                  // ttt.dim filled by model_init
    std::uint64_t seed = 1;

    std::size_t embed_size() const { return image_size / 4; }

    void validate() const {
        if (image_size < 8 || image_size % 8 != 0) {
            throw std::invalid_argument("model: image_size must be a positive multiple of 8");
        }
        if (channels < 2 || channels % 2 != 0) {
            throw std::invalid_argument("model: channels must be even and >= 2");
        }
        if (decoder_channels == 0) {
            throw std::invalid_argument("model: decoder_channels must be >= 1");
        }
    }
};

// Dense conditioning plus the normalized box derived from the GT mask.
struct BoxPrompt {
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!(in01(x0) && in01(y0) && in01(x1) && in01(y1) && x0 < x1 && y0 < y1)) {
            throw std::invalid_argument("box prompt: need 0<=x0<x1<=1 and 0<=y0<y1<=1");
        }
    }
};

// Frozen surrogate encoder (3 conv+relu stages, image -> C x S/4 x S/4
// embedding), two parallel routes, concat + grouped dilated conv + 1x1
// projection fusion, and a two-stage upsample decoder conditioned on the box
// prompt. Only fusion, decoder and the TTT view projections train.
template <typename T>
struct ToyModelT {
    ModelConfig cfg;

    // frozen
    TensorT<T> enc1_w, enc2_w, enc3_w;
    RsampcStackT<T> rsampc;  // populated for M2/M3
    // route 2 (theta_* trainable, w0 fixed)
    TvmStackT<T> tvm;        // populated for M3
    // trainable
    TensorT<T> fuse_w, fuse_b;    // [2C, 2C/4, 3, 3] groups=4 dilation=2, [2C]
    TensorT<T> proj_w, proj_b;    // [C, 2C, 1, 1], [C]
    TensorT<T> dec1_w, dec1_b;    // [Cd, C, 3, 3], [Cd]
    TensorT<T> box_w;             // [Cd, 4]
    TensorT<T> dec2_w, dec2_b;    // [1, Cd, 3, 3], [1]

    ConvSpec enc1_spec() const { return {3, cfg.channels, 3, 1, 1, 2}; }
    ConvSpec enc2_spec() const { return {cfg.channels, cfg.channels, 3, 1, 1, 2}; }
    ConvSpec enc3_spec() const { return {cfg.channels, cfg.channels, 3, 1, 1, 1}; }
    ConvSpec fuse_spec() const { return {2 * cfg.channels, 2 * cfg.channels, 3, 2, 4, 1}; }
    ConvSpec proj_spec() const { return {2 * cfg.channels, cfg.channels, 1, 1, 1, 1}; }
    ConvSpec dec1_spec() const { return {cfg.channels, cfg.decoder_channels, 3, 1, 1, 1}; }
    ConvSpec dec2_spec() const { return {cfg.decoder_channels, 1, 3, 1, 1, 1}; }
};

using ToyModel = ToyModelT<float>;

template <typename T>
ToyModelT<T> model_init(ModelConfig cfg) {
    cfg.validate();
    const std::size_t C = cfg.channels, Cd = cfg.decoder_channels;
    cfg.rsampc.channels = C;
    cfg.rsampc.seed = derive_seed(cfg.seed, 400);
    cfg.tvm.ttt.dim = C;

    ToyModelT<T> m;
    m.cfg = cfg;
    m.enc1_w = prng_fill<T>({C, 3, 3, 3}, derive_seed(cfg.seed, 101), Init::UniformKaiming);
    m.enc2_w = prng_fill<T>({C, C, 3, 3}, derive_seed(cfg.seed, 102), Init::UniformKaiming);
    m.enc3_w = prng_fill<T>({C, C, 3, 3}, derive_seed(cfg.seed, 103), Init::UniformKaiming);
    if (cfg.variant >= Variant::M2) m.rsampc = rsampc_init<T>(cfg.rsampc);
    if (cfg.variant == Variant::M3) m.tvm = tvm_init<T>(cfg.tvm, derive_seed(cfg.seed, 500));

    m.fuse_w = prng_fill<T>({2 * C, 2 * C / 4, 3, 3}, derive_seed(cfg.seed, 201),
                            Init::UniformKaiming);
    m.fuse_b = TensorT<T>({2 * C});
    m.proj_w = prng_fill<T>({C, 2 * C, 1, 1}, derive_seed(cfg.seed, 202), Init::UniformKaiming);
    m.proj_b = TensorT<T>({C});
    m.dec1_w = prng_fill<T>({Cd, C, 3, 3}, derive_seed(cfg.seed, 301), Init::UniformKaiming);
    m.dec1_b = TensorT<T>({Cd});
    m.box_w = prng_fill<T>({Cd, 4}, derive_seed(cfg.seed, 302), Init::UniformKaiming);
    m.dec2_w = prng_fill<T>({1, Cd, 3, 3}, derive_seed(cfg.seed, 303), Init::UniformKaiming);
    m.dec2_b = TensorT<T>({1});
    return m;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) ||
        a.extent(3) != b.extent(3)) {
        throw std::invalid_argument("concat_channels: batch/spatial extents must match");
    }
    const std::size_t B = a.extent(0), Ca = a.extent(1), Cb = b.extent(1);
    const std::size_t N = a.extent(2) * a.extent(3);
    TensorT<T> out({B, Ca + Cb, a.extent(2), a.extent(3)});
    for (std::size_t bi = 0; bi < B; ++bi) {
        std::copy(a.data() + bi * Ca * N, a.data() + (bi + 1) * Ca * N,
                  out.data() + bi * (Ca + Cb) * N);
        std::copy(b.data() + bi * Cb * N, b.data() + (bi + 1) * Cb * N,
                  out.data() + (bi * (Ca + Cb) + Ca) * N);
    }
    return out;
}

// Channel-concatenates the routes (an absent second route contributes
// zeros), applies the grouped dilated 3x3 convolution and projects back to C
// channels. Purely linear, so a suitably constructed projection can pass
// route 1 through unchanged.
template <typename T>
TensorT<T> fuse(const TensorT<T>& route1, const TensorT<T>* route2,
                const ToyModelT<T>& m, TensorT<T>* cat_out = nullptr,
                TensorT<T>* mid_out = nullptr) {
    TensorT<T> zeros;
    const TensorT<T>* r2 = route2;
    if (!r2) {
        zeros = TensorT<T>(route1.shape());
        r2 = &zeros;
    }
    if (!route1.same_shape(*r2)) {
        throw std::invalid_argument("fuse: route shapes disagree");
    }
    TensorT<T> cat = concat_channels(route1, *r2);
    TensorT<T> mid = conv2d(cat, m.fuse_w, m.fuse_spec(), &m.fuse_b);
    TensorT<T> out = conv2d(mid, m.proj_w, m.proj_spec(), &m.proj_b);
    if (cat_out) *cat_out = std::move(cat);
    if (mid_out) *mid_out = std::move(mid);
    return out;
}

// Intermediates recorded by a training-mode forward pass.
template <typename T>
struct ForwardCacheT {
    TensorT<T> cat, mid;          // fusion inputs
    TensorT<T> up1, pre1, up2;    // decoder inputs (pre1 = stage-1 pre-activation)
    TensorT<T> boxes;             // [B, 4]
    TvmTapeT<T> tvm_tape;
    bool has_tvm = false;
};

template <typename T>
TensorT<T> boxes_tensor(const std::vector<BoxPrompt>& boxes) {
    TensorT<T> t({boxes.size(), 4});
    for (std::size_t b = 0; b < boxes.size(); ++b) {
        boxes[b].validate();
        t.at2(b, 0) = static_cast<T>(boxes[b].x0);
        t.at2(b, 1) = static_cast<T>(boxes[b].y0);
        t.at2(b, 2) = static_cast<T>(boxes[b].x1);
        t.at2(b, 3) = static_cast<T>(boxes[b].y1);
    }
    return t;
}

template <typename T>
TensorT<T> model_embed(const ToyModelT<T>& m, const TensorT<T>& images) {
    TensorT<T> e = relu(conv2d(images, m.enc1_w, m.enc1_spec()));
    e = relu(conv2d(e, m.enc2_w, m.enc2_spec()));
    return relu(conv2d(e, m.enc3_w, m.enc3_spec()));
}

// Full forward pass. `ablate_channel`, when set, zeroes one embedding
// channel before the routes; the sensitivity probe uses this hook.
template <typename T>
TensorT<T> model_forward(const ToyModelT<T>& m, const TensorT<T>& images,
                         const TensorT<T>& boxes, RunMode mode,
                         ForwardCacheT<T>* cache = nullptr,
                         std::optional<std::size_t> ablate_channel = std::nullopt) {
    const std::size_t S = m.cfg.image_size, C = m.cfg.channels;
    if (images.rank() != 4 || images.extent(1) != 3 || images.extent(2) != S ||
        images.extent(3) != S) {
        throw std::invalid_argument("model_forward: images must be [B,3," +
                                    std::to_string(S) + "," + std::to_string(S) + "]");
    }
    const std::size_t B = images.extent(0);
    if (boxes.shape() != Shape{B, 4}) {
        throw std::invalid_argument("model_forward: boxes must be [B,4]");
    }

    TensorT<T> em = model_embed(m, images);
    if (ablate_channel) {
        if (*ablate_channel >= C) {
            throw std::invalid_argument("model_forward: ablation channel out of range");
        }
        const std::size_t N = em.extent(2) * em.extent(3);
        for (std::size_t b = 0; b < B; ++b) {
            T* p = em.data() + (b * C + *ablate_channel) * N;
            for (std::size_t i = 0; i < N; ++i) p[i] = T(0);
        }
    }

    TensorT<T> route1 =
        (m.cfg.variant >= Variant::M2) ? rsampc_apply(em, m.rsampc, mode) : em;
    TensorT<T> route2;
    const TensorT<T>* r2 = nullptr;
    if (m.cfg.variant == Variant::M3) {
        route2 = tvm_apply(em, m.tvm, cache ? &cache->tvm_tape : nullptr);
        r2 = &route2;
        if (cache) cache->has_tvm = true;
    }
    TensorT<T> fused = fuse(route1, r2, m, cache ? &cache->cat : nullptr,
                            cache ? &cache->mid : nullptr);

    // Decoder stage 1: upsample, conv, box-conditioned bias, relu.
    TensorT<T> up1 = upsample_nearest2x(fused);
    TensorT<T> pre1 = conv2d(up1, m.dec1_w, m.dec1_spec(), &m.dec1_b);
    const std::size_t Cd = m.cfg.decoder_channels;
    const std::size_t N1 = pre1.extent(2) * pre1.extent(3);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < Cd; ++c) {
            T bias = T(0);
            for (std::size_t j = 0; j < 4; ++j) bias += m.box_w.at2(c, j) * boxes.at2(b, j);
            T* p = pre1.data() + (b * Cd + c) * N1;
            for (std::size_t i = 0; i < N1; ++i) p[i] += bias;
        }
    }
    TensorT<T> a1 = relu(pre1);

    // Decoder stage 2: upsample, conv to the single-channel logit map.
    TensorT<T> up2 = upsample_nearest2x(a1);
    TensorT<T> logits = conv2d(up2, m.dec2_w, m.dec2_spec(), &m.dec2_b);

    if (cache) {
        cache->up1 = std::move(up1);
        cache->pre1 = std::move(pre1);
        cache->up2 = std::move(up2);
        cache->boxes = boxes;
    }
    return logits;
}

// Mean binary cross-entropy on logits plus one minus the smoothed soft IoU,
// equally weighted; also returns dL/dlogits.
template <typename T>
struct LossResultT {
    double value = 0;
    TensorT<T> dlogits;
};

template <typename T>
LossResultT<T> model_loss(const TensorT<T>& logits, const TensorT<T>& gt) {
    if (!logits.same_shape(gt)) {
        throw std::invalid_argument("loss: logits/gt shape mismatch");
    }
    const std::size_t B = logits.extent(0);
    const std::size_t N = logits.numel() / B;
    for (std::size_t i = 0; i < gt.numel(); ++i) {
        const double g = static_cast<double>(gt[i]);
        if (!(g >= 0.0 && g <= 1.0)) {
            throw std::invalid_argument("loss: gt values must lie in [0,1]");
        }
    }

    LossResultT<T> res;
    res.dlogits = TensorT<T>(logits.shape());
    double bce = 0.0;
    double iou_term = 0.0;
    const double inv_total = 1.0 / static_cast<double>(B * N);
    std::vector<double> probs(N);
    for (std::size_t b = 0; b < B; ++b) {
        const T* z = logits.data() + b * N;
        const T* g = gt.data() + b * N;
        T* dz = res.dlogits.data() + b * N;
        double inter = 0.0, psum = 0.0, gsum = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double zi = static_cast<double>(z[i]);
            const double gi = static_cast<double>(g[i]);
            const double p = 1.0 / (1.0 + std::exp(-zi));
            probs[i] = p;
            bce += std::max(zi, 0.0) - zi * gi + std::log1p(std::exp(-std::abs(zi)));
            inter += p * gi;
            psum += p;
            gsum += gi;
        }
        const double a = inter + 1.0;
        const double d = psum + gsum - inter + 1.0;
        iou_term += 1.0 - a / d;
        for (std::size_t i = 0; i < N; ++i) {
            const double p = probs[i];
            const double gi = static_cast<double>(g[i]);
            const double dl_dp = -(gi * d - a * (1.0 - gi)) / (d * d) / static_cast<double>(B);
            const double d_bce = (p - gi) * inv_total;
            dz[i] = static_cast<T>(d_bce + dl_dp * p * (1.0 - p));
        }
    }
    res.value = bce * inv_total + iou_term / static_cast<double>(B);
    return res;
}

template <typename T>
struct ModelGradsT {
    TensorT<T> fuse_w, fuse_b, proj_w, proj_b;
    TensorT<T> dec1_w, dec1_b, box_w, dec2_w, dec2_b;
    TvmGradsT<T> tvm;
    bool has_tvm = false;
};

template <typename T>
ModelGradsT<T> model_backward(const ToyModelT<T>& m, const ForwardCacheT<T>& cache,
                              const TensorT<T>& dlogits) {
    const std::size_t B = dlogits.extent(0), Cd = m.cfg.decoder_channels;
    ModelGradsT<T> g;

    auto g2 = conv2d_backward(cache.up2, m.dec2_w, m.dec2_spec(), dlogits);
    g.dec2_w = std::move(g2.weights);
    g.dec2_b = std::move(g2.bias);
    TensorT<T> da1 = upsample_nearest2x_backward(
        {B, Cd, cache.up2.extent(2) / 2, cache.up2.extent(3) / 2}, g2.input);
    TensorT<T> dpre1 = relu_backward(cache.pre1, da1);

    // Box conditioning: a per-(sample, channel) constant bias.
    g.box_w = TensorT<T>({Cd, 4});
    const std::size_t N1 = dpre1.extent(2) * dpre1.extent(3);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < Cd; ++c) {
            const T* p = dpre1.data() + (b * Cd + c) * N1;
            T acc = T(0);
            for (std::size_t i = 0; i < N1; ++i) acc += p[i];
            for (std::size_t j = 0; j < 4; ++j)
                g.box_w.at2(c, j) += acc * cache.boxes.at2(b, j);
        }
    }

    auto g1 = conv2d_backward(cache.up1, m.dec1_w, m.dec1_spec(), dpre1);
    g.dec1_w = std::move(g1.weights);
    g.dec1_b = std::move(g1.bias);
    TensorT<T> dfused = upsample_nearest2x_backward(
        {B, m.cfg.channels, cache.up1.extent(2) / 2, cache.up1.extent(3) / 2}, g1.input);

    auto gp = conv2d_backward(cache.mid, m.proj_w, m.proj_spec(), dfused);
    g.proj_w = std::move(gp.weights);
    g.proj_b = std::move(gp.bias);
    auto gf = conv2d_backward(cache.cat, m.fuse_w, m.fuse_spec(), gp.input);
    g.fuse_w = std::move(gf.weights);
    g.fuse_b = std::move(gf.bias);

    if (cache.has_tvm) {
        // Slice the route-2 half of the concat gradient.
        const std::size_t C = m.cfg.channels;
        const std::size_t N = gf.input.extent(2) * gf.input.extent(3);
        TensorT<T> droute2({B, C, gf.input.extent(2), gf.input.extent(3)});
        for (std::size_t b = 0; b < B; ++b) {
            std::copy(gf.input.data() + (b * 2 * C + C) * N,
                      gf.input.data() + (b + 1) * 2 * C * N, droute2.data() + b * C * N);
        }
        g.tvm = tvm_backward(m.tvm, cache.tvm_tape, droute2);
        g.has_tvm = true;
    }
    return g;
}

template <typename T>
struct BatchT {
    TensorT<T> images;  // [B, 3, S, S]
    TensorT<T> boxes;   // [B, 4]
    TensorT<T> gt;      // [B, 1, S, S]
};

using Batch = BatchT<float>;

namespace detail {

template <typename T>
void sgd_apply(TensorT<T>& param, const TensorT<T>& grad, T lr) {
    for (std::size_t i = 0; i < param.numel(); ++i) param[i] -= lr * grad[i];
}

}  // namespace detail

// One plain gradient-descent step on the trainable set. Frozen tensors
// (encoder, perturbation stack, w0) are never written. lr = 0 leaves the
// model bit-identical.
template <typename T>
double train_step(ToyModelT<T>& m, const BatchT<T>& batch, T lr) {
    ForwardCacheT<T> cache;
    TensorT<T> logits = model_forward(m, batch.images, batch.boxes, RunMode::Train, &cache);
    auto loss = model_loss(logits, batch.gt);
    if (!std::isfinite(loss.value)) {
        throw std::runtime_error("train_step: non-finite loss (value=" +
                                 std::to_string(loss.value) + "); aborting");
    }
    if (lr == T(0)) return loss.value;

    auto g = model_backward(m, cache, loss.dlogits);
    detail::sgd_apply(m.fuse_w, g.fuse_w, lr);
    detail::sgd_apply(m.fuse_b, g.fuse_b, lr);
    detail::sgd_apply(m.proj_w, g.proj_w, lr);
    detail::sgd_apply(m.proj_b, g.proj_b, lr);
    detail::sgd_apply(m.dec1_w, g.dec1_w, lr);
    detail::sgd_apply(m.dec1_b, g.dec1_b, lr);
    detail::sgd_apply(m.box_w, g.box_w, lr);
    detail::sgd_apply(m.dec2_w, g.dec2_w, lr);
    detail::sgd_apply(m.dec2_b, g.dec2_b, lr);
    if (g.has_tvm) {
        detail::sgd_apply(m.tvm.proj.theta_k, g.tvm.theta_k, lr);
        detail::sgd_apply(m.tvm.proj.theta_v, g.tvm.theta_v, lr);
        detail::sgd_apply(m.tvm.proj.theta_q, g.tvm.theta_q, lr);
        // w0 stays fixed: the trainable set is fusion + decoder + projections.
    }
    return loss.value;
}

}  // namespace camoseg
