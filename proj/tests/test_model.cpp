#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "camoseg/checkpoint.hpp"
#include "camoseg/model.hpp"
#include "support/test_util.hpp"

using namespace camoseg;
using camoseg::testing::bitwise_equal;
using camoseg::testing::random_tensor;

namespace {

ModelConfig tiny_cfg(Variant v, std::size_t image = 8, std::size_t channels = 4) {
    ModelConfig cfg;
    cfg.image_size = image;
    cfg.channels = channels;
    cfg.decoder_channels = 2;
    cfg.variant = v;
    cfg.seed = 21;
    cfg.rsampc.depth = 2;
    cfg.tvm.ttt.inner_lr = 0.06;
    cfg.tvm.ttt.mini_batch = 2;
    return cfg;
}

template <typename T>
BatchT<T> tiny_batch(const ModelConfig& cfg, std::size_t b, std::uint64_t seed) {
    const std::size_t s = cfg.image_size;
    BatchT<T> batch{random_tensor<T>({b, 3, s, s}, seed, -0.5, 0.5), TensorT<T>({b, 4}),
                    TensorT<T>({b, 1, s, s})};
    Prng rng(seed + 1);
    for (std::size_t i = 0; i < b; ++i) {
        batch.boxes.at2(i, 0) = T(0.25);
        batch.boxes.at2(i, 1) = T(0.25);
        batch.boxes.at2(i, 2) = T(0.75);
        batch.boxes.at2(i, 3) = T(0.75);
        for (std::size_t j = 0; j < s * s; ++j) {
            batch.gt.data()[i * s * s + j] = rng.next_double() < 0.3 ? T(1) : T(0);
        }
    }
    return batch;
}

}  // namespace

TEST(Fuse, ZeroInputsZeroBiasesGiveZero) {
    auto m = model_init<float>(tiny_cfg(Variant::M1));
    Tensor route1({2, 4, 2, 2});
    auto out = fuse<float>(route1, nullptr, m);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], 0.0f);
}

TEST(Fuse, PassThroughConstruction) {
    auto m = model_init<float>(tiny_cfg(Variant::M1));
    const std::size_t C = m.cfg.channels, C2 = 2 * C, Cg = C2 / 4;
    // grouped conv as the identity (center tap on the matching channel)...
    m.fuse_w = Tensor({C2, Cg, 3, 3});
    for (std::size_t oc = 0; oc < C2; ++oc) m.fuse_w.at4(oc, oc % Cg, 1, 1) = 1.0f;
    m.fuse_b = Tensor({C2});
    // ...and a projection that selects the route-1 slice.
    m.proj_w = Tensor({C, C2, 1, 1});
    for (std::size_t c = 0; c < C; ++c) m.proj_w.at4(c, c, 0, 0) = 1.0f;
    m.proj_b = Tensor({C});

    auto route1 = random_tensor<float>({2, C, 2, 2}, 31);
    auto route2 = random_tensor<float>({2, C, 2, 2}, 32);
    auto out = fuse<float>(route1, &route2, m);
    EXPECT_TRUE(bitwise_equal(out, route1));
}

TEST(Fuse, ShapeContractAndErrors) {
    auto m = model_init<float>(tiny_cfg(Variant::M1));
    auto r1 = random_tensor<float>({3, 4, 2, 2}, 33);
    auto out = fuse<float>(r1, nullptr, m);
    EXPECT_EQ(out.shape(), (Shape{3, 4, 2, 2}));
    auto bad = random_tensor<float>({3, 4, 4, 4}, 34);
    EXPECT_THROW(fuse<float>(r1, &bad, m), std::invalid_argument);
}

TEST(ModelForward, ShapeAndDeterminism) {
    auto cfg = tiny_cfg(Variant::M3, 16, 4);
    auto m = model_init<float>(cfg);
    auto batch = tiny_batch<float>(cfg, 2, 41);
    auto a = model_forward(m, batch.images, batch.boxes, RunMode::Train);
    EXPECT_EQ(a.shape(), (Shape{2, 1, 16, 16}));
    auto b = model_forward(m, batch.images, batch.boxes, RunMode::Train);
    EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(ModelForward, M2InferEqualsM1InferWithSharedWeights) {
    auto m1 = model_init<float>(tiny_cfg(Variant::M1, 16, 4));
    auto m2 = model_init<float>(tiny_cfg(Variant::M2, 16, 4));
    // same seed -> identical encoder/fusion/decoder weights by construction
    ASSERT_TRUE(bitwise_equal(m1.fuse_w, m2.fuse_w));
    ASSERT_TRUE(bitwise_equal(m1.dec1_w, m2.dec1_w));
    auto batch = tiny_batch<float>(tiny_cfg(Variant::M1, 16, 4), 2, 43);
    auto a = model_forward(m1, batch.images, batch.boxes, RunMode::Infer);
    auto b = model_forward(m2, batch.images, batch.boxes, RunMode::Infer);
    EXPECT_TRUE(bitwise_equal(a, b));
    // in train mode the perturbation route makes them differ
    auto at = model_forward(m1, batch.images, batch.boxes, RunMode::Train);
    auto bt = model_forward(m2, batch.images, batch.boxes, RunMode::Train);
    EXPECT_FALSE(bitwise_equal(at, bt));
}

TEST(ModelForward, ModeDiscipline) {
    auto cfg = tiny_cfg(Variant::M3, 16, 4);
    auto m = model_init<float>(cfg);
    auto batch = tiny_batch<float>(cfg, 1, 44);
    model_forward(m, batch.images, batch.boxes, RunMode::Infer);
    model_forward(m, batch.images, batch.boxes, RunMode::Infer);
    EXPECT_EQ(m.rsampc.pipeline_runs.load(), 0u);
    model_forward(m, batch.images, batch.boxes, RunMode::Train);
    EXPECT_EQ(m.rsampc.pipeline_runs.load(), 1u);
}

TEST(ModelLoss, KnownValues) {
    // logits 0 -> probability one half -> BCE term is ln 2 for any gt
    Tensor logits({1, 1, 4, 4});
    Tensor gt({1, 1, 4, 4});
    for (std::size_t i = 0; i < 8; ++i) gt[i] = 1.0f;
    auto res = model_loss(logits, gt);
    const double inter = 0.5 * 8, psum = 0.5 * 16, gsum = 8;
    const double iou = (inter + 1) / (psum + gsum - inter + 1);
    EXPECT_NEAR(res.value, std::log(2.0) + (1 - iou), 1e-6);

    // close-to-perfect fit drives the loss toward zero
    Tensor big({1, 1, 2, 2});
    Tensor g2({1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) {
        g2[i] = i < 2 ? 1.0f : 0.0f;
        big[i] = i < 2 ? 30.0f : -30.0f;
    }
    EXPECT_LT(model_loss(big, g2).value, 1e-3);

    // empty gt, empty prediction: smoothing keeps everything finite
    Tensor neg({1, 1, 2, 2}, -30.0f);
    Tensor zero({1, 1, 2, 2});
    EXPECT_LT(model_loss(neg, zero).value, 1e-3);

    Tensor bad_gt({1, 1, 2, 2}, 1.5f);
    EXPECT_THROW(model_loss(zero, bad_gt), std::invalid_argument);
}

TEST(TrainStep, ZeroLrLeavesModelBitIdentical) {
    auto cfg = tiny_cfg(Variant::M3, 16, 4);
    auto m = model_init<float>(cfg);
    auto copy = m;
    auto batch = tiny_batch<float>(cfg, 2, 45);
    const double loss = train_step(m, batch, 0.0f);
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_TRUE(bitwise_equal(m.fuse_w, copy.fuse_w));
    EXPECT_TRUE(bitwise_equal(m.dec1_w, copy.dec1_w));
    EXPECT_TRUE(bitwise_equal(m.tvm.proj.theta_k, copy.tvm.proj.theta_k));
}

TEST(TrainStep, FrozenPartitionNeverMoves) {
    auto cfg = tiny_cfg(Variant::M3, 16, 4);
    auto m = model_init<float>(cfg);
    auto enc1 = m.enc1_w, cid = m.rsampc.ci_d, w0 = m.tvm.w0;
    auto batch = tiny_batch<float>(cfg, 2, 46);
    for (int i = 0; i < 5; ++i) train_step(m, batch, 0.01f);
    EXPECT_TRUE(bitwise_equal(m.enc1_w, enc1));
    EXPECT_TRUE(bitwise_equal(m.rsampc.ci_d, cid));
    EXPECT_TRUE(bitwise_equal(m.tvm.w0, w0));
    // and the trainable set moved
    EXPECT_FALSE(bitwise_equal(m.fuse_w, model_init<float>(cfg).fuse_w));
}

TEST(TrainStep, VariantParameterSetsNestStrictly) {
    auto names = [](Variant v) {
        std::set<std::string> out;
        auto m = model_init<float>(tiny_cfg(v, 16, 4));
        for (const auto& e : model_entries(m)) out.insert(e.name);
        return out;
    };
    auto n1 = names(Variant::M1), n2 = names(Variant::M2), n3 = names(Variant::M3);
    EXPECT_TRUE(std::includes(n2.begin(), n2.end(), n1.begin(), n1.end()));
    EXPECT_TRUE(std::includes(n3.begin(), n3.end(), n2.begin(), n2.end()));
    EXPECT_GT(n2.size(), n1.size());
    EXPECT_GT(n3.size(), n2.size());
}

TEST(TrainStep, TvmProjectionsReceiveGradient) {
    auto cfg = tiny_cfg(Variant::M3, 16, 4);
    auto m = model_init<float>(cfg);
    auto batch = tiny_batch<float>(cfg, 2, 47);
    ForwardCacheT<float> cache;
    auto logits = model_forward(m, batch.images, batch.boxes, RunMode::Train, &cache);
    auto loss = model_loss(logits, batch.gt);
    auto grads = model_backward(m, cache, loss.dlogits);
    ASSERT_TRUE(grads.has_tvm);
    double total = 0;
    for (std::size_t i = 0; i < grads.tvm.theta_k.numel(); ++i) {
        total += std::abs(grads.tvm.theta_k[i]) + std::abs(grads.tvm.theta_v[i]) +
                 std::abs(grads.tvm.theta_q[i]);
    }
    EXPECT_GT(total, 0.0);
}

TEST(TrainStep, GradientsMatchFiniteDifferences) {
    // image 16 -> a 2x2 detail map -> 4 tokens, so the positional ramp keeps
    // the sequence (and the projection gradients) away from zero
    auto cfg = tiny_cfg(Variant::M3, 16, 4);
    auto m = model_init<double>(cfg);
    auto batch = tiny_batch<double>(cfg, 2, 48);

    auto loss_value = [&]() {
        auto logits = model_forward(m, batch.images, batch.boxes, RunMode::Train);
        return model_loss(logits, batch.gt).value;
    };
    ForwardCacheT<double> cache;
    auto logits = model_forward(m, batch.images, batch.boxes, RunMode::Train, &cache);
    auto loss = model_loss(logits, batch.gt);
    auto g = model_backward(m, cache, loss.dlogits);

    using camoseg::testing::fd_norm_rel_error;
    EXPECT_LT(fd_norm_rel_error(m.fuse_w, g.fuse_w, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.fuse_b, g.fuse_b, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.proj_w, g.proj_w, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.proj_b, g.proj_b, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.dec1_w, g.dec1_w, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.dec1_b, g.dec1_b, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.box_w, g.box_w, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.dec2_w, g.dec2_w, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.dec2_b, g.dec2_b, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.tvm.proj.theta_k, g.tvm.theta_k, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.tvm.proj.theta_v, g.tvm.theta_v, loss_value), 1e-4);
    EXPECT_LT(fd_norm_rel_error(m.tvm.proj.theta_q, g.tvm.theta_q, loss_value), 1e-4);
}

TEST(TrainStep, OverfitsOneBatch) {
    auto cfg = tiny_cfg(Variant::M3, 16, 8);
    cfg.decoder_channels = 4;
    auto m = model_init<float>(cfg);
    // a representable target: the filled box region (the decoder upsamples a
    // coarse latent, so per-pixel noise would be unfittable by construction)
    auto batch = tiny_batch<float>(cfg, 2, 49);
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 0; x < 16; ++x) {
                const bool inside = y >= 4 && y < 12 && x >= 4 && x < 12;
                batch.gt.data()[b * 256 + y * 16 + x] = inside ? 1.0f : 0.0f;
            }
        }
    }
    const double first = train_step(m, batch, 0.1f);
    double last = first;
    for (int i = 0; i < 199; ++i) last = train_step(m, batch, 0.1f);
    EXPECT_LT(last, 0.5 * first) << "loss " << first << " -> " << last;
}

TEST(ModelForward, AblationHookZeroesOneChannel) {
    auto cfg = tiny_cfg(Variant::M1, 16, 4);
    auto m = model_init<float>(cfg);
    auto batch = tiny_batch<float>(cfg, 1, 51);
    ForwardCacheT<float>* no_cache = nullptr;
    auto base = model_forward(m, batch.images, batch.boxes, RunMode::Infer);
    // some channel must carry signal (a relu-dead channel may ablate to a
    // no-op, so do not insist on one specific index)
    bool any_changed = false;
    for (std::size_t c = 0; c < cfg.channels && !any_changed; ++c) {
        auto ablated =
            model_forward(m, batch.images, batch.boxes, RunMode::Infer, no_cache, c);
        any_changed = !bitwise_equal(base, ablated);
    }
    EXPECT_TRUE(any_changed);
    EXPECT_THROW(
        model_forward(m, batch.images, batch.boxes, RunMode::Infer, no_cache, 99),
        std::invalid_argument);
}
