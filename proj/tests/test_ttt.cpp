#include <gtest/gtest.h>

#include <cmath>

#include "camoseg/ttt.hpp"
#include "support/test_util.hpp"

using namespace camoseg;
using camoseg::testing::bitwise_equal;
using camoseg::testing::random_tensor;

namespace {

double inner_loss(const Tensor64& w, const Tensor64& k, const Tensor64& v) {
    const std::size_t C = k.extent(0);
    double loss = 0;
    for (std::size_t i = 0; i < C; ++i) {
        double e = 0;
        for (std::size_t j = 0; j < C; ++j) e += w.at2(i, j) * k[j];
        e -= v[i];
        loss += e * e;
    }
    return loss;
}

ViewProjectionsT<double> random_proj(std::size_t c, std::uint64_t seed) {
    return {random_tensor<double>({c, c}, seed, -0.5, 0.5),
            random_tensor<double>({c, c}, seed + 1, -0.5, 0.5),
            random_tensor<double>({c, c}, seed + 2, -0.5, 0.5)};
}

}  // namespace

TEST(TttStep, ZeroEtaIsBitIdentical) {
    TttStateT<double> s{random_tensor<double>({4, 4}, 1), 0};
    auto k = random_tensor<double>({4}, 2);
    auto v = random_tensor<double>({4}, 3);
    auto next = ttt_step(s, k, v, 0.0);
    EXPECT_TRUE(bitwise_equal(next.w, s.w));
    EXPECT_EQ(next.step_count, 1u);
}

TEST(TttStep, HandUnrolledOneDimensional) {
    // W = 0, k = 1, v = 2, eta = 0.25: gradient is 2(0*1-2)*1 = -4, so
    // W' = 0 - 0.25 * (-4) = 1.
    TttStateT<double> s{Tensor64({1, 1}), 0};
    auto k = Tensor64::from_data({1}, {1.0});
    auto v = Tensor64::from_data({1}, {2.0});
    auto next = ttt_step(s, k, v, 0.25);
    EXPECT_DOUBLE_EQ(next.w[0], 1.0);
}

TEST(TttStep, RejectsNonFinite) {
    TttStateT<double> s{Tensor64({2, 2}), 0};
    auto k = Tensor64::from_data({2}, {1.0, std::numeric_limits<double>::infinity()});
    auto v = Tensor64::from_data({2}, {0.0, 0.0});
    EXPECT_THROW(ttt_step(s, k, v, 0.1), std::invalid_argument);
}

TEST(TttStep, GradientMatchesFiniteDifferences) {
    // 100 random instances, C <= 16, relative error < 1e-5 in double.
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t C = 2 + static_cast<std::size_t>(trial % 15);
        auto w = random_tensor<double>({C, C}, 1000 + trial);
        auto k = random_tensor<double>({C}, 2000 + trial);
        auto v = random_tensor<double>({C}, 3000 + trial);
        // analytic gradient of ||W k - v||^2: 2 (W k - v) k^T
        Tensor64 grad({C, C});
        for (std::size_t i = 0; i < C; ++i) {
            double e = -v[i];
            for (std::size_t j = 0; j < C; ++j) e += w.at2(i, j) * k[j];
            for (std::size_t j = 0; j < C; ++j) grad.at2(i, j) = 2 * e * k[j];
        }
        // central differences are exact for this quadratic, so a larger step
        // only reduces roundoff
        auto loss = [&]() { return inner_loss(w, k, v); };
        EXPECT_LT(camoseg::testing::fd_max_rel_error(w, grad, loss, 1e-4), 1e-5)
            << "trial " << trial;
    }
}

TEST(TttStep, DescentForAdmissibleEta) {
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t C = 3 + trial % 8;
        TttStateT<double> s{random_tensor<double>({C, C}, 10 + trial), 0};
        auto k = random_tensor<double>({C}, 60 + trial);
        auto v = random_tensor<double>({C}, 90 + trial);
        double k2 = 0;
        for (std::size_t i = 0; i < C; ++i) k2 += k[i] * k[i];
        const double eta = 0.9 / (2.0 * k2);
        auto next = ttt_step(s, k, v, eta);
        EXPECT_LE(inner_loss(next.w, k, v), inner_loss(s.w, k, v) + 1e-12);
    }
}

TEST(TttForward, ZeroEtaEqualsStaticMap) {
    const std::size_t C = 6, T = 9;
    auto seq = random_tensor<double>({T, C}, 5);
    auto proj = random_proj(C, 50);
    auto w0 = random_tensor<double>({C, C}, 60);
    TttConfig cfg{C, 0.0, 3, false};
    auto res = ttt_forward(seq, proj, cfg, w0);
    // expected: w0 * theta_q * x_t for every token
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> q(C, 0.0), z(C, 0.0);
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) q[i] += proj.theta_q.at2(i, j) * seq.at2(t, j);
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) z[i] += w0.at2(i, j) * q[j];
        for (std::size_t i = 0; i < C; ++i) EXPECT_DOUBLE_EQ(res.outputs.at2(t, i), z[i]);
    }
    EXPECT_TRUE(bitwise_equal(res.state.w, w0));
}

TEST(TttForward, SingleTokenComposesStepAndMatmul) {
    const std::size_t C = 5;
    auto seq = random_tensor<double>({1, C}, 7);
    auto proj = random_proj(C, 70);
    auto w0 = random_tensor<double>({C, C}, 80);
    TttConfig cfg{C, 0.15, 1, false};
    auto res = ttt_forward(seq, proj, cfg, w0);

    // independent composition: views, one step, one matvec
    Tensor64 k({C}), v({C}), q({C});
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) {
            k[i] += proj.theta_k.at2(i, j) * seq.at2(0, j);
            v[i] += proj.theta_v.at2(i, j) * seq.at2(0, j);
            q[i] += proj.theta_q.at2(i, j) * seq.at2(0, j);
        }
    }
    auto stepped = ttt_step(TttStateT<double>{w0, 0}, k, v, 0.15);
    for (std::size_t i = 0; i < C; ++i) {
        double z = 0;
        for (std::size_t j = 0; j < C; ++j) z += stepped.w.at2(i, j) * q[j];
        EXPECT_NEAR(res.outputs.at2(0, i), z, 1e-12);
    }
    EXPECT_EQ(res.updates, 1u);
}

TEST(TttForward, MiniBatchOneEqualsSequentialUnroll) {
    const std::size_t C = 4, T = 8;
    auto seq = random_tensor<double>({T, C}, 11);
    auto proj = random_proj(C, 110);
    auto w0 = random_tensor<double>({C, C}, 120);
    TttConfig cfg{C, 0.08, 1, false};
    auto res = ttt_forward(seq, proj, cfg, w0);

    TttStateT<double> state{w0, 0};
    for (std::size_t t = 0; t < T; ++t) {
        Tensor64 k({C}), v({C}), q({C});
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) {
                k[i] += proj.theta_k.at2(i, j) * seq.at2(t, j);
                v[i] += proj.theta_v.at2(i, j) * seq.at2(t, j);
                q[i] += proj.theta_q.at2(i, j) * seq.at2(t, j);
            }
        state = ttt_step(state, k, v, 0.08);
        for (std::size_t i = 0; i < C; ++i) {
            double z = 0;
            for (std::size_t j = 0; j < C; ++j) z += state.w.at2(i, j) * q[j];
            EXPECT_NEAR(res.outputs.at2(t, i), z, 1e-12) << "t=" << t;
        }
    }
    EXPECT_EQ(res.updates, T);
}

TEST(TttForward, MiniBatchChangesOutputsUnlessEtaZero) {
    const std::size_t C = 4, T = 8;
    auto seq = random_tensor<double>({T, C}, 13);
    auto proj = random_proj(C, 130);
    auto w0 = random_tensor<double>({C, C}, 140);
    TttConfig one{C, 0.08, 1, false}, full{C, 0.08, T, false};
    auto a = ttt_forward(seq, proj, one, w0);
    auto b = ttt_forward(seq, proj, full, w0);
    EXPECT_FALSE(bitwise_equal(a.outputs, b.outputs));

    TttConfig one0{C, 0.0, 1, false}, full0{C, 0.0, T, false};
    auto a0 = ttt_forward(seq, proj, one0, w0);
    auto b0 = ttt_forward(seq, proj, full0, w0);
    EXPECT_TRUE(bitwise_equal(a0.outputs, b0.outputs));
}

TEST(TttForward, UpdateCountIsCeilTOverB) {
    const std::size_t C = 3;
    auto proj = random_proj(C, 150);
    auto w0 = random_tensor<double>({C, C}, 160);
    const struct { std::size_t t, b, want; } cases[] = {
        {1, 1, 1}, {8, 1, 8}, {8, 3, 3}, {8, 8, 1}, {9, 4, 3}, {16, 5, 4},
    };
    for (const auto& c : cases) {
        auto seq = random_tensor<double>({c.t, C}, 170 + c.t);
        TttConfig cfg{C, 0.05, c.b, false};
        auto res = ttt_forward(seq, proj, cfg, w0);
        EXPECT_EQ(res.updates, c.want) << "T=" << c.t << " b=" << c.b;
        EXPECT_EQ(res.state.step_count, c.t);
    }
}

TEST(TttForward, CausalityAcrossMiniBatches) {
    const std::size_t C = 4, T = 12;
    auto proj = random_proj(C, 190);
    auto w0 = random_tensor<double>({C, C}, 200);
    for (std::size_t b : {std::size_t(1), std::size_t(3), std::size_t(5), T}) {
        TttConfig cfg{C, 0.07, b, false};
        auto seq = random_tensor<double>({T, C}, 210 + b);
        for (std::size_t t = 0; t < T; t += 3) {
            EXPECT_TRUE(ttt_causality_probe(seq, proj, cfg, w0, t)) << "b=" << b << " t=" << t;
        }
    }
}

TEST(TttCausality, PerturbationsPropagateForwardOnly) {
    const std::size_t C = 4, T = 6;
    auto proj = random_proj(C, 220);
    auto w0 = random_tensor<double>({C, C}, 230);
    auto seq = random_tensor<double>({T, C}, 240);
    TttConfig cfg{C, 0.1, 2, false};

    EXPECT_TRUE(ttt_causality_probe(seq, proj, cfg, w0, T - 1));

    // Perturbing the first token must change some later output when eta > 0.
    auto base = ttt_forward(seq, proj, cfg, w0);
    auto perturbed = seq;
    for (std::size_t i = 0; i < C; ++i) perturbed.at2(0, i) += 1.0;
    auto mod = ttt_forward(perturbed, proj, cfg, w0);
    bool later_changed = false;
    for (std::size_t t = 1; t < T && !later_changed; ++t)
        for (std::size_t i = 0; i < C; ++i)
            if (base.outputs.at2(t, i) != mod.outputs.at2(t, i)) later_changed = true;
    EXPECT_TRUE(later_changed);

    // With eta = 0 only the perturbed token's own output changes.
    TttConfig frozen{C, 0.0, 2, false};
    auto fb = ttt_forward(seq, proj, frozen, w0);
    auto fm = ttt_forward(perturbed, proj, frozen, w0);
    for (std::size_t t = 0; t < T; ++t) {
        bool row_equal = true;
        for (std::size_t i = 0; i < C; ++i)
            if (fb.outputs.at2(t, i) != fm.outputs.at2(t, i)) row_equal = false;
        EXPECT_EQ(row_equal, t != 0);
    }
    EXPECT_THROW(ttt_causality_probe(seq, proj, cfg, w0, T), std::invalid_argument);
}

TEST(TttBackward, MatchesFiniteDifferencesPlain) {
    const std::size_t C = 4, T = 6;
    auto seq = random_tensor<double>({T, C}, 301);
    auto proj = random_proj(C, 310);
    auto w0 = random_tensor<double>({C, C}, 320, -0.3, 0.3);
    auto weights = random_tensor<double>({T, C}, 330);
    TttConfig cfg{C, 0.09, 2, false};

    auto scalar_loss = [&]() {
        auto res = ttt_forward(seq, proj, cfg, w0);
        double s = 0;
        for (std::size_t i = 0; i < res.outputs.numel(); ++i) s += res.outputs[i] * weights[i];
        return s;
    };
    TttTapeT<double> tape;
    ttt_forward(seq, proj, cfg, w0, &tape);
    auto grads = ttt_backward(seq, cfg, tape, weights);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(proj.theta_k, grads.theta_k, scalar_loss, 1e-6),
              1e-5);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(proj.theta_v, grads.theta_v, scalar_loss, 1e-6),
              1e-5);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(proj.theta_q, grads.theta_q, scalar_loss, 1e-6),
              1e-5);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(w0, grads.w0, scalar_loss, 1e-6), 1e-5);
}

TEST(TttBackward, MatchesFiniteDifferencesResidual) {
    const std::size_t C = 5, T = 5;
    auto seq = random_tensor<double>({T, C}, 401);
    auto proj = random_proj(C, 410);
    auto w0 = random_tensor<double>({C, C}, 420, -0.4, 0.4);
    auto weights = random_tensor<double>({T, C}, 430);
    TttConfig cfg{C, 0.06, 2, true};

    auto scalar_loss = [&]() {
        auto res = ttt_forward(seq, proj, cfg, w0);
        double s = 0;
        for (std::size_t i = 0; i < res.outputs.numel(); ++i) s += res.outputs[i] * weights[i];
        return s;
    };
    TttTapeT<double> tape;
    ttt_forward(seq, proj, cfg, w0, &tape);
    auto grads = ttt_backward(seq, cfg, tape, weights);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(proj.theta_k, grads.theta_k, scalar_loss, 1e-6),
              1e-4);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(proj.theta_v, grads.theta_v, scalar_loss, 1e-6),
              1e-4);
    EXPECT_LT(camoseg::testing::fd_max_rel_error(proj.theta_q, grads.theta_q, scalar_loss, 1e-6),
              1e-4);
}

TEST(TttForward, RejectsBadShapes) {
    const std::size_t C = 4;
    auto proj = random_proj(C, 510);
    auto w0 = random_tensor<double>({C, C}, 520);
    TttConfig cfg{C, 0.1, 1, false};
    EXPECT_THROW(ttt_forward(random_tensor<double>({3, C + 1}, 1), proj, cfg, w0),
                 std::invalid_argument);
    ViewProjectionsT<double> bad{random_tensor<double>({C, C + 1}, 2),
                                 random_tensor<double>({C, C}, 3),
                                 random_tensor<double>({C, C}, 4)};
    EXPECT_THROW(ttt_forward(random_tensor<double>({3, C}, 5), bad, cfg, w0),
                 std::invalid_argument);
}
