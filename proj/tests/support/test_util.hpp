#pragma once

// Shared helpers for the test suites: seeded random fills and central
// finite-difference gradient checks.

#include <cmath>
#include <cstring>
#include <functional>

#include "camoseg/prng.hpp"
#include "camoseg/tensor.hpp"

namespace camoseg::testing {

template <typename T>
TensorT<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                         double hi = 1.0) {
    TensorT<T> t(shape);
    Prng rng(seed);
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

inline Tensor64 random_binary(const Shape& shape, std::uint64_t seed, double fg_prob = 0.5) {
    Tensor64 t(shape);
    Prng rng(seed);
    for (auto& v : t.values()) v = rng.next_double() < fg_prob ? 1.0 : 0.0;
    return t;
}

template <typename T>
bool bitwise_equal(const TensorT<T>& a, const TensorT<T>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), a.numel() * sizeof(T)) == 0;
}

// Central finite differences of a scalar function with respect to every
// element of `param`; returns max relative error against `analytic`.
// Relative error uses max(|fd|, |analytic|, floor) as the denominator.
inline double fd_max_rel_error(Tensor64& param, const Tensor64& analytic,
                               const std::function<double()>& f, double h = 1e-5,
                               double floor = 1e-7) {
    double worst = 0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double orig = param[i];
        param[i] = orig + h;
        const double fp = f();
        param[i] = orig - h;
        const double fm = f();
        param[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), floor});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

// Norm-relative comparison of a whole gradient tensor against finite
// differences; robust for parameters whose individual entries are tiny.
inline double fd_norm_rel_error(Tensor64& param, const Tensor64& analytic,
                                const std::function<double()>& f, double h = 1e-5) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double orig = param[i];
        param[i] = orig + h;
        const double fp = f();
        param[i] = orig - h;
        const double fm = f();
        param[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        num += (fd - analytic[i]) * (fd - analytic[i]);
        den += fd * fd;
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace camoseg::testing
