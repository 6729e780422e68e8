#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "camoseg/prng.hpp"

namespace camoseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major array of floating values. float is the production scalar;
// double is used by the gradient-verification paths. Layout for 4-D feature
// maps is [batch, channels, rows, cols].
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    static TensorT from_data(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != data.size()) {
            throw std::invalid_argument("tensor: data length " +
                                        std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        }
        TensorT t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Indexed access for the common ranks; hot loops index manually.
    T& at2(std::size_t i, std::size_t j) {
        return data_[i * shape_[1] + j];
    }
    const T& at2(std::size_t i, std::size_t j) const {
        return data_[i * shape_[1] + j];
    }
    T& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T& at4(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    const T& at4(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    TensorT& operator+=(const TensorT& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    TensorT& operator-=(const TensorT& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    TensorT& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>::from_data(shape_, std::move(out));
    }

private:
    void require_same_shape(const TensorT& o, const char* op) const {
        if (shape_ != o.shape_) {
            throw std::invalid_argument(std::string("tensor ") + op + ": shape " +
                                        shape_str(shape_) + " vs " + shape_str(o.shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

enum class Init { UniformKaiming, Zeros, Ones };

// Fills a fresh tensor deterministically from (shape, seed). UniformKaiming
// draws from uniform(-k, k) with k = 1/sqrt(fan_in), where fan_in is the
// product of all extents but the first (kernel taps times input channels for
// conv weights, the input width for matrices).
template <typename T>
TensorT<T> prng_fill(const Shape& shape, std::uint64_t seed, Init init) {
    TensorT<T> t(shape);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            for (auto& v : t.values()) v = T(1);
            break;
        case Init::UniformKaiming: {
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
            const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
            Prng rng(seed);
            for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-k, k));
            break;
        }
    }
    return t;
}

}  // namespace camoseg
