#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "tmgan/common.hpp"

namespace tmgan {

// Dense row-major tensor of real_t. Rank is dynamic but small (<= 4 in
// practice). No view aliasing: reshape mutates metadata, copies never share
// storage.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel()), 0.0);
    }

    Tensor(std::initializer_list<int64_t> shape)
        : Tensor(std::vector<int64_t>(shape)) {}

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape_) n *= d;
        return shape_.empty() ? 0 : n;
    }

    real_t* data() { return data_.data(); }
    const real_t* data() const { return data_.data(); }

    real_t& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    real_t operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    real_t& at2(int64_t i, int64_t j) { return data_[size_t(i * shape_[1] + j)]; }
    real_t at2(int64_t i, int64_t j) const { return data_[size_t(i * shape_[1] + j)]; }

    real_t& at3(int64_t i, int64_t j, int64_t k) {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }
    real_t at3(int64_t i, int64_t j, int64_t k) const {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }

    real_t& at4(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[size_t(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    real_t at4(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[size_t(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    void zero() { std::fill(data_.begin(), data_.end(), 0.0); }
    void fill(real_t v) { std::fill(data_.begin(), data_.end(), v); }

    void reshape(std::vector<int64_t> shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        TMGAN_CHECK(n == numel(), ShapeError, "reshape: element count mismatch");
        shape_ = std::move(shape);
    }

    Tensor reshaped(std::vector<int64_t> shape) const {
        Tensor t = *this;
        t.reshape(std::move(shape));
        return t;
    }

    void add(const Tensor& o) {
        TMGAN_CHECK(o.numel() == numel(), ShapeError, "add: size mismatch");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    void scale(real_t s) {
        for (real_t& v : data_) v *= s;
    }

    bool all_finite() const {
        for (real_t v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    real_t sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    real_t sumsq() const {
        real_t s = 0.0;
        for (real_t v : data_) s += v * v;
        return s;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::vector<int64_t> shape_;
    std::vector<real_t> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

inline real_t max_abs_diff(const Tensor& a, const Tensor& b) {
    TMGAN_CHECK(a.numel() == b.numel(), ShapeError, "max_abs_diff: size mismatch");
    real_t m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace tmgan
