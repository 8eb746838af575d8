#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/tensor.hpp"

namespace testutil {

using tmgan::real_t;
using tmgan::Rng;
using tmgan::Tensor;

inline void fill_random(Tensor& t, Rng& rng, real_t scale = 1.0) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
}

inline Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, real_t scale = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    fill_random(t, rng, scale);
    return t;
}

// Central finite differences of a recomputed scalar loss w.r.t. the entries
// of `x`.
inline std::vector<real_t> numeric_grad(const std::function<real_t()>& loss, Tensor& x,
                                        real_t h = 1e-5) {
    std::vector<real_t> g(size_t(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i) {
        real_t keep = x[i];
        x[i] = keep + h;
        real_t lp = loss();
        x[i] = keep - h;
        real_t lm = loss();
        x[i] = keep;
        g[size_t(i)] = (lp - lm) / (2.0 * h);
    }
    return g;
}

// || ga - gn || / max(|| gn ||, tiny)
inline real_t grad_rel_err(const std::vector<real_t>& analytic,
                           const std::vector<real_t>& numeric) {
    real_t diff = 0.0, ref = 0.0;
    for (size_t i = 0; i < numeric.size(); ++i) {
        real_t d = analytic[i] - numeric[i];
        diff += d * d;
        ref += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), real_t(1e-12));
}

inline std::vector<real_t> to_vec(const Tensor& t) {
    return std::vector<real_t>(t.data(), t.data() + t.numel());
}

// Weighted scalar readout of a tensor: exposes every output component to the
// finite-difference checks.
inline real_t weighted_sum(const Tensor& y, const Tensor& w) {
    real_t s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * w[i];
    return s;
}

// Fresh unique temp directory.
inline std::string temp_dir(const std::string& tag) {
    static int counter = 0;
    std::string path = (std::filesystem::temp_directory_path() /
                        ("tmgan_" + tag + "_" + std::to_string(::getpid()) + "_" +
                         std::to_string(counter++)))
                           .string();
    std::filesystem::create_directories(path);
    return path;
}

inline std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace testutil
