#pragma once

#include <Eigen/Dense>
#include <memory>
#include <ostream>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/nn.hpp"
#include "tmgan/tensor.hpp"
#include "tmgan/tfilm.hpp"

namespace tmgan {

using VecMap = Eigen::Map<const Eigen::Matrix<real_t, Eigen::Dynamic, 1>>;

// Learnable codebook with exponential-moving-average k-means statistics.
// Vector batches are passed as [M, d] row-major (one contiguous vector per
// row) so the distance scan uses the same dot-product arithmetic for any M —
// streaming (M = N') and batched (M = B*F*N') quantization stay bit-equal.
class Codebook {
public:
    Codebook() = default;
    Codebook(int64_t size, int64_t dim, uint64_t seed, real_t gamma = 0.99, real_t eps = 1e-5)
        : v_(size), d_(dim), gamma_(gamma), eps_(eps) {
        vectors_ = Tensor({v_, d_});
        ema_counts_ = Tensor({v_});
        ema_sums_ = Tensor({v_, d_});
        flag_ = Tensor({1});
        Rng rng(seed);
        for (int64_t i = 0; i < vectors_.numel(); ++i) vectors_[i] = 0.01 * rng.normal();
        ema_counts_.fill(1.0);
        ema_sums_ = vectors_;
        refresh_sq();
    }

    int64_t size() const { return v_; }
    int64_t dim() const { return d_; }
    bool data_initialized() const { return data_init_; }
    const Tensor& vectors() const { return vectors_; }
    Tensor& vectors_mut() { return vectors_; }
    Tensor& ema_counts() { return ema_counts_; }
    Tensor& ema_sums() { return ema_sums_; }

    // Nearest codeword by squared Euclidean distance, ties to lowest index.
    // ||z - q||^2 ranks identically to ||q||^2 - 2 q.z at fixed z.
    void quantize_rows(const real_t* rows, int64_t m, int32_t* indices) const {
        for (int64_t j = 0; j < m; ++j) {
            VecMap z(rows + j * d_, d_);
            int64_t best = 0;
            real_t best_score = 0.0;
            for (int64_t v = 0; v < v_; ++v) {
                VecMap q(vectors_.data() + v * d_, d_);
                real_t s = sq_[size_t(v)] - 2.0 * q.dot(z);
                if (v == 0 || s < best_score) {
                    best_score = s;
                    best = v;
                }
            }
            indices[j] = int32_t(best);
        }
    }

    // One EMA k-means sweep over the assigned vectors.
    void ema_update(const real_t* rows, int64_t m, const int32_t* indices) {
        std::vector<real_t> counts(size_t(v_), 0.0);
        std::vector<real_t> sums(size_t(v_ * d_), 0.0);
        for (int64_t j = 0; j < m; ++j) {
            int32_t v = indices[j];
            counts[size_t(v)] += 1.0;
            const real_t* z = rows + j * d_;
            real_t* s = sums.data() + int64_t(v) * d_;
            for (int64_t c = 0; c < d_; ++c) s[c] += z[c];
        }
        for (int64_t v = 0; v < v_; ++v) {
            ema_counts_[v] = gamma_ * ema_counts_[v] + (1.0 - gamma_) * counts[size_t(v)];
            for (int64_t c = 0; c < d_; ++c)
                ema_sums_.at2(v, c) =
                    gamma_ * ema_sums_.at2(v, c) + (1.0 - gamma_) * sums[size_t(v * d_ + c)];
        }
        // Laplace-smoothed counts keep unassigned codewords finite.
        real_t total = ema_counts_.sum();
        for (int64_t v = 0; v < v_; ++v) {
            real_t n = (ema_counts_[v] + eps_) / (total + v_ * eps_) * total;
            for (int64_t c = 0; c < d_; ++c) vectors_.at2(v, c) = ema_sums_.at2(v, c) / n;
        }
        refresh_sq();
    }

    // Replace the random init with vectors sampled from the first training
    // batch of gated features.
    void init_from_data(const real_t* rows, int64_t m, uint64_t seed) {
        Rng rng(seed);
        if (m >= v_) {
            std::vector<int64_t> pool(static_cast<size_t>(m));
            for (int64_t i = 0; i < m; ++i) pool[size_t(i)] = i;
            for (int64_t v = 0; v < v_; ++v) {
                int64_t j = rng.uniform_int(v, m - 1);
                std::swap(pool[size_t(v)], pool[size_t(j)]);
                const real_t* z = rows + pool[size_t(v)] * d_;
                for (int64_t c = 0; c < d_; ++c) vectors_.at2(v, c) = z[c];
            }
        } else {
            for (int64_t v = 0; v < v_; ++v) {
                const real_t* z = rows + rng.uniform_int(0, m - 1) * d_;
                for (int64_t c = 0; c < d_; ++c)
                    vectors_.at2(v, c) = z[c] + 1e-4 * rng.normal();
            }
        }
        ema_counts_.fill(1.0);
        ema_sums_ = vectors_;
        data_init_ = true;
        flag_[0] = 1.0;
        refresh_sq();
    }

    void mark_data_initialized(bool flag) {
        data_init_ = flag;
        flag_[0] = flag ? 1.0 : 0.0;
    }

    Tensor& flag_tensor() { return flag_; }

    // Rebuild derived state after checkpoint restore.
    void sync_after_load() {
        data_init_ = flag_[0] != 0.0;
        refresh_sq();
    }

    void refresh_sq() {
        sq_.resize(size_t(v_));
        for (int64_t v = 0; v < v_; ++v) {
            VecMap q(vectors_.data() + v * d_, d_);
            sq_[size_t(v)] = q.dot(q);
        }
    }

private:
    int64_t v_ = 0, d_ = 0;
    real_t gamma_ = 0.99, eps_ = 1e-5;
    Tensor vectors_, ema_counts_, ema_sums_, flag_;
    std::vector<real_t> sq_;
    bool data_init_ = false;
};

// Public single-vector operation; same scan as the batched path.
inline std::pair<Tensor, int64_t> quantize_nearest(const Codebook& cb, const Tensor& z) {
    TMGAN_CHECK(z.numel() == cb.dim(), ShapeError, "quantize_nearest: dimension mismatch");
    for (int64_t i = 0; i < z.numel(); ++i)
        TMGAN_CHECK(std::isfinite(z[i]), ParamError, "quantize_nearest: non-finite input");
    int32_t idx = 0;
    cb.quantize_rows(z.data(), 1, &idx);
    Tensor q({cb.dim()});
    for (int64_t c = 0; c < cb.dim(); ++c) q[c] = cb.vectors().at2(idx, c);
    return {q, idx};
}

// ---------------------------------------------------------------------------
// One gated vector quantizer: sigmoid gate (kernel (1,3), stride (1,1)) in
// front of the codebook lookup.
// ---------------------------------------------------------------------------

class GatedVectorQuantizer : public Module {
public:
    GatedVectorQuantizer() = default;
    GatedVectorQuantizer(int64_t dim, int64_t codebook_size, uint64_t seed, Rng& rng)
        : dim_(dim),
          gate_conv_(Conv2d::along_w(dim, dim, 3, 1, 1, rng)),
          codebook_(codebook_size, dim, seed) {}

    int64_t dim() const { return dim_; }
    Codebook& codebook() { return codebook_; }
    const Codebook& codebook() const { return codebook_; }
    Conv2d& gate_conv() { return gate_conv_; }

    // G = Z * sigmoid(conv(Z)); input frame-major [BF, d, 1, N'].
    Tensor gate_forward(const Tensor& z, Ctx ctx) {
        TMGAN_CHECK(z.dim(1) == dim_, ShapeError, "gate_forward: channel mismatch");
        Tensor a = gate_conv_.forward(z, ctx);
        Tensor y(z.shape());
        Tensor sig(z.shape());
        for (int64_t i = 0; i < z.numel(); ++i) {
            real_t s = 1.0 / (1.0 + std::exp(-a[i]));
            sig[i] = s;
            y[i] = z[i] * s;
        }
        if (ctx.grad) cache_.push_back({z, std::move(sig)});
        return y;
    }

    Tensor gate_backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "gate_backward without cached forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        Tensor ga(k.z.shape());
        Tensor gz(k.z.shape());
        for (int64_t i = 0; i < gy.numel(); ++i) {
            real_t s = k.sig[i];
            gz[i] = gy[i] * s;                       // direct path
            ga[i] = gy[i] * k.z[i] * s * (1.0 - s);  // through sigmoid
        }
        Tensor gz_conv = gate_conv_.backward(ga);
        gz.add(gz_conv);
        return gz;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        gate_conv_.visit(prefix + ".gate", pv, bv);
        bv(prefix + ".codebook.vectors", codebook_.vectors_mut());
        bv(prefix + ".codebook.ema_counts", codebook_.ema_counts());
        bv(prefix + ".codebook.ema_sums", codebook_.ema_sums());
        bv(prefix + ".codebook.data_init", codebook_.flag_tensor());
    }

    void drop_cache() override {
        gate_conv_.drop_cache();
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    struct Cache {
        Tensor z;
        Tensor sig;
    };
    int64_t dim_ = 0;
    Conv2d gate_conv_;
    Codebook codebook_;
    std::vector<Cache> cache_;
};

// Per-stage index grids from one stack forward.
struct StackIndices {
    int64_t rows = 0;  // B*F
    int64_t cols = 0;  // N'
    std::vector<std::vector<int32_t>> stage;

    void dump(std::ostream& os) const {
        for (size_t s = 0; s < stage.size(); ++s) {
            os << "stage " << s << "\n";
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t c = 0; c < cols; ++c) {
                    if (c) os << ' ';
                    os << stage[s][size_t(r * cols + c)];
                }
                os << "\n";
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Residual cascade of gated vector quantizers with straight-through
// gradients and EMA-learned codebooks.
// ---------------------------------------------------------------------------

class ResidualGVQStack : public Module {
public:
    ResidualGVQStack() = default;
    ResidualGVQStack(int64_t stages, int64_t dim, int64_t codebook_size, real_t beta,
                     uint64_t seed, Rng& rng)
        : dim_(dim), beta_(beta), seed_(seed) {
        for (int64_t s = 0; s < stages; ++s)
            stages_.push_back(std::make_unique<GatedVectorQuantizer>(
                dim, codebook_size, mix_seed(seed, uint64_t(s)), rng));
    }

    int64_t num_stages() const { return int64_t(stages_.size()); }
    int64_t dim() const { return dim_; }
    real_t beta() const { return beta_; }
    GatedVectorQuantizer& stage(int64_t s) { return *stages_[size_t(s)]; }

    struct Result {
        Tensor zq;
        real_t aux_loss = 0.0;
        StackIndices indices;
    };

    // z: frame-major [BF, d, 1, N']. Training mode updates EMA statistics
    // from every stage's gated features. `bypass_quantization` replaces the
    // lookup by identity so tests can finite-difference the straight-through
    // gradient contract.
    Result forward(const Tensor& z, Ctx ctx, bool bypass_quantization = false) {
        TMGAN_CHECK(z.rank() == 4 && z.dim(1) == dim_, ShapeError,
                    "ResidualGVQStack: channel mismatch");
        int64_t rows = z.dim(0), n = z.dim(3);
        int64_t m = rows * n;
        Result res;
        res.indices.rows = rows;
        res.indices.cols = n;
        res.zq = Tensor(z.shape());
        Tensor residual = z;
        std::vector<Tensor> diffs;
        std::vector<real_t> cols(size_t(m * dim_));
        for (size_t s = 0; s < stages_.size(); ++s) {
            GatedVectorQuantizer& q = *stages_[s];
            Tensor gated = q.gate_forward(residual, ctx);
            // Row j of cols = the d-vector at (frame r, position jn).
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < dim_; ++c) {
                    const real_t* p = gated.data() + (r * dim_ + c) * n;
                    for (int64_t j = 0; j < n; ++j) cols[size_t((r * n + j) * dim_ + c)] = p[j];
                }
            std::vector<int32_t> idx(size_t(m), 0);
            Tensor quant(z.shape());
            if (bypass_quantization) {
                quant = gated;
            } else {
                if (ctx.training && !q.codebook().data_initialized())
                    q.codebook().init_from_data(cols.data(), m, mix_seed(seed_, 101 + s));
                q.codebook().quantize_rows(cols.data(), m, idx.data());
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < dim_; ++c) {
                        real_t* p = quant.data() + (r * dim_ + c) * n;
                        for (int64_t j = 0; j < n; ++j)
                            p[j] = q.codebook().vectors().at2(idx[size_t(r * n + j)], c);
                    }
                if (ctx.training) q.codebook().ema_update(cols.data(), m, idx.data());
            }
            Tensor diff(z.shape());
            real_t sq = 0.0;
            for (int64_t i = 0; i < z.numel(); ++i) {
                diff[i] = gated[i] - quant[i];
                sq += diff[i] * diff[i];
            }
            res.aux_loss += beta_ * sq / real_t(z.numel());
            res.zq.add(quant);
            res.indices.stage.push_back(std::move(idx));
            residual = diff;
            if (ctx.grad) diffs.push_back(std::move(diff));
        }
        if (ctx.grad) cache_.push_back({std::move(diffs), z.numel()});
        return res;
    }

    // Straight-through backward: the task gradient plus each stage's
    // commitment gradient enters that stage's gate; only stage 1's input
    // gradient reaches the encoder (the residual subtraction cancels the
    // rest exactly when quantization is treated as identity).
    Tensor backward(const Tensor& gzq, real_t aux_scale = 1.0) {
        TMGAN_CHECK(!cache_.empty(), Error, "ResidualGVQStack: backward without forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        Tensor gz;
        for (int64_t s = int64_t(stages_.size()) - 1; s >= 0; --s) {
            Tensor g(gzq.shape());
            real_t commit = aux_scale * beta_ * 2.0 / real_t(k.numel);
            const Tensor& diff = k.diffs[size_t(s)];
            for (int64_t i = 0; i < gzq.numel(); ++i) g[i] = gzq[i] + commit * diff[i];
            Tensor gin = stages_[size_t(s)]->gate_backward(g);
            if (s == 0) gz = std::move(gin);
        }
        return gz;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        for (size_t s = 0; s < stages_.size(); ++s)
            stages_[s]->visit(prefix + ".q" + std::to_string(s), pv, bv);
    }

    void drop_cache() override {
        for (auto& s : stages_) s->drop_cache();
        if (!cache_.empty()) cache_.pop_back();
    }

    void sync_after_load() {
        for (auto& s : stages_) s->codebook().sync_after_load();
    }

private:
    struct Cache {
        std::vector<Tensor> diffs;
        int64_t numel = 0;
    };
    int64_t dim_ = 0;
    real_t beta_ = 0.25;
    uint64_t seed_ = 0;
    std::vector<std::unique_ptr<GatedVectorQuantizer>> stages_;
    std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Rank-3 [d, F, N'] wrappers for the single-utterance operations.
// ---------------------------------------------------------------------------

inline Tensor gate_forward(GatedVectorQuantizer& q, const Tensor& z_dfn) {
    Tensor x = to_frame_major(z_dfn);
    Tensor y = q.gate_forward(x, kInfer);
    return from_frame_major(y, z_dfn.dim(1));
}

struct StackForwardResult {
    Tensor zq;  // [d, F, N']
    real_t aux_loss = 0.0;
    StackIndices indices;
};

inline StackForwardResult stack_forward(ResidualGVQStack& stack, const Tensor& z_dfn,
                                        bool training) {
    Tensor x = to_frame_major(z_dfn);
    Ctx ctx{false, training};
    ResidualGVQStack::Result r = stack.forward(x, ctx);
    StackForwardResult out;
    out.zq = from_frame_major(r.zq, z_dfn.dim(1));
    out.aux_loss = r.aux_loss;
    out.indices = std::move(r.indices);
    return out;
}

}  // namespace tmgan
