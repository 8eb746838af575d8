#pragma once

#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/nn.hpp"

namespace tmgan {

// Clip the global gradient norm of a parameter group. Returns the pre-clip
// norm.
inline real_t clip_grad_norm(const std::vector<Param*>& params, real_t max_norm) {
    real_t sq = 0.0;
    for (Param* p : params) sq += p->g.sumsq();
    real_t norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        real_t scale = max_norm / norm;
        for (Param* p : params) p->g.scale(scale);
    }
    return norm;
}

// Rectified Adam. Applies the variance rectification of the reference
// formulation; while the rectification term is intractable (rho_t <= 5) the
// update falls back to the unadapted first moment.
class RAdam {
public:
    RAdam() = default;
    RAdam(std::vector<Param*> params, real_t lr, real_t beta1 = 0.9, real_t beta2 = 0.999,
          real_t eps = 1e-8)
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        for (Param* p : params_) {
            m_.emplace_back(p->v.shape());
            v_.emplace_back(p->v.shape());
        }
    }

    int64_t step_count() const { return t_; }
    real_t lr() const { return lr_; }

    void step() {
        ++t_;
        real_t bias1 = 1.0 - std::pow(b1_, real_t(t_));
        real_t bias2 = 1.0 - std::pow(b2_, real_t(t_));
        real_t rho_inf = 2.0 / (1.0 - b2_) - 1.0;
        real_t rho_t = rho_inf - 2.0 * real_t(t_) * std::pow(b2_, real_t(t_)) / bias2;
        bool rectified = rho_t > 5.0;
        real_t r_t = 1.0;
        if (rectified)
            r_t = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                            ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            Param& p = *params_[i];
            for (int64_t j = 0; j < p.v.numel(); ++j) {
                real_t g = p.g[j];
                m[j] = b1_ * m[j] + (1.0 - b1_) * g;
                v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
                real_t mhat = m[j] / bias1;
                if (rectified) {
                    real_t vhat = std::sqrt(v[j] / bias2);
                    p.v[j] -= lr_ * r_t * mhat / (vhat + eps_);
                } else {
                    p.v[j] -= lr_ * mhat;
                }
            }
        }
    }

    // Serialized as [t, m..., v...] per parameter order.
    void save_state(std::vector<real_t>& out) const {
        out.push_back(real_t(t_));
        for (const Tensor& m : m_)
            for (int64_t j = 0; j < m.numel(); ++j) out.push_back(m[j]);
        for (const Tensor& v : v_)
            for (int64_t j = 0; j < v.numel(); ++j) out.push_back(v[j]);
    }

    void load_state(const std::vector<real_t>& in, size_t& pos) {
        TMGAN_CHECK(pos < in.size(), CheckpointError, "RAdam: truncated state");
        t_ = int64_t(in[pos++]);
        for (Tensor& m : m_)
            for (int64_t j = 0; j < m.numel(); ++j) {
                TMGAN_CHECK(pos < in.size(), CheckpointError, "RAdam: truncated state");
                m[j] = in[pos++];
            }
        for (Tensor& v : v_)
            for (int64_t j = 0; j < v.numel(); ++j) {
                TMGAN_CHECK(pos < in.size(), CheckpointError, "RAdam: truncated state");
                v[j] = in[pos++];
            }
    }

private:
    std::vector<Param*> params_;
    std::vector<Tensor> m_, v_;
    real_t lr_ = 1e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

}  // namespace tmgan
