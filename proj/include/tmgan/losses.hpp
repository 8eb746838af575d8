#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/stft.hpp"
#include "tmgan/tensor.hpp"

namespace tmgan {

// Named scalar losses for one training step.
struct LossReport {
    real_t adv_d = 0.0;
    real_t adv_g = 0.0;
    real_t mse = 0.0;
    real_t spec = 0.0;
    real_t vq_commit = 0.0;
    real_t total_g = 0.0;

    bool all_finite() const {
        return std::isfinite(adv_d) && std::isfinite(adv_g) && std::isfinite(mse) &&
               std::isfinite(spec) && std::isfinite(vq_commit) && std::isfinite(total_g);
    }

    static std::string csv_header() { return "step,adv_d,adv_g,mse,spec,vq_commit,total_g"; }

    std::string csv_row(int64_t step) const {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%lld,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g",
                      static_cast<long long>(step), adv_d, adv_g, mse, spec, vq_commit,
                      total_g);
        return buf;
    }
};

struct LossWeights {
    real_t mse = 1.0;
    real_t spec = 0.5;
};

inline real_t total_generator_loss(real_t adv_g, real_t mse, real_t spec, real_t vq_commit,
                                   const LossWeights& w = {}) {
    return adv_g + w.mse * mse + w.spec * spec + vq_commit;
}

inline LossReport make_report(real_t adv_d, real_t adv_g, real_t mse, real_t spec,
                              real_t vq_commit, const LossWeights& w = {}) {
    LossReport r;
    r.adv_d = adv_d;
    r.adv_g = adv_g;
    r.mse = mse;
    r.spec = spec;
    r.vq_commit = vq_commit;
    r.total_g = total_generator_loss(adv_g, mse, spec, vq_commit, w);
    return r;
}

// ---------------------------------------------------------------------------
// Relativistic average aggregation. Score maps are reduced to one scalar per
// sample by the arithmetic mean, then averaged over the K+1 discriminators.
// ---------------------------------------------------------------------------

// maps: per-discriminator score maps [B, 1, H_k, W_k]. Output: [B] per-sample
// mean over discriminators.
inline std::vector<real_t> mean_scores(const std::vector<Tensor>& maps, int64_t batch) {
    TMGAN_CHECK(!maps.empty(), ParamError, "mean_scores: no score maps");
    std::vector<real_t> s(size_t(batch), 0.0);
    for (const Tensor& m : maps) {
        TMGAN_CHECK(m.dim(0) == batch, ShapeError, "mean_scores: batch mismatch");
        int64_t per = m.numel() / batch;
        for (int64_t b = 0; b < batch; ++b) {
            real_t acc = 0.0;
            const real_t* p = m.data() + b * per;
            for (int64_t i = 0; i < per; ++i) acc += p[i];
            s[size_t(b)] += acc / real_t(per);
        }
    }
    for (real_t& v : s) v /= real_t(maps.size());
    return s;
}

struct RelativisticMeans {
    std::vector<real_t> d_real;  // per real sample: mean_k D(x) - E[mean_k D(x_hat)]
    std::vector<real_t> d_fake;  // per fake sample: mean_k D(x_hat) - E[mean_k D(x)]
};

inline RelativisticMeans relativistic_means(const std::vector<real_t>& s_real,
                                            const std::vector<real_t>& s_fake) {
    TMGAN_CHECK(s_real.size() == s_fake.size() && !s_real.empty(), ShapeError,
                "relativistic_means: batch mismatch");
    real_t mr = 0.0, mf = 0.0;
    for (real_t v : s_real) mr += v;
    for (real_t v : s_fake) mf += v;
    mr /= real_t(s_real.size());
    mf /= real_t(s_fake.size());
    RelativisticMeans out;
    out.d_real.reserve(s_real.size());
    out.d_fake.reserve(s_fake.size());
    for (real_t v : s_real) out.d_real.push_back(v - mf);
    for (real_t v : s_fake) out.d_fake.push_back(v - mr);
    return out;
}

// List-of-score-maps front end (k = 0 spectral, k = 1..K waveform).
inline RelativisticMeans relativistic_means(const std::vector<Tensor>& real_maps,
                                            const std::vector<Tensor>& fake_maps,
                                            int64_t batch) {
    TMGAN_CHECK(real_maps.size() == fake_maps.size(), ShapeError,
                "relativistic_means: discriminator count mismatch");
    return relativistic_means(mean_scores(real_maps, batch), mean_scores(fake_maps, batch));
}

inline real_t disc_loss(const RelativisticMeans& rm) {
    real_t l = 0.0;
    for (real_t u : rm.d_real) l += (u - 1.0) * (u - 1.0);
    for (real_t v : rm.d_fake) l += (v + 1.0) * (v + 1.0);
    return l / real_t(rm.d_real.size());
}

inline real_t gen_adv_loss(const RelativisticMeans& rm) {
    real_t l = 0.0;
    for (real_t v : rm.d_fake) l += (v - 1.0) * (v - 1.0);
    for (real_t u : rm.d_real) l += (u + 1.0) * (u + 1.0);
    return l / real_t(rm.d_real.size());
}

// Gradients of the two losses w.r.t. the per-sample mean scores.
struct ScoreGrads {
    std::vector<real_t> real;
    std::vector<real_t> fake;
};

inline ScoreGrads disc_loss_grads(const RelativisticMeans& rm) {
    int64_t b = int64_t(rm.d_real.size());
    real_t mu = 0.0, mv = 0.0;
    for (real_t u : rm.d_real) mu += (u - 1.0);
    for (real_t v : rm.d_fake) mv += (v + 1.0);
    mu /= real_t(b);
    mv /= real_t(b);
    ScoreGrads g;
    g.real.resize(size_t(b));
    g.fake.resize(size_t(b));
    for (int64_t i = 0; i < b; ++i) {
        g.real[size_t(i)] = 2.0 / b * ((rm.d_real[size_t(i)] - 1.0) - mv);
        g.fake[size_t(i)] = 2.0 / b * ((rm.d_fake[size_t(i)] + 1.0) - mu);
    }
    return g;
}

inline ScoreGrads gen_adv_loss_grads(const RelativisticMeans& rm) {
    int64_t b = int64_t(rm.d_real.size());
    real_t mu = 0.0, mv = 0.0;
    for (real_t u : rm.d_real) mu += (u + 1.0);
    for (real_t v : rm.d_fake) mv += (v - 1.0);
    mu /= real_t(b);
    mv /= real_t(b);
    ScoreGrads g;
    g.real.resize(size_t(b));
    g.fake.resize(size_t(b));
    for (int64_t i = 0; i < b; ++i) {
        g.real[size_t(i)] = 2.0 / b * ((rm.d_real[size_t(i)] + 1.0) - mv);
        g.fake[size_t(i)] = 2.0 / b * ((rm.d_fake[size_t(i)] - 1.0) - mu);
    }
    return g;
}

// Spread a per-sample mean-score gradient back over the score maps (uniform
// over each map, 1/(K+1) over the discriminators).
inline std::vector<Tensor> scatter_score_grads(const std::vector<Tensor>& maps,
                                               const std::vector<real_t>& gs, int64_t batch) {
    std::vector<Tensor> out;
    for (const Tensor& m : maps) {
        Tensor g(m.shape());
        int64_t per = m.numel() / batch;
        for (int64_t b = 0; b < batch; ++b) {
            real_t v = gs[size_t(b)] / (real_t(per) * real_t(maps.size()));
            real_t* p = g.data() + b * per;
            for (int64_t i = 0; i < per; ++i) p[i] = v;
        }
        out.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Waveform losses.
// ---------------------------------------------------------------------------

// Mean squared sample difference. Accumulates 2*(xh - x)/n into gxh when
// given.
inline real_t mse_loss(const real_t* x, const real_t* xh, int64_t n, real_t* gxh = nullptr,
                       real_t grad_scale = 1.0) {
    TMGAN_CHECK(n > 0, LengthError, "mse_loss: empty input");
    real_t acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        real_t d = xh[i] - x[i];
        acc += d * d;
        if (gxh) gxh[i] += grad_scale * 2.0 * d / real_t(n);
    }
    return acc / real_t(n);
}

inline real_t mse_loss(const std::vector<real_t>& x, const std::vector<real_t>& xh) {
    TMGAN_CHECK(x.size() == xh.size(), LengthError, "mse_loss: length mismatch");
    return mse_loss(x.data(), xh.data(), int64_t(x.size()));
}

// Multi-resolution spectral loss: per resolution a Frobenius convergence
// term plus an L1 log-magnitude term normalized by the bin count.
struct SpectralLossConfig {
    struct Resolution {
        int64_t fft_size;
        int64_t win_length;
        int64_t hop;
    };
    std::vector<Resolution> resolutions = {{512, 240, 50}, {1024, 600, 120}, {2048, 1200, 240}};
    real_t eps = 1e-7;
};

class SpectralLoss {
public:
    explicit SpectralLoss(const SpectralLossConfig& cfg = {}) : cfg_(cfg) {
        TMGAN_CHECK(!cfg.resolutions.empty(), ParamError,
                    "SpectralLoss: need at least one resolution");
        for (const auto& r : cfg.resolutions) plans_.emplace_back(r.fft_size, r.win_length, r.hop);
    }

    const SpectralLossConfig& config() const { return cfg_; }

    int64_t min_length() const {
        int64_t m = 0;
        for (const auto& p : plans_) m = std::max(m, p.win_length());
        return m;
    }

    // Loss for one pair; optionally accumulates grad_scale * dL/dxh into gxh.
    real_t operator()(const real_t* x, const real_t* xh, int64_t len, real_t* gxh = nullptr,
                      real_t grad_scale = 1.0) const {
        TMGAN_CHECK(len >= min_length(), LengthError,
                    "spectral_loss: signal shorter than largest window");
        real_t eps = cfg_.eps;
        real_t total = 0.0;
        for (const Stft& plan : plans_) {
            Tensor re_x, im_x, re_h, im_h;
            plan.forward(x, len, re_x, im_x);
            plan.forward(xh, len, re_h, im_h);
            int64_t n = re_x.numel();
            std::vector<real_t> mag_x(static_cast<size_t>(n)), mag_h(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) {
                mag_x[size_t(i)] = std::hypot(re_x[i], im_x[i]);
                mag_h[size_t(i)] = std::hypot(re_h[i], im_h[i]);
            }
            real_t diff_sq = 0.0, ref_sq = 0.0, l1 = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                real_t d = mag_x[size_t(i)] - mag_h[size_t(i)];
                diff_sq += d * d;
                ref_sq += mag_x[size_t(i)] * mag_x[size_t(i)];
                l1 += std::fabs(std::log(mag_x[size_t(i)] + eps) -
                                std::log(mag_h[size_t(i)] + eps));
            }
            real_t diff_norm = std::sqrt(diff_sq);
            real_t ref_norm = std::max(std::sqrt(ref_sq), eps);
            total += diff_norm / ref_norm + l1 / real_t(n);

            if (gxh) {
                Tensor gre(re_h.shape()), gim(im_h.shape());
                for (int64_t i = 0; i < n; ++i) {
                    real_t mh = mag_h[size_t(i)], mx = mag_x[size_t(i)];
                    real_t gmag = 0.0;
                    if (diff_norm > 1e-30) gmag += (mh - mx) / (diff_norm * ref_norm);
                    real_t logd = std::log(mx + eps) - std::log(mh + eps);
                    real_t sgn = (logd > 0) ? 1.0 : (logd < 0 ? -1.0 : 0.0);
                    gmag += sgn / (real_t(n) * (mh + eps));
                    real_t denom = std::max(mh, real_t(1e-30));
                    gre[i] = grad_scale * gmag * re_h[i] / denom;
                    gim[i] = grad_scale * gmag * im_h[i] / denom;
                }
                plan.backward(gre, gim, gxh, len);
            }
        }
        return total;
    }

private:
    SpectralLossConfig cfg_;
    std::vector<Stft> plans_;
};

inline real_t spectral_loss(const std::vector<real_t>& x, const std::vector<real_t>& xh,
                            const SpectralLossConfig& cfg = {}) {
    TMGAN_CHECK(x.size() == xh.size(), LengthError, "spectral_loss: length mismatch");
    SpectralLoss loss(cfg);
    return loss(x.data(), xh.data(), int64_t(x.size()));
}

}  // namespace tmgan
