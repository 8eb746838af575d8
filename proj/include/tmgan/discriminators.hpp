#pragma once

#include <memory>
#include <numeric>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/nn.hpp"
#include "tmgan/stft.hpp"
#include "tmgan/tensor.hpp"

namespace tmgan {

struct DiscriminatorConfig {
    real_t width_mult = 1.0;
    // Waveform discriminator ladder.
    std::vector<int64_t> wave_kernels = {15, 41, 41, 41, 41};
    std::vector<int64_t> wave_strides = {1, 4, 4, 4, 4};
    std::vector<int64_t> wave_groups = {1, 4, 16, 64, 256};
    std::vector<int64_t> wave_channels = {16, 64, 256, 512, 512};
    // Complex-spectrum discriminator.
    int64_t fft_size = 320;
    int64_t hop = 160;
    std::vector<int64_t> spec_channels = {8, 16, 32, 64};

    std::vector<int64_t> scaled(const std::vector<int64_t>& base) const {
        std::vector<int64_t> out;
        for (int64_t c : base)
            out.push_back(std::max<int64_t>(2, int64_t(std::llround(c * width_mult))));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Single-scale waveform discriminator: initial conv + four grouped convs,
// batch norm and PReLU after each, then a 1x1 aggregation conv.
// ---------------------------------------------------------------------------

class WaveformDiscriminator : public Module {
public:
    WaveformDiscriminator() = default;
    WaveformDiscriminator(const DiscriminatorConfig& cfg, Rng& rng) {
        std::vector<int64_t> ch = cfg.scaled(cfg.wave_channels);
        int64_t in = 1, jump = 1;
        rf_ = 1;
        for (size_t i = 0; i < ch.size(); ++i) {
            int64_t g = std::gcd(cfg.wave_groups[i], std::gcd(in, ch[i]));
            convs_.push_back(
                Conv2d::along_w(in, ch[i], cfg.wave_kernels[i], cfg.wave_strides[i], g, rng));
            norms_.emplace_back(ch[i]);
            acts_.emplace_back(ch[i]);
            rf_ += (cfg.wave_kernels[i] - 1) * jump;
            jump *= cfg.wave_strides[i];
            in = ch[i];
        }
        out_ = Conv2d::along_w(in, 1, 1, 1, 1, rng);
    }

    int64_t receptive_field() const { return rf_; }

    // x: [B, 1, 1, L] -> score map [B, 1, 1, L'].
    Tensor forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.dim(3) >= rf_, LengthError,
                    "WaveformDiscriminator: input shorter than receptive field");
        Tensor h = x;
        for (size_t i = 0; i < convs_.size(); ++i) {
            h = convs_[i].forward(h, ctx);
            h = norms_[i].forward(h, ctx);
            h = acts_[i].forward(h, ctx);
        }
        return out_.forward(h, ctx);
    }

    Tensor backward(const Tensor& gy) {
        Tensor g = out_.backward(gy);
        for (size_t i = convs_.size(); i-- > 0;) {
            g = acts_[i].backward(g);
            g = norms_[i].backward(g);
            g = convs_[i].backward(g);
        }
        return g;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        for (size_t i = 0; i < convs_.size(); ++i) {
            std::string l = prefix + ".l" + std::to_string(i);
            convs_[i].visit(l + ".conv", pv, bv);
            norms_[i].visit(l + ".bn", pv, bv);
            acts_[i].visit(l + ".prelu", pv, bv);
        }
        out_.visit(prefix + ".out", pv, bv);
    }

    void drop_cache() override {
        for (auto& c : convs_) c.drop_cache();
        for (auto& n : norms_) n.drop_cache();
        for (auto& a : acts_) a.drop_cache();
        out_.drop_cache();
    }

private:
    std::vector<Conv2d> convs_;
    std::vector<BatchNorm> norms_;
    std::vector<PRelu> acts_;
    Conv2d out_;
    int64_t rf_ = 1;
};

// ---------------------------------------------------------------------------
// Three structurally identical discriminators at x1, x2, x4 average-pooled
// resolutions.
// ---------------------------------------------------------------------------

class MultiResolutionBank : public Module {
public:
    MultiResolutionBank() = default;
    MultiResolutionBank(const DiscriminatorConfig& cfg, Rng& rng)
        : pool1_(4, 2, 1), pool2_(4, 2, 1) {
        for (int i = 0; i < 3; ++i) discs_.push_back(std::make_unique<WaveformDiscriminator>(cfg, rng));
    }

    int64_t min_input_length() const {
        // coarsest scale sees roughly L/4 samples
        return discs_[0]->receptive_field() * 4;
    }

    std::vector<Tensor> forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.dim(3) >= min_input_length(), LengthError,
                    "MultiResolutionBank: input shorter than coarsest receptive field");
        Tensor x2 = pool1_.forward(x, ctx);
        Tensor x4 = pool2_.forward(x2, ctx);
        std::vector<Tensor> out;
        out.push_back(discs_[0]->forward(x, ctx));
        out.push_back(discs_[1]->forward(x2, ctx));
        out.push_back(discs_[2]->forward(x4, ctx));
        return out;
    }

    Tensor backward(const std::vector<Tensor>& gscores) {
        TMGAN_CHECK(gscores.size() == 3, ShapeError, "MultiResolutionBank: want 3 gradients");
        Tensor g4 = discs_[2]->backward(gscores[2]);
        Tensor g2 = discs_[1]->backward(gscores[1]);
        Tensor g1 = discs_[0]->backward(gscores[0]);
        g2.add(pool2_.backward(g4));
        g1.add(pool1_.backward(g2));
        return g1;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        for (size_t i = 0; i < discs_.size(); ++i)
            discs_[i]->visit(prefix + ".scale" + std::to_string(i), pv, bv);
    }

    void drop_cache() override {
        for (auto& d : discs_) d->drop_cache();
        pool1_.drop_cache();
        pool2_.drop_cache();
    }

private:
    std::vector<std::unique_ptr<WaveformDiscriminator>> discs_;
    AvgPoolW pool1_, pool2_;
};

// ---------------------------------------------------------------------------
// Complex-valued building blocks.
// ---------------------------------------------------------------------------

// (Wr + iWi) * (Xr + iXi): four real convolutions with shared weights plus a
// complex bias.
class ComplexConv2d : public Module {
public:
    ComplexConv2d() = default;
    ComplexConv2d(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t pad,
                  Rng& rng)
        : conv_r_(in_ch, out_ch, k, k, stride, stride, pad, pad, 1, false, rng),
          conv_i_(in_ch, out_ch, k, k, stride, stride, pad, pad, 1, false, rng) {
        br_.init({out_ch});
        bi_.init({out_ch});
    }

    std::pair<Tensor, Tensor> forward(const Tensor& xr, const Tensor& xi, Ctx ctx) {
        Tensor a = conv_r_.forward(xr, ctx);   // conv_r stack: [xr]
        Tensor b = conv_i_.forward(xi, ctx);   // conv_i stack: [xi]
        Tensor c = conv_r_.forward(xi, ctx);   // conv_r stack: [xr, xi]
        Tensor d = conv_i_.forward(xr, ctx);   // conv_i stack: [xi, xr]
        Tensor yr(a.shape()), yi(a.shape());
        int64_t B = a.dim(0), C = a.dim(1), HW = a.dim(2) * a.dim(3);
        for (int64_t bidx = 0; bidx < B; ++bidx)
            for (int64_t ch = 0; ch < C; ++ch) {
                int64_t off = (bidx * C + ch) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    yr[off + i] = a[off + i] - b[off + i] + br_.v[ch];
                    yi[off + i] = c[off + i] + d[off + i] + bi_.v[ch];
                }
            }
        return {std::move(yr), std::move(yi)};
    }

    std::pair<Tensor, Tensor> backward(const Tensor& gyr, const Tensor& gyi) {
        int64_t B = gyr.dim(0), C = gyr.dim(1), HW = gyr.dim(2) * gyr.dim(3);
        for (int64_t bidx = 0; bidx < B; ++bidx)
            for (int64_t ch = 0; ch < C; ++ch) {
                int64_t off = (bidx * C + ch) * HW;
                real_t sr = 0.0, si = 0.0;
                for (int64_t i = 0; i < HW; ++i) {
                    sr += gyr[off + i];
                    si += gyi[off + i];
                }
                br_.g[ch] += sr;
                bi_.g[ch] += si;
            }
        Tensor neg_gyr(gyr.shape());
        for (int64_t i = 0; i < gyr.numel(); ++i) neg_gyr[i] = -gyr[i];
        // LIFO pops: conv_i releases xr then xi; conv_r releases xi then xr.
        Tensor gxr_d = conv_i_.backward(gyi);      // d = conv_i(xr)
        Tensor gxi_b = conv_i_.backward(neg_gyr);  // b enters yr negated
        Tensor gxi_c = conv_r_.backward(gyi);      // c = conv_r(xi)
        Tensor gxr_a = conv_r_.backward(gyr);      // a = conv_r(xr)
        gxr_a.add(gxr_d);
        gxi_b.add(gxi_c);
        return {std::move(gxr_a), std::move(gxi_b)};
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        conv_r_.visit(prefix + ".re", pv, bv);
        conv_i_.visit(prefix + ".im", pv, bv);
        pv(prefix + ".br", br_);
        pv(prefix + ".bi", bi_);
    }

    void drop_cache() override {
        conv_r_.drop_cache();
        conv_r_.drop_cache();
        conv_i_.drop_cache();
        conv_i_.drop_cache();
    }

private:
    Conv2d conv_r_, conv_i_;
    Param br_, bi_;
};

// Instance normalization over the joint real/imag statistics per (batch,
// channel): the concatenated planes come out zero-mean unit-variance.
class ComplexInstanceNorm : public Module {
public:
    explicit ComplexInstanceNorm(real_t eps = 1e-5) : eps_(eps) {}

    std::pair<Tensor, Tensor> forward(const Tensor& xr, const Tensor& xi, Ctx ctx) {
        int64_t B = xr.dim(0), C = xr.dim(1), HW = xr.dim(2) * xr.dim(3);
        Tensor yr(xr.shape()), yi(xi.shape());
        Cache k;
        k.xhat_r = Tensor(xr.shape());
        k.xhat_i = Tensor(xi.shape());
        k.invstd = Tensor({B, C});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                int64_t off = (b * C + c) * HW;
                real_t sum = 0.0;
                for (int64_t i = 0; i < HW; ++i) sum += xr[off + i] + xi[off + i];
                real_t mean = sum / real_t(2 * HW);
                real_t var = 0.0;
                for (int64_t i = 0; i < HW; ++i) {
                    real_t dr = xr[off + i] - mean, di = xi[off + i] - mean;
                    var += dr * dr + di * di;
                }
                var /= real_t(2 * HW);
                real_t inv = 1.0 / std::sqrt(var + eps_);
                k.invstd.at2(b, c) = inv;
                for (int64_t i = 0; i < HW; ++i) {
                    k.xhat_r[off + i] = (xr[off + i] - mean) * inv;
                    k.xhat_i[off + i] = (xi[off + i] - mean) * inv;
                    yr[off + i] = k.xhat_r[off + i];
                    yi[off + i] = k.xhat_i[off + i];
                }
            }
        if (ctx.grad) cache_.push_back(std::move(k));
        return {std::move(yr), std::move(yi)};
    }

    std::pair<Tensor, Tensor> backward(const Tensor& gyr, const Tensor& gyi) {
        TMGAN_CHECK(!cache_.empty(), Error, "ComplexInstanceNorm: backward without forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        int64_t B = gyr.dim(0), C = gyr.dim(1), HW = gyr.dim(2) * gyr.dim(3);
        Tensor gxr(gyr.shape()), gxi(gyi.shape());
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                int64_t off = (b * C + c) * HW;
                real_t inv = k.invstd.at2(b, c);
                real_t m1 = 0.0, m2 = 0.0;
                for (int64_t i = 0; i < HW; ++i) {
                    m1 += gyr[off + i] + gyi[off + i];
                    m2 += gyr[off + i] * k.xhat_r[off + i] + gyi[off + i] * k.xhat_i[off + i];
                }
                m1 /= real_t(2 * HW);
                m2 /= real_t(2 * HW);
                for (int64_t i = 0; i < HW; ++i) {
                    gxr[off + i] = inv * (gyr[off + i] - m1 - k.xhat_r[off + i] * m2);
                    gxi[off + i] = inv * (gyi[off + i] - m1 - k.xhat_i[off + i] * m2);
                }
            }
        return {std::move(gxr), std::move(gxi)};
    }

    void visit(const std::string&, const ParamVisitor&, const BufferVisitor&) override {}
    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    struct Cache {
        Tensor xhat_r, xhat_i, invstd;
    };
    real_t eps_ = 1e-5;
    std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Complex-spectrum discriminator: 320-point STFT -> complex conv stack with
// complex IN + per-part PReLU -> real 1x1 aggregation over [re; im].
// ---------------------------------------------------------------------------

class ComplexSpectrumDiscriminator : public Module {
public:
    ComplexSpectrumDiscriminator() = default;
    ComplexSpectrumDiscriminator(const DiscriminatorConfig& cfg, Rng& rng)
        : stft_(cfg.fft_size, cfg.fft_size, cfg.hop) {
        std::vector<int64_t> ch = cfg.scaled(cfg.spec_channels);
        int64_t in = 1;
        for (int64_t c : ch) {
            convs_.push_back(std::make_unique<ComplexConv2d>(in, c, 3, 2, 1, rng));
            norms_.emplace_back();
            acts_r_.emplace_back(c);
            acts_i_.emplace_back(c);
            in = c;
        }
        out_ = Conv2d(2 * in, 1, 1, 1, 1, 1, 0, 0, 1, true, rng);
    }

    int64_t min_input_length() const { return stft_.win_length(); }

    // x: [B, 1, 1, L] waveform -> real score map [B, 1, T', K'].
    Tensor forward(const Tensor& x, Ctx ctx) {
        int64_t B = x.dim(0), L = x.dim(3);
        TMGAN_CHECK(L >= min_input_length(), LengthError,
                    "ComplexSpectrumDiscriminator: input shorter than one window");
        int64_t T = stft_.num_frames(L), K = stft_.bins();
        Tensor xr({B, 1, T, K}), xi({B, 1, T, K});
        for (int64_t b = 0; b < B; ++b) {
            Tensor re, im;
            stft_.forward(x.data() + b * L, L, re, im);
            std::copy(re.data(), re.data() + T * K, xr.data() + b * T * K);
            std::copy(im.data(), im.data() + T * K, xi.data() + b * T * K);
        }
        if (ctx.grad) input_lens_.push_back(L);
        Tensor hr = std::move(xr), hi = std::move(xi);
        for (size_t i = 0; i < convs_.size(); ++i) {
            auto [cr, ci] = convs_[i]->forward(hr, hi, ctx);
            auto [nr, ni] = norms_[i].forward(cr, ci, ctx);
            hr = acts_r_[i].forward(nr, ctx);
            hi = acts_i_[i].forward(ni, ctx);
        }
        return out_.forward(concat_channels(hr, hi), ctx);
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!input_lens_.empty(), Error, "spec disc: backward without forward");
        int64_t L = input_lens_.back();
        input_lens_.pop_back();
        Tensor g = out_.backward(gy);
        int64_t half = g.dim(1) / 2;
        Tensor gr, gi;
        split_channels(g, half, gr, gi);
        for (size_t i = convs_.size(); i-- > 0;) {
            gr = acts_r_[i].backward(gr);
            gi = acts_i_[i].backward(gi);
            auto [nr, ni] = norms_[i].backward(gr, gi);
            auto [cr, ci] = convs_[i]->backward(nr, ni);
            gr = std::move(cr);
            gi = std::move(ci);
        }
        int64_t B = gr.dim(0), T = gr.dim(2), K = gr.dim(3);
        Tensor gx({B, 1, 1, L});
        for (int64_t b = 0; b < B; ++b) {
            Tensor gre({T, K}), gim({T, K});
            std::copy(gr.data() + b * T * K, gr.data() + (b + 1) * T * K, gre.data());
            std::copy(gi.data() + b * T * K, gi.data() + (b + 1) * T * K, gim.data());
            stft_.backward(gre, gim, gx.data() + b * L, L);
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        for (size_t i = 0; i < convs_.size(); ++i) {
            std::string l = prefix + ".l" + std::to_string(i);
            convs_[i]->visit(l + ".cconv", pv, bv);
            acts_r_[i].visit(l + ".prelu_r", pv, bv);
            acts_i_[i].visit(l + ".prelu_i", pv, bv);
        }
        out_.visit(prefix + ".out", pv, bv);
    }

    void drop_cache() override {
        if (!input_lens_.empty()) input_lens_.pop_back();
        for (auto& c : convs_) c->drop_cache();
        for (auto& n : norms_) n.drop_cache();
        for (auto& a : acts_r_) a.drop_cache();
        for (auto& a : acts_i_) a.drop_cache();
        out_.drop_cache();
    }

private:
    Stft stft_{320, 320, 160};
    std::vector<std::unique_ptr<ComplexConv2d>> convs_;
    std::vector<ComplexInstanceNorm> norms_;
    std::vector<PRelu> acts_r_, acts_i_;
    Conv2d out_;
    std::vector<int64_t> input_lens_;
};

// Public op on weight/input planes: complex product rule via real convs.
inline std::pair<Tensor, Tensor> complex_conv2d(ComplexConv2d& conv, const Tensor& xr,
                                                const Tensor& xi) {
    return conv.forward(xr, xi, kInfer);
}

}  // namespace tmgan
