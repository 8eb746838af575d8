#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/tensor.hpp"

namespace tmgan {

using RowMatNN = Eigen::Matrix<real_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMatNN>;
using CMapMat = Eigen::Map<const RowMatNN>;

// Learnable tensor with its gradient accumulator.
struct Param {
    Tensor v;
    Tensor g;

    void init(std::vector<int64_t> shape) {
        v = Tensor(shape);
        g = Tensor(shape);
    }
    void zero_grad() { g.zero(); }
};

using ParamVisitor = std::function<void(const std::string&, Param&)>;
using BufferVisitor = std::function<void(const std::string&, Tensor&)>;

// Forward context: grad => keep caches for a later backward; training =>
// batch statistics / EMA updates are live.
struct Ctx {
    bool grad = true;
    bool training = true;
};

inline constexpr Ctx kInfer{false, false};

struct Module {
    virtual void visit(const std::string& prefix, const ParamVisitor& pv,
                       const BufferVisitor& bv) = 0;
    // Discard one pending forward record without running backward.
    virtual void drop_cache() = 0;
    virtual ~Module() = default;
};

inline void zero_grads(Module& m) {
    m.visit("", [](const std::string&, Param& p) { p.zero_grad(); },
            [](const std::string&, Tensor&) {});
}

inline std::vector<Param*> collect_params(Module& m) {
    std::vector<Param*> out;
    m.visit("", [&](const std::string&, Param& p) { out.push_back(&p); },
            [](const std::string&, Tensor&) {});
    return out;
}

inline int64_t count_params(Module& m) {
    int64_t n = 0;
    m.visit("", [&](const std::string&, Param& p) { n += p.v.numel(); },
            [](const std::string&, Tensor&) {});
    return n;
}

// ---------------------------------------------------------------------------
// Initializers
// ---------------------------------------------------------------------------

// Kaiming-uniform with PReLU(0.25) gain.
inline void kaiming_uniform(Tensor& w, int64_t fan_in, Rng& rng) {
    real_t gain = std::sqrt(2.0 / (1.0 + 0.25 * 0.25));
    real_t bound = gain * std::sqrt(3.0 / real_t(fan_in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
}

// Orthogonal square matrix via Householder QR with a sign-fixed R diagonal.
inline void orthogonal_square(real_t* data, int64_t n, Rng& rng) {
    RowMatNN a(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<RowMatNN> qr(a);
    RowMatNN q = qr.householderQ() * RowMatNN::Identity(n, n);
    RowMatNN r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int64_t j = 0; j < n; ++j)
        if (r(j, j) < 0)
            for (int64_t i = 0; i < n; ++i) q(i, j) = -q(i, j);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) data[i * n + j] = q(i, j);
}

// ---------------------------------------------------------------------------
// Conv2d with groups. Inputs are [B, C, H, W]; the GEMM is done per batch
// item so that a frame-major layout ([B*F, C, 1, N]) yields identical
// floating-point results whether frames arrive batched or one at a time.
// ---------------------------------------------------------------------------

class Conv2d : public Module {
public:
    Conv2d() = default;
    Conv2d(int64_t in_ch, int64_t out_ch, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
           int64_t ph, int64_t pw, int64_t groups, bool bias, Rng& rng)
        : in_(in_ch), out_(out_ch), kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(ph), pw_(pw),
          groups_(groups), has_bias_(bias) {
        TMGAN_CHECK(in_ch % groups == 0 && out_ch % groups == 0, ShapeError,
                    "Conv2d: channels not divisible by groups");
        w_.init({out_ch, in_ch / groups, kh, kw});
        kaiming_uniform(w_.v, (in_ch / groups) * kh * kw, rng);
        if (has_bias_) b_.init({out_ch});
    }

    // 1D helper along the W axis: kernel k, stride s, symmetric zero pad.
    static Conv2d along_w(int64_t in_ch, int64_t out_ch, int64_t k, int64_t s, int64_t groups,
                          Rng& rng, bool bias = true) {
        return Conv2d(in_ch, out_ch, 1, k, 1, s, 0, (k - 1) / 2, groups, bias, rng);
    }

    int64_t in_channels() const { return in_; }
    int64_t out_channels() const { return out_; }
    int64_t kernel_h() const { return kh_; }
    int64_t kernel_w() const { return kw_; }
    int64_t stride_w() const { return sw_; }
    int64_t groups() const { return groups_; }

    static int64_t out_size(int64_t in, int64_t k, int64_t s, int64_t p) {
        return (in + 2 * p - k) / s + 1;
    }

    Tensor forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 4 && x.dim(1) == in_, ShapeError, "Conv2d: bad input shape");
        int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
        int64_t Ho = out_size(H, kh_, sh_, ph_), Wo = out_size(W, kw_, sw_, pw_);
        TMGAN_CHECK(Ho >= 1 && Wo >= 1, ShapeError, "Conv2d: input too small");
        Tensor y({B, out_, Ho, Wo});
        int64_t cg = in_ / groups_, og = out_ / groups_, k_cols = cg * kh_ * kw_;
        std::vector<real_t> col(size_t(k_cols * Ho * Wo));
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t g = 0; g < groups_; ++g) {
                im2col(x.data() + (b * in_ + g * cg) * H * W, H, W, cg, Ho, Wo, col.data());
                CMapMat wm(w_.v.data() + g * og * k_cols, og, k_cols);
                CMapMat cm(col.data(), k_cols, Ho * Wo);
                MapMat ym(y.data() + (b * out_ + g * og) * Ho * Wo, og, Ho * Wo);
                ym.noalias() = wm * cm;
            }
            if (has_bias_) {
                for (int64_t oc = 0; oc < out_; ++oc) {
                    real_t bias = b_.v[oc];
                    real_t* py = y.data() + (b * out_ + oc) * Ho * Wo;
                    for (int64_t i = 0; i < Ho * Wo; ++i) py[i] += bias;
                }
            }
        }
        if (ctx.grad) cache_.push_back(x);
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "Conv2d: backward without cached forward");
        Tensor x = std::move(cache_.back());
        cache_.pop_back();
        int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
        int64_t Ho = gy.dim(2), Wo = gy.dim(3);
        int64_t cg = in_ / groups_, og = out_ / groups_, k_cols = cg * kh_ * kw_;
        Tensor gx(x.shape());
        std::vector<real_t> col(size_t(k_cols * Ho * Wo));
        std::vector<real_t> gcol(size_t(k_cols * Ho * Wo));
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t g = 0; g < groups_; ++g) {
                im2col(x.data() + (b * in_ + g * cg) * H * W, H, W, cg, Ho, Wo, col.data());
                CMapMat gym(gy.data() + (b * out_ + g * og) * Ho * Wo, og, Ho * Wo);
                CMapMat cm(col.data(), k_cols, Ho * Wo);
                MapMat gwm(w_.g.data() + g * og * k_cols, og, k_cols);
                gwm.noalias() += gym * cm.transpose();
                CMapMat wm(w_.v.data() + g * og * k_cols, og, k_cols);
                MapMat gcm(gcol.data(), k_cols, Ho * Wo);
                gcm.noalias() = wm.transpose() * gym;
                col2im_acc(gcol.data(), H, W, cg, Ho, Wo,
                           gx.data() + (b * in_ + g * cg) * H * W);
            }
            if (has_bias_) {
                for (int64_t oc = 0; oc < out_; ++oc) {
                    const real_t* pg = gy.data() + (b * out_ + oc) * Ho * Wo;
                    real_t s = 0.0;
                    for (int64_t i = 0; i < Ho * Wo; ++i) s += pg[i];
                    b_.g[oc] += s;
                }
            }
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv, const BufferVisitor&) override {
        pv(prefix + ".w", w_);
        if (has_bias_) pv(prefix + ".b", b_);
    }

    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

    Param& weight() { return w_; }
    Param& bias_param() { return b_; }

private:
    void im2col(const real_t* x, int64_t H, int64_t W, int64_t cg, int64_t Ho, int64_t Wo,
                real_t* col) const {
        for (int64_t c = 0; c < cg; ++c) {
            for (int64_t ki = 0; ki < kh_; ++ki) {
                for (int64_t kj = 0; kj < kw_; ++kj) {
                    real_t* dst = col + ((c * kh_ + ki) * kw_ + kj) * Ho * Wo;
                    for (int64_t oh = 0; oh < Ho; ++oh) {
                        int64_t ih = oh * sh_ - ph_ + ki;
                        if (ih < 0 || ih >= H) {
                            std::fill(dst + oh * Wo, dst + (oh + 1) * Wo, 0.0);
                            continue;
                        }
                        const real_t* src = x + (c * H + ih) * W;
                        for (int64_t ow = 0; ow < Wo; ++ow) {
                            int64_t iw = ow * sw_ - pw_ + kj;
                            dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
                        }
                    }
                }
            }
        }
    }

    void col2im_acc(const real_t* col, int64_t H, int64_t W, int64_t cg, int64_t Ho, int64_t Wo,
                    real_t* gx) const {
        for (int64_t c = 0; c < cg; ++c) {
            for (int64_t ki = 0; ki < kh_; ++ki) {
                for (int64_t kj = 0; kj < kw_; ++kj) {
                    const real_t* src = col + ((c * kh_ + ki) * kw_ + kj) * Ho * Wo;
                    for (int64_t oh = 0; oh < Ho; ++oh) {
                        int64_t ih = oh * sh_ - ph_ + ki;
                        if (ih < 0 || ih >= H) continue;
                        real_t* dst = gx + (c * H + ih) * W;
                        for (int64_t ow = 0; ow < Wo; ++ow) {
                            int64_t iw = ow * sw_ - pw_ + kj;
                            if (iw >= 0 && iw < W) dst[iw] += src[oh * Wo + ow];
                        }
                    }
                }
            }
        }
    }

    int64_t in_ = 0, out_ = 0, kh_ = 1, kw_ = 1, sh_ = 1, sw_ = 1, ph_ = 0, pw_ = 0,
            groups_ = 1;
    bool has_bias_ = true;
    Param w_, b_;
    std::vector<Tensor> cache_;
};

// ---------------------------------------------------------------------------
// LSTM over a [T, B, C] sequence, hidden width H. Strictly left-to-right.
// ---------------------------------------------------------------------------

class Lstm : public Module {
public:
    Lstm() = default;
    Lstm(int64_t in_dim, int64_t hidden, Rng& rng) : in_(in_dim), hid_(hidden) {
        w_ih_.init({4 * hid_, in_});
        w_hh_.init({4 * hid_, hid_});
        b_.init({4 * hid_});
        real_t bound = 1.0 / std::sqrt(real_t(hid_));
        for (int64_t i = 0; i < w_ih_.v.numel(); ++i) w_ih_.v[i] = rng.uniform(-bound, bound);
        for (int64_t i = 0; i < b_.v.numel(); ++i) b_.v[i] = rng.uniform(-bound, bound);
        for (int64_t gate = 0; gate < 4; ++gate)
            orthogonal_square(w_hh_.v.data() + gate * hid_ * hid_, hid_, rng);
    }

    int64_t hidden() const { return hid_; }
    int64_t input_dim() const { return in_; }

    // x: [T, B, in]; h/c: [B, H] carried state (zeros when empty). Returns
    // hidden outputs [T, B, H] and leaves the final state in h/c.
    Tensor forward(const Tensor& x, Tensor& h, Tensor& c, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 3 && x.dim(2) == in_, ShapeError, "Lstm: bad input");
        int64_t T = x.dim(0), B = x.dim(1);
        if (h.numel() == 0) h = Tensor({B, hid_});
        if (c.numel() == 0) c = Tensor({B, hid_});
        TMGAN_CHECK(h.dim(0) == B && h.dim(1) == hid_ && c.dim(0) == B && c.dim(1) == hid_,
                    ShapeError, "Lstm: bad state shape");

        Cache k;
        k.x = x;
        k.h = Tensor({T + 1, B, hid_});
        k.c = Tensor({T + 1, B, hid_});
        k.gates = Tensor({T, B, 4 * hid_});
        std::copy(h.data(), h.data() + B * hid_, k.h.data());
        std::copy(c.data(), c.data() + B * hid_, k.c.data());

        Tensor y({T, B, hid_});
        CMapMat wih(w_ih_.v.data(), 4 * hid_, in_);
        CMapMat whh(w_hh_.v.data(), 4 * hid_, hid_);
        RowMatNN a(B, 4 * hid_);
        for (int64_t t = 0; t < T; ++t) {
            CMapMat xt(x.data() + t * B * in_, B, in_);
            CMapMat hprev(k.h.data() + t * B * hid_, B, hid_);
            a.noalias() = xt * wih.transpose();
            a.noalias() += hprev * whh.transpose();
            for (int64_t bi = 0; bi < B; ++bi) {
                const real_t* cprev = k.c.data() + (t * B + bi) * hid_;
                real_t* gv = k.gates.data() + (t * B + bi) * 4 * hid_;
                real_t* cn = k.c.data() + ((t + 1) * B + bi) * hid_;
                real_t* hn = k.h.data() + ((t + 1) * B + bi) * hid_;
                real_t* yo = y.data() + (t * B + bi) * hid_;
                for (int64_t u = 0; u < hid_; ++u) {
                    real_t ai = a(bi, u) + b_.v[u];
                    real_t af = a(bi, hid_ + u) + b_.v[hid_ + u];
                    real_t ag = a(bi, 2 * hid_ + u) + b_.v[2 * hid_ + u];
                    real_t ao = a(bi, 3 * hid_ + u) + b_.v[3 * hid_ + u];
                    real_t ig = 1.0 / (1.0 + std::exp(-ai));
                    real_t fg = 1.0 / (1.0 + std::exp(-af));
                    real_t gg = std::tanh(ag);
                    real_t og = 1.0 / (1.0 + std::exp(-ao));
                    real_t cv = fg * cprev[u] + ig * gg;
                    real_t hv = og * std::tanh(cv);
                    gv[u] = ig;
                    gv[hid_ + u] = fg;
                    gv[2 * hid_ + u] = gg;
                    gv[3 * hid_ + u] = og;
                    cn[u] = cv;
                    hn[u] = hv;
                    yo[u] = hv;
                }
            }
        }
        std::copy(k.h.data() + T * B * hid_, k.h.data() + (T + 1) * B * hid_, h.data());
        std::copy(k.c.data() + T * B * hid_, k.c.data() + (T + 1) * B * hid_, c.data());
        if (ctx.grad) cache_.push_back(std::move(k));
        return y;
    }

    // gy: [T, B, H] -> gx [T, B, in]. Gradients w.r.t. the initial state are
    // dropped (training always starts from zero state).
    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "Lstm: backward without cached forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        int64_t T = k.x.dim(0), B = k.x.dim(1);
        Tensor gx({T, B, in_});
        RowMatNN gh = RowMatNN::Zero(B, hid_);
        RowMatNN gc = RowMatNN::Zero(B, hid_);
        RowMatNN ga(B, 4 * hid_);
        CMapMat wih(w_ih_.v.data(), 4 * hid_, in_);
        CMapMat whh(w_hh_.v.data(), 4 * hid_, hid_);
        MapMat gwih(w_ih_.g.data(), 4 * hid_, in_);
        MapMat gwhh(w_hh_.g.data(), 4 * hid_, hid_);
        for (int64_t t = T - 1; t >= 0; --t) {
            for (int64_t bi = 0; bi < B; ++bi) {
                const real_t* gv = k.gates.data() + (t * B + bi) * 4 * hid_;
                const real_t* cn = k.c.data() + ((t + 1) * B + bi) * hid_;
                const real_t* cprev = k.c.data() + (t * B + bi) * hid_;
                const real_t* gyp = gy.data() + (t * B + bi) * hid_;
                for (int64_t u = 0; u < hid_; ++u) {
                    real_t ig = gv[u], fg = gv[hid_ + u], gg = gv[2 * hid_ + u],
                           og = gv[3 * hid_ + u];
                    real_t tc = std::tanh(cn[u]);
                    real_t ghv = gyp[u] + gh(bi, u);
                    real_t gcv = gc(bi, u) + ghv * og * (1.0 - tc * tc);
                    real_t gov = ghv * tc;
                    real_t giv = gcv * gg;
                    real_t ggv = gcv * ig;
                    real_t gfv = gcv * cprev[u];
                    ga(bi, u) = giv * ig * (1.0 - ig);
                    ga(bi, hid_ + u) = gfv * fg * (1.0 - fg);
                    ga(bi, 2 * hid_ + u) = ggv * (1.0 - gg * gg);
                    ga(bi, 3 * hid_ + u) = gov * og * (1.0 - og);
                    gc(bi, u) = gcv * fg;
                }
            }
            CMapMat xt(k.x.data() + t * B * in_, B, in_);
            CMapMat hprev(k.h.data() + t * B * hid_, B, hid_);
            gwih.noalias() += ga.transpose() * xt;
            gwhh.noalias() += ga.transpose() * hprev;
            for (int64_t bi = 0; bi < B; ++bi)
                for (int64_t u = 0; u < 4 * hid_; ++u) b_.g[u] += ga(bi, u);
            MapMat gxt(gx.data() + t * B * in_, B, in_);
            gxt.noalias() = ga * wih;
            gh.noalias() = ga * whh;
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv, const BufferVisitor&) override {
        pv(prefix + ".w_ih", w_ih_);
        pv(prefix + ".w_hh", w_hh_);
        pv(prefix + ".b", b_);
    }

    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    struct Cache {
        Tensor x;      // [T, B, in]
        Tensor h, c;   // [T+1, B, H]
        Tensor gates;  // [T, B, 4H] post-activation i,f,g,o
    };

    int64_t in_ = 0, hid_ = 0;
    Param w_ih_, w_hh_, b_;
    std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Per-channel BatchNorm over [B, C, H, W].
// ---------------------------------------------------------------------------

class BatchNorm : public Module {
public:
    BatchNorm() = default;
    BatchNorm(int64_t channels, real_t eps = 1e-5, real_t momentum = 0.1)
        : ch_(channels), eps_(eps), momentum_(momentum) {
        gamma_.init({ch_});
        gamma_.v.fill(1.0);
        beta_.init({ch_});
        running_mean_ = Tensor({ch_});
        running_var_ = Tensor({ch_});
        running_var_.fill(1.0);
    }

    Tensor forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 4 && x.dim(1) == ch_, ShapeError, "BatchNorm: bad input");
        int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
        int64_t n = B * H * W;
        Tensor y(x.shape());
        Cache k;
        k.train = ctx.training;
        k.xhat = Tensor(x.shape());
        k.invstd = Tensor({ch_});
        for (int64_t c = 0; c < ch_; ++c) {
            real_t mean, var;
            if (ctx.training) {
                real_t s = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const real_t* p = x.data() + (b * ch_ + c) * H * W;
                    for (int64_t i = 0; i < H * W; ++i) s += p[i];
                }
                mean = s / n;
                real_t v = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const real_t* p = x.data() + (b * ch_ + c) * H * W;
                    for (int64_t i = 0; i < H * W; ++i) {
                        real_t d = p[i] - mean;
                        v += d * d;
                    }
                }
                var = v / n;
                real_t unbiased = n > 1 ? v / (n - 1) : var;
                running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
                running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
            } else {
                mean = running_mean_[c];
                var = running_var_[c];
            }
            real_t inv = 1.0 / std::sqrt(var + eps_);
            k.invstd[c] = inv;
            real_t g = gamma_.v[c], be = beta_.v[c];
            for (int64_t b = 0; b < B; ++b) {
                const real_t* p = x.data() + (b * ch_ + c) * H * W;
                real_t* ph = k.xhat.data() + (b * ch_ + c) * H * W;
                real_t* py = y.data() + (b * ch_ + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) {
                    real_t xh = (p[i] - mean) * inv;
                    ph[i] = xh;
                    py[i] = g * xh + be;
                }
            }
        }
        if (ctx.grad) cache_.push_back(std::move(k));
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "BatchNorm: backward without cached forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        int64_t B = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
        int64_t n = B * H * W;
        Tensor gx(gy.shape());
        for (int64_t c = 0; c < ch_; ++c) {
            real_t g = gamma_.v[c], inv = k.invstd[c];
            real_t sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const real_t* pg = gy.data() + (b * ch_ + c) * H * W;
                const real_t* ph = k.xhat.data() + (b * ch_ + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) {
                    sum_gy += pg[i];
                    sum_gy_xhat += pg[i] * ph[i];
                }
            }
            gamma_.g[c] += sum_gy_xhat;
            beta_.g[c] += sum_gy;
            real_t m1 = sum_gy / n, m2 = sum_gy_xhat / n;
            for (int64_t b = 0; b < B; ++b) {
                const real_t* pg = gy.data() + (b * ch_ + c) * H * W;
                const real_t* ph = k.xhat.data() + (b * ch_ + c) * H * W;
                real_t* px = gx.data() + (b * ch_ + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) {
                    if (k.train)
                        px[i] = g * inv * (pg[i] - m1 - ph[i] * m2);
                    else
                        px[i] = g * inv * pg[i];
                }
            }
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        pv(prefix + ".gamma", gamma_);
        pv(prefix + ".beta", beta_);
        bv(prefix + ".running_mean", running_mean_);
        bv(prefix + ".running_var", running_var_);
    }

    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    struct Cache {
        Tensor xhat;
        Tensor invstd;
        bool train = true;
    };
    int64_t ch_ = 0;
    real_t eps_ = 1e-5, momentum_ = 0.1;
    Param gamma_, beta_;
    Tensor running_mean_, running_var_;
    std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// PReLU with one slope per channel.
// ---------------------------------------------------------------------------

class PRelu : public Module {
public:
    PRelu() = default;
    explicit PRelu(int64_t channels) : ch_(channels) {
        a_.init({ch_});
        a_.v.fill(0.25);
    }

    Tensor forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 4 && x.dim(1) == ch_, ShapeError, "PRelu: bad input");
        Tensor y(x.shape());
        int64_t B = x.dim(0), HW = x.dim(2) * x.dim(3);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < ch_; ++c) {
                real_t a = a_.v[c];
                const real_t* p = x.data() + (b * ch_ + c) * HW;
                real_t* py = y.data() + (b * ch_ + c) * HW;
                for (int64_t i = 0; i < HW; ++i) py[i] = p[i] > 0 ? p[i] : a * p[i];
            }
        if (ctx.grad) cache_.push_back(x);
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "PRelu: backward without cached forward");
        Tensor x = std::move(cache_.back());
        cache_.pop_back();
        Tensor gx(x.shape());
        int64_t B = x.dim(0), HW = x.dim(2) * x.dim(3);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < ch_; ++c) {
                real_t a = a_.v[c];
                real_t ga = 0.0;
                const real_t* p = x.data() + (b * ch_ + c) * HW;
                const real_t* pg = gy.data() + (b * ch_ + c) * HW;
                real_t* px = gx.data() + (b * ch_ + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    if (p[i] > 0) {
                        px[i] = pg[i];
                    } else {
                        px[i] = a * pg[i];
                        ga += pg[i] * p[i];
                    }
                }
                a_.g[c] += ga;
            }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv, const BufferVisitor&) override {
        pv(prefix + ".a", a_);
    }

    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    int64_t ch_ = 0;
    Param a_;
    std::vector<Tensor> cache_;
};

// ---------------------------------------------------------------------------
// Pooling along the W axis.
// ---------------------------------------------------------------------------

// Max pool, kernel 2 stride 2 (the sub-UNet / outer downsampler).
class MaxPoolHalf : public Module {
public:
    Tensor forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 4 && x.dim(3) % 2 == 0, ShapeError,
                    "MaxPoolHalf: W must be even");
        int64_t n = x.numel() / x.dim(3), W = x.dim(3);
        Tensor y({x.dim(0), x.dim(1), x.dim(2), W / 2});
        std::vector<uint8_t> pick(size_t(n * W / 2));
        const real_t* px = x.data();
        real_t* py = y.data();
        for (int64_t r = 0; r < n; ++r) {
            for (int64_t i = 0; i < W / 2; ++i) {
                real_t a = px[r * W + 2 * i], b = px[r * W + 2 * i + 1];
                bool second = b > a;
                py[r * (W / 2) + i] = second ? b : a;
                pick[size_t(r * (W / 2) + i)] = second ? 1 : 0;
            }
        }
        if (ctx.grad) cache_.push_back({std::move(pick), W});
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "MaxPoolHalf: backward without cached forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        int64_t Wo = gy.dim(3), W = k.w;
        Tensor gx({gy.dim(0), gy.dim(1), gy.dim(2), W});
        int64_t n = gy.numel() / Wo;
        for (int64_t r = 0; r < n; ++r)
            for (int64_t i = 0; i < Wo; ++i)
                gx[r * W + 2 * i + k.pick[size_t(r * Wo + i)]] = gy[r * Wo + i];
        return gx;
    }

    void visit(const std::string&, const ParamVisitor&, const BufferVisitor&) override {}
    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    struct Cache {
        std::vector<uint8_t> pick;
        int64_t w;
    };
    std::vector<Cache> cache_;
};

// Average pool along W with zero padding; divisor counts valid taps only.
class AvgPoolW : public Module {
public:
    AvgPoolW() = default;
    AvgPoolW(int64_t kernel, int64_t stride, int64_t pad) : k_(kernel), s_(stride), p_(pad) {}

    Tensor forward(const Tensor& x, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 4, ShapeError, "AvgPoolW: bad input");
        int64_t W = x.dim(3);
        int64_t Wo = (W + 2 * p_ - k_) / s_ + 1;
        TMGAN_CHECK(Wo >= 1, ShapeError, "AvgPoolW: input too small");
        Tensor y({x.dim(0), x.dim(1), x.dim(2), Wo});
        int64_t n = x.numel() / W;
        for (int64_t r = 0; r < n; ++r) {
            const real_t* px = x.data() + r * W;
            real_t* py = y.data() + r * Wo;
            for (int64_t o = 0; o < Wo; ++o) {
                int64_t lo = o * s_ - p_, hi = lo + k_;
                int64_t a = std::max<int64_t>(lo, 0), b = std::min(hi, W);
                real_t sum = 0.0;
                for (int64_t i = a; i < b; ++i) sum += px[i];
                py[o] = sum / real_t(b - a);
            }
        }
        if (ctx.grad) cache_.push_back(W);
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "AvgPoolW: backward without cached forward");
        int64_t W = cache_.back();
        cache_.pop_back();
        int64_t Wo = gy.dim(3);
        Tensor gx({gy.dim(0), gy.dim(1), gy.dim(2), W});
        int64_t n = gy.numel() / Wo;
        for (int64_t r = 0; r < n; ++r) {
            const real_t* pg = gy.data() + r * Wo;
            real_t* px = gx.data() + r * W;
            for (int64_t o = 0; o < Wo; ++o) {
                int64_t lo = o * s_ - p_, hi = lo + k_;
                int64_t a = std::max<int64_t>(lo, 0), b = std::min(hi, W);
                real_t share = pg[o] / real_t(b - a);
                for (int64_t i = a; i < b; ++i) px[i] += share;
            }
        }
        return gx;
    }

    void visit(const std::string&, const ParamVisitor&, const BufferVisitor&) override {}
    void drop_cache() override {
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    int64_t k_ = 4, s_ = 2, p_ = 1;
    std::vector<int64_t> cache_;
};

// ---------------------------------------------------------------------------
// Sub-pixel shuffle along W: [B, C*r, H, W] -> [B, C, H, W*r].
// out[b, c, h, w*r + j] = in[b, c*r + j, h, w]
// ---------------------------------------------------------------------------

inline Tensor subpixel_shuffle(const Tensor& x, int64_t r) {
    TMGAN_CHECK(x.rank() == 4 && x.dim(1) % r == 0, ShapeError,
                "subpixel_shuffle: channels not divisible by r");
    int64_t B = x.dim(0), C = x.dim(1) / r, H = x.dim(2), W = x.dim(3);
    Tensor y({B, C, H, W * r});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t j = 0; j < r; ++j)
                for (int64_t h = 0; h < H; ++h) {
                    const real_t* src = x.data() + ((b * C * r + c * r + j) * H + h) * W;
                    real_t* dst = y.data() + ((b * C + c) * H + h) * W * r;
                    for (int64_t w = 0; w < W; ++w) dst[w * r + j] = src[w];
                }
    return y;
}

inline Tensor subpixel_shuffle_backward(const Tensor& gy, int64_t r) {
    int64_t B = gy.dim(0), C = gy.dim(1), H = gy.dim(2), Wr = gy.dim(3);
    TMGAN_CHECK(Wr % r == 0, ShapeError, "subpixel_shuffle_backward: bad width");
    int64_t W = Wr / r;
    Tensor gx({B, C * r, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t j = 0; j < r; ++j)
                for (int64_t h = 0; h < H; ++h) {
                    real_t* dst = gx.data() + ((b * C * r + c * r + j) * H + h) * W;
                    const real_t* src = gy.data() + ((b * C + c) * H + h) * Wr;
                    for (int64_t w = 0; w < W; ++w) dst[w] = src[w * r + j];
                }
    return gx;
}

// ---------------------------------------------------------------------------
// Channel concat / split for [B, C, H, W].
// ---------------------------------------------------------------------------

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    TMGAN_CHECK(a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) &&
                    a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                ShapeError, "concat_channels: shape mismatch");
    int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
    Tensor y({B, Ca + Cb, a.dim(2), a.dim(3)});
    for (int64_t i = 0; i < B; ++i) {
        std::copy(a.data() + i * Ca * HW, a.data() + (i + 1) * Ca * HW,
                  y.data() + i * (Ca + Cb) * HW);
        std::copy(b.data() + i * Cb * HW, b.data() + (i + 1) * Cb * HW,
                  y.data() + (i * (Ca + Cb) + Ca) * HW);
    }
    return y;
}

inline void split_channels(const Tensor& y, int64_t ca, Tensor& ga, Tensor& gb) {
    int64_t B = y.dim(0), C = y.dim(1), HW = y.dim(2) * y.dim(3);
    int64_t cb = C - ca;
    ga = Tensor({B, ca, y.dim(2), y.dim(3)});
    gb = Tensor({B, cb, y.dim(2), y.dim(3)});
    for (int64_t i = 0; i < B; ++i) {
        std::copy(y.data() + i * C * HW, y.data() + (i * C + ca) * HW, ga.data() + i * ca * HW);
        std::copy(y.data() + (i * C + ca) * HW, y.data() + (i + 1) * C * HW,
                  gb.data() + i * cb * HW);
    }
}

}  // namespace tmgan
