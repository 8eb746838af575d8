#pragma once

#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/nn.hpp"
#include "tmgan/tensor.hpp"

namespace tmgan {

// Recurrent state of one TFiLM layer (LSTM hidden/cell, each [B, C]).
struct TFiLMState {
    Tensor h;
    Tensor c;

    void serialize(std::vector<real_t>& out) const {
        out.push_back(real_t(h.numel()));
        for (int64_t i = 0; i < h.numel(); ++i) out.push_back(h[i]);
        for (int64_t i = 0; i < c.numel(); ++i) out.push_back(c[i]);
    }

    static TFiLMState deserialize(const std::vector<real_t>& in, size_t& pos, int64_t batch,
                                  int64_t ch) {
        TFiLMState s;
        TMGAN_CHECK(pos < in.size(), FormatError, "TFiLMState: truncated buffer");
        int64_t n = int64_t(in[pos++]);
        TMGAN_CHECK(n == batch * ch && pos + 2 * size_t(n) <= in.size(), FormatError,
                    "TFiLMState: size mismatch");
        s.h = Tensor({batch, ch});
        s.c = Tensor({batch, ch});
        for (int64_t i = 0; i < n; ++i) s.h[i] = in[pos++];
        for (int64_t i = 0; i < n; ++i) s.c[i] = in[pos++];
        return s;
    }
};

// Temporal feature-wise linear modulation: per-frame max pooling over the
// within-frame axis feeds a left-to-right LSTM whose hidden outputs scale the
// input elementwise, one gain per (channel, frame).
class TFiLM : public Module {
public:
    TFiLM() = default;
    TFiLM(int64_t channels, Rng& rng) : ch_(channels), lstm_(channels, channels, rng) {}

    int64_t channels() const { return ch_; }

    // x: frame-major [B*F, C, 1, N]. state carries the recurrence across
    // calls (streaming); zero-initialised when empty.
    Tensor forward(const Tensor& x, int64_t batch, int64_t frames, TFiLMState& state, Ctx ctx) {
        TMGAN_CHECK(x.rank() == 4 && x.dim(1) == ch_ && x.dim(0) == batch * frames, ShapeError,
                    "TFiLM: bad input shape");
        int64_t n = x.dim(3);
        TMGAN_CHECK(frames >= 1 && n >= 1, ShapeError, "TFiLM: empty frame axis");

        // Max pool over the whole frame: [B*F, C] plus argmax for backward.
        Tensor pooled({frames, batch, ch_});
        std::vector<int32_t> argmax(size_t(batch * frames * ch_));
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t c = 0; c < ch_; ++c) {
                    const real_t* p = x.data() + ((b * frames + f) * ch_ + c) * n;
                    int64_t best = 0;
                    for (int64_t i = 1; i < n; ++i)
                        if (p[i] > p[best]) best = i;
                    pooled.at3(f, b, c) = p[best];
                    argmax[size_t((b * frames + f) * ch_ + c)] = int32_t(best);
                }

        Tensor gains = lstm_.forward(pooled, state.h, state.c, ctx);  // [F, B, C]

        Tensor y(x.shape());
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t c = 0; c < ch_; ++c) {
                    real_t g = gains.at3(f, b, c);
                    const real_t* p = x.data() + ((b * frames + f) * ch_ + c) * n;
                    real_t* py = y.data() + ((b * frames + f) * ch_ + c) * n;
                    for (int64_t i = 0; i < n; ++i) py[i] = g * p[i];
                }
        if (ctx.grad) cache_.push_back({x, std::move(gains), std::move(argmax), batch, frames, n});
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "TFiLM: backward without cached forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        int64_t batch = k.batch, frames = k.frames, n = k.n;

        Tensor ggain({frames, batch, ch_});
        Tensor gx(k.x.shape());
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t c = 0; c < ch_; ++c) {
                    real_t g = k.gains.at3(f, b, c);
                    const real_t* px = k.x.data() + ((b * frames + f) * ch_ + c) * n;
                    const real_t* pg = gy.data() + ((b * frames + f) * ch_ + c) * n;
                    real_t* pgx = gx.data() + ((b * frames + f) * ch_ + c) * n;
                    real_t s = 0.0;
                    for (int64_t i = 0; i < n; ++i) {
                        s += pg[i] * px[i];
                        pgx[i] = g * pg[i];
                    }
                    ggain.at3(f, b, c) = s;
                }

        Tensor gpool = lstm_.backward(ggain);  // [F, B, C]
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t c = 0; c < ch_; ++c) {
                    int64_t best = k.argmax[size_t((b * frames + f) * ch_ + c)];
                    gx[((b * frames + f) * ch_ + c) * n + best] += gpool.at3(f, b, c);
                }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        lstm_.visit(prefix + ".lstm", pv, bv);
    }

    void drop_cache() override {
        lstm_.drop_cache();
        drop_local();
    }

private:
    void drop_local() {
        if (!cache_.empty()) cache_.pop_back();
    }

    struct Cache {
        Tensor x;
        Tensor gains;  // [F, B, C]
        std::vector<int32_t> argmax;
        int64_t batch, frames, n;
    };

    int64_t ch_ = 0;
    Lstm lstm_;
    std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Layout helpers and the single-utterance operations on [C, F, N] tensors.
// ---------------------------------------------------------------------------

// [C, F, N] -> frame-major [F, C, 1, N] (batch of one).
inline Tensor to_frame_major(const Tensor& y) {
    TMGAN_CHECK(y.rank() == 3, ShapeError, "to_frame_major: want rank-3 [C,F,N]");
    int64_t C = y.dim(0), F = y.dim(1), N = y.dim(2);
    Tensor x({F, C, 1, N});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t f = 0; f < F; ++f)
            std::copy(y.data() + (c * F + f) * N, y.data() + (c * F + f + 1) * N,
                      x.data() + (f * C + c) * N);
    return x;
}

inline Tensor from_frame_major(const Tensor& x, int64_t frames) {
    TMGAN_CHECK(x.rank() == 4 && x.dim(0) == frames, ShapeError, "from_frame_major: bad shape");
    int64_t C = x.dim(1), N = x.dim(3);
    Tensor y({C, frames, N});
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t c = 0; c < C; ++c)
            std::copy(x.data() + (f * C + c) * N, x.data() + (f * C + c + 1) * N,
                      y.data() + (c * frames + f) * N);
    return y;
}

// Whole-sequence forward on [C, F, N], starting from zero state.
inline Tensor tfilm_forward(TFiLM& layer, const Tensor& y_cfn) {
    TFiLMState st;
    Tensor x = to_frame_major(y_cfn);
    Tensor out = layer.forward(x, 1, y_cfn.dim(1), st, kInfer);
    return from_frame_major(out, y_cfn.dim(1));
}

// One-frame streaming step on [C, 1, N]; the state advances in place.
inline Tensor tfilm_step(TFiLM& layer, TFiLMState& state, const Tensor& y_c1n) {
    TMGAN_CHECK(y_c1n.rank() == 3 && y_c1n.dim(1) == 1, ShapeError,
                "tfilm_step: want [C, 1, N]");
    Tensor x = to_frame_major(y_c1n);
    Tensor out = layer.forward(x, 1, 1, state, kInfer);
    return from_frame_major(out, 1);
}

}  // namespace tmgan
