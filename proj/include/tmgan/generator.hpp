#pragma once

#include <deque>
#include <memory>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/framing.hpp"
#include "tmgan/gvq.hpp"
#include "tmgan/nn.hpp"
#include "tmgan/tensor.hpp"
#include "tmgan/tfilm.hpp"

namespace tmgan {

// ---------------------------------------------------------------------------
// Configuration. Channel widths scale with width_mult; everything else is
// fixed by the architecture (sub-UNet depths {4,3,2,1}, 3 VQ stages of 512
// codewords, 2-frame lookahead entering as input context).
// ---------------------------------------------------------------------------

struct GeneratorConfig {
    int64_t frame_samples = 320;
    int64_t lookahead = 2;
    std::vector<int64_t> base_channels = {16, 32, 64, 64};
    std::vector<int64_t> depths = {4, 3, 2, 1};
    int64_t kernel = 5;
    int64_t vq_stages = 3;
    int64_t codebook_size = 512;
    real_t commit_beta = 0.25;
    real_t width_mult = 1.0;
    bool splice_received = true;

    std::vector<int64_t> channels() const {
        std::vector<int64_t> ch;
        for (int64_t c : base_channels)
            ch.push_back(std::max<int64_t>(2, int64_t(std::llround(c * width_mult))));
        return ch;
    }
};

// Per-session recurrent state: one TFiLM state per layer, in traversal order.
struct StreamStates {
    std::vector<TFiLMState> tfilm;
    size_t cursor = 0;

    TFiLMState& next() {
        TMGAN_CHECK(cursor < tfilm.size(), ShapeError, "StreamStates: cursor overflow");
        return tfilm[cursor++];
    }
    void rewind() { cursor = 0; }
};

// ---------------------------------------------------------------------------
// GLU block: pointwise-ish conv to 2*C_out channels, split into value and
// gate halves, output = value * sigmoid(gate).
// ---------------------------------------------------------------------------

class GluBlock : public Module {
public:
    GluBlock() = default;
    GluBlock(int64_t in_ch, int64_t out_ch, int64_t kernel, Rng& rng)
        : out_ch_(out_ch), conv_(Conv2d::along_w(in_ch, 2 * out_ch, kernel, 1, 1, rng)) {}

    int64_t out_channels() const { return out_ch_; }
    Conv2d& conv() { return conv_; }

    Tensor forward(const Tensor& x, Ctx ctx) {
        Tensor a = conv_.forward(x, ctx);
        Tensor value, gate;
        split_channels(a, out_ch_, value, gate);
        Tensor y(value.shape());
        Tensor sig(value.shape());
        for (int64_t i = 0; i < value.numel(); ++i) {
            real_t s = 1.0 / (1.0 + std::exp(-gate[i]));
            sig[i] = s;
            y[i] = value[i] * s;
        }
        if (ctx.grad) cache_.push_back({std::move(value), std::move(sig)});
        return y;
    }

    Tensor backward(const Tensor& gy) {
        TMGAN_CHECK(!cache_.empty(), Error, "GluBlock: backward without cached forward");
        Cache k = std::move(cache_.back());
        cache_.pop_back();
        Tensor gv(k.value.shape()), gg(k.value.shape());
        for (int64_t i = 0; i < gy.numel(); ++i) {
            real_t s = k.sig[i];
            gv[i] = gy[i] * s;
            gg[i] = gy[i] * k.value[i] * s * (1.0 - s);
        }
        return conv_.backward(concat_channels(gv, gg));
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        conv_.visit(prefix + ".conv", pv, bv);
    }

    void drop_cache() override {
        conv_.drop_cache();
        if (!cache_.empty()) cache_.pop_back();
    }

private:
    struct Cache {
        Tensor value;
        Tensor sig;
    };
    int64_t out_ch_ = 0;
    Conv2d conv_;
    std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Sub-UNet: a symmetric encoder-decoder with constant channel count.
// Encoding layer: conv -> TFiLM -> PReLU -> max-pool(x2).
// Decoding layer: sub-pixel upsample(x2) -> conv(cat with skip) -> TFiLM ->
// PReLU. Shape preserving; within-frame length must divide 2^depth.
// ---------------------------------------------------------------------------

class SubUNet : public Module {
public:
    SubUNet() = default;
    SubUNet(int64_t depth, int64_t channels, int64_t kernel, Rng& rng)
        : depth_(depth), ch_(channels) {
        TMGAN_CHECK(depth >= 1, ParamError, "SubUNet: depth must be >= 1");
        for (int64_t m = 0; m < depth; ++m) {
            enc_convs_.push_back(Conv2d::along_w(ch_, ch_, kernel, 1, 1, rng));
            enc_tfilms_.emplace_back(ch_, rng);
            enc_prelus_.emplace_back(ch_);
            pools_.emplace_back();
            up_convs_.push_back(Conv2d::along_w(ch_, 2 * ch_, kernel, 1, 1, rng));
            dec_convs_.push_back(Conv2d::along_w(2 * ch_, ch_, kernel, 1, 1, rng));
            dec_tfilms_.emplace_back(ch_, rng);
            dec_prelus_.emplace_back(ch_);
        }
    }

    int64_t depth() const { return depth_; }
    int64_t channels() const { return ch_; }
    int64_t num_tfilms() const { return 2 * depth_; }

    Tensor forward(const Tensor& x, int64_t batch, int64_t frames, StreamStates* ss, Ctx ctx) {
        TMGAN_CHECK(x.dim(3) % (int64_t(1) << depth_) == 0, ShapeError,
                    "SubUNet: within-frame length not divisible by 2^depth");
        std::vector<Tensor> skips;
        Tensor h = x;
        for (int64_t m = 0; m < depth_; ++m) {
            h = enc_convs_[size_t(m)].forward(h, ctx);
            h = run_tfilm(enc_tfilms_[size_t(m)], h, batch, frames, ss, ctx);
            h = enc_prelus_[size_t(m)].forward(h, ctx);
            skips.push_back(h);
            h = pools_[size_t(m)].forward(h, ctx);
        }
        for (int64_t m = depth_ - 1; m >= 0; --m) {
            h = up_convs_[size_t(m)].forward(h, ctx);
            h = subpixel_shuffle(h, 2);
            h = concat_channels(h, skips[size_t(m)]);
            h = dec_convs_[size_t(m)].forward(h, ctx);
            h = run_tfilm(dec_tfilms_[size_t(m)], h, batch, frames, ss, ctx);
            h = dec_prelus_[size_t(m)].forward(h, ctx);
        }
        return h;
    }

    Tensor backward(const Tensor& gy) {
        std::vector<Tensor> gskips(static_cast<size_t>(depth_));
        Tensor g = gy;
        for (int64_t m = 0; m < depth_; ++m) {
            g = dec_prelus_[size_t(m)].backward(g);
            g = dec_tfilms_[size_t(m)].backward(g);
            g = dec_convs_[size_t(m)].backward(g);
            Tensor gup, gsk;
            split_channels(g, ch_, gup, gsk);
            gskips[size_t(m)] = std::move(gsk);
            g = subpixel_shuffle_backward(gup, 2);
            g = up_convs_[size_t(m)].backward(g);
        }
        for (int64_t m = depth_ - 1; m >= 0; --m) {
            g = pools_[size_t(m)].backward(g);
            g.add(gskips[size_t(m)]);
            g = enc_prelus_[size_t(m)].backward(g);
            g = enc_tfilms_[size_t(m)].backward(g);
            g = enc_convs_[size_t(m)].backward(g);
        }
        return g;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        for (int64_t m = 0; m < depth_; ++m) {
            std::string e = prefix + ".enc" + std::to_string(m);
            enc_convs_[size_t(m)].visit(e + ".conv", pv, bv);
            enc_tfilms_[size_t(m)].visit(e + ".tfilm", pv, bv);
            enc_prelus_[size_t(m)].visit(e + ".prelu", pv, bv);
        }
        for (int64_t m = 0; m < depth_; ++m) {
            std::string d = prefix + ".dec" + std::to_string(m);
            up_convs_[size_t(m)].visit(d + ".up", pv, bv);
            dec_convs_[size_t(m)].visit(d + ".conv", pv, bv);
            dec_tfilms_[size_t(m)].visit(d + ".tfilm", pv, bv);
            dec_prelus_[size_t(m)].visit(d + ".prelu", pv, bv);
        }
    }

    void drop_cache() override {
        for (auto& c : enc_convs_) c.drop_cache();
        for (auto& t : enc_tfilms_) t.drop_cache();
        for (auto& p : enc_prelus_) p.drop_cache();
        for (auto& p : pools_) p.drop_cache();
        for (auto& c : up_convs_) c.drop_cache();
        for (auto& c : dec_convs_) c.drop_cache();
        for (auto& t : dec_tfilms_) t.drop_cache();
        for (auto& p : dec_prelus_) p.drop_cache();
    }

private:
    static Tensor run_tfilm(TFiLM& layer, const Tensor& h, int64_t batch, int64_t frames,
                            StreamStates* ss, Ctx ctx) {
        if (ss) return layer.forward(h, batch, frames, ss->next(), ctx);
        TFiLMState local;
        return layer.forward(h, batch, frames, local, ctx);
    }

    int64_t depth_ = 0, ch_ = 0;
    std::vector<Conv2d> enc_convs_, up_convs_, dec_convs_;
    std::vector<TFiLM> enc_tfilms_, dec_tfilms_;
    std::vector<PRelu> enc_prelus_, dec_prelus_;
    std::vector<MaxPoolHalf> pools_;
};

// Public op: bare sub-pixel rearrangement on [C*r, F, N'] -> [C, F, N'*r].
inline Tensor subpixel_upsample(const Tensor& x_cfn, int64_t r) {
    TMGAN_CHECK(x_cfn.rank() == 3, ShapeError, "subpixel_upsample: want [C*r, F, N']");
    TMGAN_CHECK(x_cfn.dim(0) % r == 0, ShapeError,
                "subpixel_upsample: channels not divisible by r");
    Tensor fm = to_frame_major(x_cfn);
    Tensor y = subpixel_shuffle(fm, r);
    return from_frame_major(y, x_cfn.dim(1));
}

// ---------------------------------------------------------------------------
// Nested-UNet generator. Outer encoder: GLU -> sub-UNet (depths {4,3,2,1})
// -> max-pool(x2). Bottleneck: residual gated VQ. Outer decoder mirrors the
// encoder with sub-pixel upsampling and skip concatenation; a final conv
// maps back to one channel.
// ---------------------------------------------------------------------------

class NestedUNetGenerator : public Module {
public:
    explicit NestedUNetGenerator(const GeneratorConfig& cfg, uint64_t seed)
        : cfg_(cfg), ch_(cfg.channels()) {
        Rng rng(mix_seed(seed, 0xa11ce));
        TMGAN_CHECK(cfg_.depths.size() == ch_.size() && !ch_.empty(), ParamError,
                    "generator: channel plan and depths must align");
        TMGAN_CHECK(cfg_.lookahead >= 0, ParamError, "generator: negative lookahead");
        int64_t blocks = int64_t(ch_.size());
        int64_t n = cfg_.frame_samples;
        int64_t in_ch = 1 + cfg_.lookahead;
        for (int64_t i = 0; i < blocks; ++i) {
            TMGAN_CHECK(n % (int64_t(1) << cfg_.depths[size_t(i)]) == 0, ShapeError,
                        "generator: within-frame length does not support sub-UNet depth");
            TMGAN_CHECK(n % 2 == 0, ShapeError, "generator: outer pool needs even length");
            enc_glus_.push_back(std::make_unique<GluBlock>(in_ch, ch_[size_t(i)], cfg_.kernel, rng));
            enc_subs_.push_back(std::make_unique<SubUNet>(cfg_.depths[size_t(i)], ch_[size_t(i)],
                                                          cfg_.kernel, rng));
            enc_pools_.emplace_back();
            in_ch = ch_[size_t(i)];
            n /= 2;
        }
        bottleneck_len_ = n;
        gvq_ = std::make_unique<ResidualGVQStack>(cfg_.vq_stages, ch_.back(), cfg_.codebook_size,
                                                  cfg_.commit_beta, mix_seed(seed, 0xc0de), rng);
        int64_t prev = ch_.back();
        for (int64_t j = 0; j < blocks; ++j) {
            int64_t si = blocks - 1 - j;  // outer skip: encoder block si
            int64_t c = ch_[size_t(si)];
            int64_t depth = cfg_.depths[size_t(si)];
            n *= 2;
            TMGAN_CHECK(n % (int64_t(1) << depth) == 0, ShapeError,
                        "generator: decoder sub-UNet depth unsupported at this length");
            dec_upconvs_.push_back(Conv2d::along_w(prev, 2 * c, cfg_.kernel, 1, 1, rng));
            dec_glus_.push_back(std::make_unique<GluBlock>(2 * c, c, cfg_.kernel, rng));
            dec_subs_.push_back(std::make_unique<SubUNet>(depth, c, cfg_.kernel, rng));
            prev = c;
        }
        TMGAN_CHECK(n == cfg_.frame_samples, ShapeError, "generator: length bookkeeping broke");
        head_ = Conv2d::along_w(ch_.front(), 1, cfg_.kernel, 1, 1, rng);
    }

    const GeneratorConfig& config() const { return cfg_; }
    const std::vector<int64_t>& scaled_channels() const { return ch_; }
    int64_t bottleneck_len() const { return bottleneck_len_; }
    ResidualGVQStack& gvq() { return *gvq_; }

    int64_t num_tfilms() const {
        int64_t n = 0;
        for (const auto& s : enc_subs_) n += s->num_tfilms();
        for (const auto& s : dec_subs_) n += s->num_tfilms();
        return n;
    }

    StreamStates make_stream_states() const {
        StreamStates ss;
        ss.tfilm.resize(size_t(num_tfilms()));
        return ss;
    }

    struct CoreOut {
        Tensor y;  // [B*F, 1, 1, N]
        real_t vq_commit = 0.0;
        StackIndices indices;
    };

    // x: [B*F, 1+lookahead, 1, N] context-stacked traced frames.
    CoreOut forward_core(const Tensor& x, int64_t batch, int64_t frames, Ctx ctx,
                         StreamStates* ss = nullptr) {
        TMGAN_CHECK(x.rank() == 4 && x.dim(1) == 1 + cfg_.lookahead &&
                        x.dim(3) == cfg_.frame_samples && x.dim(0) == batch * frames,
                    ShapeError, "generator: bad core input shape");
        if (ss) ss->rewind();
        std::vector<Tensor> skips;
        Tensor h = x;
        for (size_t i = 0; i < enc_glus_.size(); ++i) {
            h = enc_glus_[i]->forward(h, ctx);
            h = enc_subs_[i]->forward(h, batch, frames, ss, ctx);
            skips.push_back(h);
            h = enc_pools_[i].forward(h, ctx);
        }
        ResidualGVQStack::Result vq = gvq_->forward(h, ctx);
        h = vq.zq;
        for (size_t j = 0; j < dec_glus_.size(); ++j) {
            h = dec_upconvs_[j].forward(h, ctx);
            h = subpixel_shuffle(h, 2);
            h = concat_channels(h, skips[skips.size() - 1 - j]);
            h = dec_glus_[j]->forward(h, ctx);
            h = dec_subs_[j]->forward(h, batch, frames, ss, ctx);
        }
        CoreOut out;
        out.y = head_.forward(h, ctx);
        out.vq_commit = vq.aux_loss;
        out.indices = std::move(vq.indices);
        return out;
    }

    // gy: [B*F, 1, 1, N]. aux_scale weights the commitment-loss gradient.
    // Returns the gradient w.r.t. the context input.
    Tensor backward_core(const Tensor& gy, real_t aux_scale = 1.0) {
        Tensor g = head_.backward(gy);
        size_t blocks = dec_glus_.size();
        std::vector<Tensor> gskips(blocks);
        for (size_t j = blocks; j-- > 0;) {
            g = dec_subs_[j]->backward(g);
            g = dec_glus_[j]->backward(g);
            int64_t c = dec_subs_[j]->channels();
            Tensor gup, gsk;
            split_channels(g, c, gup, gsk);
            gskips[blocks - 1 - j] = std::move(gsk);
            g = subpixel_shuffle_backward(gup, 2);
            g = dec_upconvs_[j].backward(g);
        }
        g = gvq_->backward(g, aux_scale);
        for (size_t i = enc_glus_.size(); i-- > 0;) {
            g = enc_pools_[i].backward(g);
            g.add(gskips[i]);
            g = enc_subs_[i]->backward(g);
            g = enc_glus_[i]->backward(g);
        }
        return g;
    }

    void visit(const std::string& prefix, const ParamVisitor& pv,
               const BufferVisitor& bv) override {
        std::string p = prefix.empty() ? "gen" : prefix;
        for (size_t i = 0; i < enc_glus_.size(); ++i) {
            enc_glus_[i]->visit(p + ".enc" + std::to_string(i) + ".glu", pv, bv);
            enc_subs_[i]->visit(p + ".enc" + std::to_string(i) + ".sub", pv, bv);
        }
        gvq_->visit(p + ".gvq", pv, bv);
        for (size_t j = 0; j < dec_glus_.size(); ++j) {
            dec_upconvs_[j].visit(p + ".dec" + std::to_string(j) + ".up", pv, bv);
            dec_glus_[j]->visit(p + ".dec" + std::to_string(j) + ".glu", pv, bv);
            dec_subs_[j]->visit(p + ".dec" + std::to_string(j) + ".sub", pv, bv);
        }
        head_.visit(p + ".head", pv, bv);
    }

    void drop_cache() override {
        for (auto& m : enc_glus_) m->drop_cache();
        for (auto& m : enc_subs_) m->drop_cache();
        for (auto& m : enc_pools_) m.drop_cache();
        gvq_->drop_cache();
        for (auto& m : dec_upconvs_) m.drop_cache();
        for (auto& m : dec_glus_) m->drop_cache();
        for (auto& m : dec_subs_) m->drop_cache();
        head_.drop_cache();
    }

private:
    GeneratorConfig cfg_;
    std::vector<int64_t> ch_;
    int64_t bottleneck_len_ = 0;
    std::vector<std::unique_ptr<GluBlock>> enc_glus_;
    std::vector<std::unique_ptr<SubUNet>> enc_subs_;
    std::vector<MaxPoolHalf> enc_pools_;
    std::unique_ptr<ResidualGVQStack> gvq_;
    std::vector<Conv2d> dec_upconvs_;
    std::vector<std::unique_ptr<GluBlock>> dec_glus_;
    std::vector<std::unique_ptr<SubUNet>> dec_subs_;
    Conv2d head_;
};

// ---------------------------------------------------------------------------
// Context stacking: channel k of frame slot j holds traced frame j+k, zero
// beyond the end of the utterance. This is how the 2-frame lookahead enters;
// everything downstream is strictly causal over the frame axis.
// ---------------------------------------------------------------------------

inline Tensor build_context(const std::vector<const FrameGrid*>& grids, int64_t lookahead) {
    TMGAN_CHECK(!grids.empty(), ParamError, "build_context: empty batch");
    int64_t F = grids[0]->frames, N = grids[0]->frame_length;
    int64_t B = int64_t(grids.size());
    for (const FrameGrid* g : grids)
        TMGAN_CHECK(g->frames == F && g->frame_length == N, ShapeError,
                    "build_context: inconsistent grids");
    Tensor x({B * F, 1 + lookahead, 1, N});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t f = 0; f < F; ++f)
            for (int64_t k = 0; k <= lookahead; ++k) {
                if (f + k >= F) continue;  // zeros beyond stream end
                const real_t* src = grids[size_t(b)]->row(f + k);
                real_t* dst = x.data() + ((b * F + f) * (1 + lookahead) + k) * N;
                std::copy(src, src + N, dst);
            }
    return x;
}

// Whole-utterance concealment. The received grid is re-traced (idempotent if
// already zero-filled); with splice on, received frames pass through
// unchanged in the output.
inline FrameGrid generator_forward(NestedUNetGenerator& gen, const FrameGrid& received,
                                   const LossTrace& trace, bool splice = true,
                                   StreamStates* ss = nullptr) {
    TMGAN_CHECK(received.frame_length == gen.config().frame_samples, ShapeError,
                "generator_forward: frame length mismatch");
    TMGAN_CHECK(received.frames >= 1, ShapeError, "generator_forward: empty grid");
    FrameGrid traced = apply_trace(received, trace);
    std::vector<const FrameGrid*> one{&traced};
    Tensor x = build_context(one, gen.config().lookahead);
    NestedUNetGenerator::CoreOut out = gen.forward_core(x, 1, received.frames, kInfer, ss);
    FrameGrid result;
    result.frames = received.frames;
    result.frame_length = received.frame_length;
    result.samples.assign(size_t(result.frames * result.frame_length), 0.0);
    std::copy(out.y.data(), out.y.data() + out.y.numel(), result.samples.begin());
    if (splice) {
        for (int64_t j = 0; j < result.frames; ++j)
            if (trace.flags[size_t(j)] == 1)
                std::copy(traced.row(j), traced.row(j) + result.frame_length, result.row(j));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Streaming session. Frame j is emitted once frame j+lookahead has been
// pushed (or at flush); outputs are elementwise equal to the batch path.
// ---------------------------------------------------------------------------

class StreamingConcealer {
public:
    StreamingConcealer(NestedUNetGenerator& gen, bool splice)
        : gen_(gen), splice_(splice), states_(gen.make_stream_states()) {
        n_ = gen_.config().frame_samples;
        lookahead_ = gen_.config().lookahead;
    }

    // Push frame `index` (0-based, strictly in order) with its received flag.
    // Lost frames may pass any payload; they are zero-filled internally.
    // Returns the frames emitted by this push.
    std::vector<std::vector<real_t>> push(int64_t index, const real_t* samples, bool received) {
        TMGAN_CHECK(!flushed_, ProtocolError, "StreamingConcealer: push after flush");
        TMGAN_CHECK(index == pushed_, ProtocolError, "StreamingConcealer: out-of-order frame");
        Buffered b;
        b.received = received;
        b.zero_filled.assign(size_t(n_), 0.0);
        b.original.assign(samples, samples + n_);
        if (received) b.zero_filled = b.original;
        window_.push_back(std::move(b));
        ++pushed_;
        std::vector<std::vector<real_t>> out;
        while (next_emit_ + lookahead_ < pushed_) out.push_back(emit_next());
        return out;
    }

    // Process the tail with zero future context. After flush the session is
    // closed.
    std::vector<std::vector<real_t>> flush() {
        TMGAN_CHECK(!flushed_, ProtocolError, "StreamingConcealer: double flush");
        std::vector<std::vector<real_t>> out;
        while (next_emit_ < pushed_) out.push_back(emit_next());
        flushed_ = true;
        return out;
    }

    int64_t frames_emitted() const { return next_emit_; }

private:
    struct Buffered {
        std::vector<real_t> zero_filled;
        std::vector<real_t> original;
        bool received = false;
    };

    std::vector<real_t> emit_next() {
        int64_t slot = next_emit_;
        Tensor x({1, 1 + lookahead_, 1, n_});
        for (int64_t k = 0; k <= lookahead_; ++k) {
            int64_t j = slot + k;
            if (j >= pushed_) continue;
            const std::vector<real_t>& src = window_[size_t(j - base_)].zero_filled;
            std::copy(src.begin(), src.end(), x.data() + k * n_);
        }
        NestedUNetGenerator::CoreOut out = gen_.forward_core(x, 1, 1, kInfer, &states_);
        std::vector<real_t> frame(static_cast<size_t>(n_));
        const Buffered& cur = window_[size_t(slot - base_)];
        if (splice_ && cur.received)
            frame = cur.original;
        else
            std::copy(out.y.data(), out.y.data() + n_, frame.begin());
        ++next_emit_;
        while (base_ < next_emit_ && !window_.empty()) {
            window_.pop_front();
            ++base_;
        }
        return frame;
    }

    NestedUNetGenerator& gen_;
    bool splice_ = true;
    StreamStates states_;
    std::deque<Buffered> window_;
    int64_t n_ = 0, lookahead_ = 2;
    int64_t pushed_ = 0, next_emit_ = 0, base_ = 0;
    bool flushed_ = false;
};

// Convenience wrapper: run a whole utterance through the streaming path.
inline FrameGrid streaming_conceal(NestedUNetGenerator& gen, const FrameGrid& received,
                                   const LossTrace& trace, bool splice = true) {
    TMGAN_CHECK(trace.num_frames() >= received.frames, LengthError,
                "streaming_conceal: trace shorter than grid");
    StreamingConcealer session(gen, splice);
    FrameGrid out;
    out.frames = received.frames;
    out.frame_length = received.frame_length;
    out.samples.assign(size_t(out.frames * out.frame_length), 0.0);
    int64_t written = 0;
    auto sink = [&](const std::vector<std::vector<real_t>>& frames) {
        for (const auto& f : frames) {
            std::copy(f.begin(), f.end(), out.row(written));
            ++written;
        }
    };
    for (int64_t j = 0; j < received.frames; ++j)
        sink(session.push(j, received.row(j), trace.flags[size_t(j)] == 1));
    sink(session.flush());
    TMGAN_CHECK(written == received.frames, Error, "streaming_conceal: frame count mismatch");
    return out;
}

}  // namespace tmgan
