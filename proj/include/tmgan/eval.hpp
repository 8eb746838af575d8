#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tmgan/audio.hpp"
#include "tmgan/common.hpp"
#include "tmgan/framing.hpp"
#include "tmgan/generator.hpp"
#include "tmgan/stft.hpp"
#include "tmgan/trace.hpp"

namespace tmgan {

// Reference concealer: lost frames stay zero.
inline FrameGrid zero_fill_baseline(const FrameGrid& traced) { return traced; }

// ---------------------------------------------------------------------------
// Log-spectral distance in dB. STFT 512/hop 256/Hann; when a trace is given
// the mean runs over STFT frames overlapping lost regions (all frames if the
// trace has no loss).
// ---------------------------------------------------------------------------

inline constexpr real_t kLsdEps = 1e-8;

inline real_t lsd(const AudioClip& ref, const AudioClip& est,
                  const LossTrace* region_mask = nullptr, int64_t fft_size = 512,
                  int64_t hop = 256) {
    TMGAN_CHECK(ref.length() == est.length(), LengthError, "lsd: length mismatch");
    Stft plan(fft_size, fft_size, hop);
    Tensor re_r, im_r, re_e, im_e;
    plan.forward(ref.samples.data(), ref.length(), re_r, im_r);
    plan.forward(est.samples.data(), est.length(), re_e, im_e);
    int64_t t_count = re_r.dim(0), bins = re_r.dim(1);

    std::vector<bool> use(size_t(t_count), true);
    if (region_mask) {
        int64_t spf = samples_per_frame(ref.sample_rate, region_mask->frame_length_ms);
        std::vector<uint8_t> lost_sample(size_t(ref.length()), 0);
        for (int64_t j = 0; j < region_mask->num_frames(); ++j) {
            if (region_mask->flags[size_t(j)] == 1) continue;
            int64_t lo = j * spf, hi = std::min<int64_t>((j + 1) * spf, ref.length());
            for (int64_t i = lo; i < hi; ++i) lost_sample[size_t(i)] = 1;
        }
        bool any = false;
        for (int64_t t = 0; t < t_count; ++t) {
            bool overlap = false;
            for (int64_t i = t * hop; i < t * hop + fft_size && i < ref.length(); ++i)
                if (lost_sample[size_t(i)]) {
                    overlap = true;
                    break;
                }
            use[size_t(t)] = overlap;
            any = any || overlap;
        }
        if (!any) std::fill(use.begin(), use.end(), true);  // no loss: whole-signal LSD
    }

    real_t acc = 0.0;
    int64_t used = 0;
    for (int64_t t = 0; t < t_count; ++t) {
        if (!use[size_t(t)]) continue;
        real_t frame_acc = 0.0;
        for (int64_t k = 0; k < bins; ++k) {
            real_t mr = std::hypot(re_r.at2(t, k), im_r.at2(t, k));
            real_t me = std::hypot(re_e.at2(t, k), im_e.at2(t, k));
            real_t d = 20.0 * std::log10(mr + kLsdEps) - 20.0 * std::log10(me + kLsdEps);
            frame_acc += d * d;
        }
        acc += std::sqrt(frame_acc / real_t(bins));
        ++used;
    }
    TMGAN_CHECK(used > 0, LengthError, "lsd: no frames to evaluate");
    return acc / real_t(used);
}

// ---------------------------------------------------------------------------
// SNR over lost-frame samples only, clamped to +/-100 dB. Absent when the
// trace has no lost frames.
// ---------------------------------------------------------------------------

inline std::optional<real_t> region_snr(const AudioClip& ref, const AudioClip& est,
                                        const LossTrace& trace) {
    TMGAN_CHECK(ref.length() == est.length(), LengthError, "region_snr: length mismatch");
    int64_t spf = samples_per_frame(ref.sample_rate, trace.frame_length_ms);
    real_t sig = 0.0, err = 0.0;
    bool any = false;
    for (int64_t j = 0; j < trace.num_frames(); ++j) {
        if (trace.flags[size_t(j)] == 1) continue;
        int64_t lo = j * spf, hi = std::min<int64_t>((j + 1) * spf, ref.length());
        for (int64_t i = lo; i < hi; ++i) {
            real_t r = ref.samples[size_t(i)], e = est.samples[size_t(i)];
            sig += r * r;
            err += (r - e) * (r - e);
            any = true;
        }
    }
    if (!any) return std::nullopt;
    if (err <= 0.0) return 100.0;
    real_t snr = 10.0 * std::log10(sig / err);
    return std::clamp(snr, real_t(-100.0), real_t(100.0));
}

// ---------------------------------------------------------------------------
// Cost accounting. MAC formulas:
//   conv: output elements x kernel taps x in_channels / groups
//   lstm: 4 gates x (C_in + C_hidden) x C_hidden per frame
//   vq search: codebook_size x dim per quantized column
// ---------------------------------------------------------------------------

inline int64_t macs_conv(int64_t out_elems, int64_t kernel, int64_t in_ch, int64_t groups) {
    return out_elems * kernel * in_ch / groups;
}

inline int64_t macs_lstm(int64_t in_dim, int64_t hidden) {
    return 4 * (in_dim + hidden) * hidden;
}

struct LayerCost {
    std::string name;
    int64_t macs_per_frame = 0;
};

struct CostReport {
    std::vector<LayerCost> layers;
    int64_t macs_per_frame = 0;
    int64_t macs_per_second = 0;
};

// Closed-form per-layer MAC walk of the generator plan, per 20 ms frame.
inline CostReport estimate_macs(const GeneratorConfig& cfg, int sample_rate = 16000) {
    CostReport rep;
    auto add = [&](const std::string& name, int64_t macs) {
        rep.layers.push_back({name, macs});
        rep.macs_per_frame += macs;
    };
    std::vector<int64_t> ch = cfg.channels();
    int64_t k = cfg.kernel;
    int64_t n = cfg.frame_samples;
    int64_t in_ch = 1 + cfg.lookahead;
    auto subunet = [&](const std::string& tag, int64_t depth, int64_t c, int64_t len) {
        for (int64_t m = 0; m < depth; ++m) {
            int64_t l = len >> m;
            add(tag + ".enc" + std::to_string(m) + ".conv", macs_conv(c * l, k, c, 1));
            add(tag + ".enc" + std::to_string(m) + ".tfilm", macs_lstm(c, c));
        }
        for (int64_t m = depth - 1; m >= 0; --m) {
            int64_t l = len >> m;           // decoder layer output length
            int64_t l_in = len >> (m + 1);  // upconv input length
            add(tag + ".dec" + std::to_string(m) + ".up", macs_conv(2 * c * l_in, k, c, 1));
            add(tag + ".dec" + std::to_string(m) + ".conv", macs_conv(c * l, k, 2 * c, 1));
            add(tag + ".dec" + std::to_string(m) + ".tfilm", macs_lstm(c, c));
        }
    };
    for (size_t i = 0; i < ch.size(); ++i) {
        std::string tag = "enc" + std::to_string(i);
        add(tag + ".glu", macs_conv(2 * ch[i] * n, k, in_ch, 1));
        subunet(tag + ".sub", cfg.depths[i], ch[i], n);
        in_ch = ch[i];
        n /= 2;
    }
    int64_t d = ch.back();
    for (int64_t s = 0; s < cfg.vq_stages; ++s) {
        std::string tag = "gvq.q" + std::to_string(s);
        add(tag + ".gate", macs_conv(d * n, 3, d, 1));
        add(tag + ".search", cfg.codebook_size * d * n);
    }
    int64_t prev = d;
    for (size_t j = 0; j < ch.size(); ++j) {
        size_t si = ch.size() - 1 - j;
        int64_t c = ch[si];
        std::string tag = "dec" + std::to_string(j);
        add(tag + ".up", macs_conv(2 * c * n, k, prev, 1));
        n *= 2;
        add(tag + ".glu", macs_conv(2 * c * n, k, 2 * c, 1));
        subunet(tag + ".sub", cfg.depths[si], c, n);
        prev = c;
    }
    add("head", macs_conv(1 * n, k, ch.front(), 1));
    real_t frames_per_second = real_t(sample_rate) / real_t(cfg.frame_samples);
    rep.macs_per_second = int64_t(rep.macs_per_frame * frames_per_second);
    return rep;
}

// Wall-clock real-time factor: median processing time over `runs` whole-clip
// forward passes divided by the clip duration.
inline real_t measure_rtf(NestedUNetGenerator& gen, const AudioClip& clip,
                          const LossTrace& trace, int runs = 5) {
    TMGAN_CHECK(runs >= 1, ParamError, "measure_rtf: need at least one run");
    FrameGrid grid = frame_signal(clip, gen.config().frame_samples);
    std::vector<real_t> times;
    for (int r = 0; r < runs; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        FrameGrid out = generator_forward(gen, grid, trace, gen.config().splice_received);
        auto t1 = std::chrono::steady_clock::now();
        (void)out;
        times.push_back(std::chrono::duration<real_t>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    real_t median = times[times.size() / 2];
    return median / clip.duration_seconds();
}

// ---------------------------------------------------------------------------
// Evaluation report CSV: one row per utterance plus one aggregate row per
// burst class.
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string utterance;
    std::string burst_class;
    real_t lsd_lost = 0.0;
    std::optional<real_t> snr;
    std::optional<real_t> rtf;
};

inline void write_eval_report(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    TMGAN_CHECK(f.good(), FormatError, "write_eval_report: cannot open " + path);
    f << "utterance,burst_class,lsd_lost,region_snr,rtf\n";
    auto field = [](const std::optional<real_t>& v) {
        if (!v) return std::string();
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", *v);
        return std::string(buf);
    };
    std::map<std::string, std::vector<const EvalRow*>> by_class;
    for (const EvalRow& r : rows) {
        char lsd_buf[64];
        std::snprintf(lsd_buf, sizeof(lsd_buf), "%.6g", r.lsd_lost);
        f << r.utterance << ',' << r.burst_class << ',' << lsd_buf << ',' << field(r.snr)
          << ',' << field(r.rtf) << "\n";
        by_class[r.burst_class].push_back(&r);
    }
    for (const auto& [cls, members] : by_class) {
        real_t lsd_acc = 0.0, snr_acc = 0.0, rtf_acc = 0.0;
        int64_t snr_n = 0, rtf_n = 0;
        for (const EvalRow* r : members) {
            lsd_acc += r->lsd_lost;
            if (r->snr) {
                snr_acc += *r->snr;
                ++snr_n;
            }
            if (r->rtf) {
                rtf_acc += *r->rtf;
                ++rtf_n;
            }
        }
        char lsd_buf[64];
        std::snprintf(lsd_buf, sizeof(lsd_buf), "%.6g", lsd_acc / real_t(members.size()));
        f << "aggregate_" << cls << ',' << cls << ',' << lsd_buf << ',';
        if (snr_n) {
            char b[64];
            std::snprintf(b, sizeof(b), "%.6g", snr_acc / real_t(snr_n));
            f << b;
        }
        f << ',';
        if (rtf_n) {
            char b[64];
            std::snprintf(b, sizeof(b), "%.6g", rtf_acc / real_t(rtf_n));
            f << b;
        }
        f << "\n";
    }
    TMGAN_CHECK(f.good(), FormatError, "write_eval_report: write failed");
}

}  // namespace tmgan
