#pragma once

#include <vector>

#include "tmgan/audio.hpp"
#include "tmgan/common.hpp"
#include "tmgan/trace.hpp"

namespace tmgan {

// F x N grid of frame samples. Row j holds frame j; the trailing remainder of
// the source clip (L mod N samples) is dropped.
struct FrameGrid {
    std::vector<real_t> samples;  // F * N, row-major
    int64_t frames = 0;           // F
    int64_t frame_length = 0;     // N

    real_t& at(int64_t j, int64_t n) { return samples[size_t(j * frame_length + n)]; }
    real_t at(int64_t j, int64_t n) const { return samples[size_t(j * frame_length + n)]; }

    real_t* row(int64_t j) { return samples.data() + j * frame_length; }
    const real_t* row(int64_t j) const { return samples.data() + j * frame_length; }

    real_t energy() const {
        real_t e = 0.0;
        for (real_t s : samples) e += s * s;
        return e;
    }
};

inline FrameGrid frame_signal(const AudioClip& clip, int64_t frame_length) {
    TMGAN_CHECK(frame_length >= 1, ParamError, "frame_signal: N must be >= 1");
    TMGAN_CHECK(clip.length() >= frame_length, LengthError,
                "frame_signal: clip shorter than one frame");
    FrameGrid g;
    g.frame_length = frame_length;
    g.frames = clip.length() / frame_length;
    g.samples.assign(size_t(g.frames * frame_length), 0.0);
    std::copy(clip.samples.begin(), clip.samples.begin() + g.frames * frame_length,
              g.samples.begin());
    return g;
}

inline FrameGrid apply_trace(const FrameGrid& grid, const LossTrace& trace) {
    TMGAN_CHECK(trace.num_frames() >= grid.frames, LengthError,
                "apply_trace: trace shorter than grid");
    FrameGrid out = grid;
    for (int64_t j = 0; j < grid.frames; ++j) {
        if (trace.flags[size_t(j)] == 0)
            std::fill(out.row(j), out.row(j) + out.frame_length, 0.0);
    }
    return out;
}

inline AudioClip unframe(const FrameGrid& grid, int sample_rate) {
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples = grid.samples;
    return clip;
}

// Frames-per-second helper for the canonical 20 ms framing.
inline int64_t samples_per_frame(int sample_rate, int frame_ms) {
    return int64_t(sample_rate) * frame_ms / 1000;
}

}  // namespace tmgan
