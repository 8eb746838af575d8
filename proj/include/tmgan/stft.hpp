#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tmgan/audio.hpp"
#include "tmgan/common.hpp"
#include "tmgan/tensor.hpp"

namespace tmgan {

using RowMat = Eigen::Matrix<real_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One-sided complex spectrogram, bins [K, T] with K = fft_size/2 + 1.
struct ComplexSpectrogram {
    Tensor re;  // [K, T]
    Tensor im;  // [K, T]
    int64_t fft_size = 0;
    int64_t win_length = 0;
    int64_t hop = 0;
    std::string window = "hann";

    int64_t bins() const { return re.rank() ? re.dim(0) : 0; }
    int64_t frames() const { return re.rank() ? re.dim(1) : 0; }
};

// Periodic Hann window.
inline std::vector<real_t> hann_window(int64_t n) {
    std::vector<real_t> w(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        w[size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * real_t(i) / real_t(n));
    return w;
}

// Windowed DFT as a precomputed matrix pair. Frames are win_length samples,
// zero-padded to fft_size; analysis is a [K, win] x [win, T] product so the
// adjoint (needed for loss gradients) is the transposed product.
class Stft {
public:
    Stft(int64_t fft_size, int64_t win_length, int64_t hop)
        : fft_size_(fft_size), win_length_(win_length), hop_(hop) {
        TMGAN_CHECK(fft_size >= 1 && hop >= 1, ParamError, "Stft: bad sizes");
        TMGAN_CHECK(win_length >= 1 && win_length <= fft_size, ParamError,
                    "Stft: need 1 <= win_length <= fft_size");
        TMGAN_CHECK(fft_size >= hop, ParamError, "Stft: need fft_size >= hop");
        bins_ = fft_size / 2 + 1;
        window_ = hann_window(win_length);
        cos_.resize(bins_, win_length);
        sin_.resize(bins_, win_length);
        for (int64_t k = 0; k < bins_; ++k) {
            for (int64_t n = 0; n < win_length; ++n) {
                real_t ang = 2.0 * M_PI * real_t(k) * real_t(n) / real_t(fft_size);
                cos_(k, n) = window_[size_t(n)] * std::cos(ang);
                sin_(k, n) = -window_[size_t(n)] * std::sin(ang);
            }
        }
    }

    int64_t fft_size() const { return fft_size_; }
    int64_t win_length() const { return win_length_; }
    int64_t hop() const { return hop_; }
    int64_t bins() const { return bins_; }

    int64_t num_frames(int64_t length) const {
        TMGAN_CHECK(length >= win_length_, LengthError, "stft: signal shorter than window");
        return 1 + (length - win_length_) / hop_;
    }

    // re/im output is [T, K] row-major (frame-major is what the models want).
    void forward(const real_t* x, int64_t length, Tensor& re, Tensor& im) const {
        int64_t t_count = num_frames(length);
        RowMat frames(win_length_, t_count);
        for (int64_t t = 0; t < t_count; ++t)
            for (int64_t n = 0; n < win_length_; ++n)
                frames(n, t) = x[t * hop_ + n];
        RowMat r = cos_ * frames;  // [K, T]
        RowMat i = sin_ * frames;
        re = Tensor({t_count, bins_});
        im = Tensor({t_count, bins_});
        for (int64_t t = 0; t < t_count; ++t)
            for (int64_t k = 0; k < bins_; ++k) {
                re.at2(t, k) = r(k, t);
                im.at2(t, k) = i(k, t);
            }
    }

    // Adjoint of forward: accumulates the waveform gradient for gradients
    // arriving on the [T, K] re/im planes.
    void backward(const Tensor& gre, const Tensor& gim, real_t* gx, int64_t length) const {
        int64_t t_count = gre.dim(0);
        RowMat gr(bins_, t_count), gi(bins_, t_count);
        for (int64_t t = 0; t < t_count; ++t)
            for (int64_t k = 0; k < bins_; ++k) {
                gr(k, t) = gre.at2(t, k);
                gi(k, t) = gim.at2(t, k);
            }
        RowMat gframes = cos_.transpose() * gr + sin_.transpose() * gi;  // [win, T]
        for (int64_t t = 0; t < t_count; ++t) {
            for (int64_t n = 0; n < win_length_; ++n) {
                int64_t idx = t * hop_ + n;
                if (idx < length) gx[idx] += gframes(n, t);
            }
        }
    }

    const std::vector<real_t>& window() const { return window_; }

private:
    int64_t fft_size_, win_length_, hop_, bins_;
    std::vector<real_t> window_;
    RowMat cos_, sin_;  // [K, win]
};

// ---------------------------------------------------------------------------
// Public clip-level interface matching the spectrogram type above.
// ---------------------------------------------------------------------------

inline ComplexSpectrogram stft(const AudioClip& clip, int64_t fft_size, int64_t hop,
                               int64_t win_length = 0) {
    if (win_length == 0) win_length = fft_size;
    Stft plan(fft_size, win_length, hop);
    Tensor re, im;
    plan.forward(clip.samples.data(), clip.length(), re, im);
    ComplexSpectrogram s;
    s.fft_size = fft_size;
    s.win_length = win_length;
    s.hop = hop;
    int64_t t_count = re.dim(0), k_count = re.dim(1);
    s.re = Tensor({k_count, t_count});
    s.im = Tensor({k_count, t_count});
    for (int64_t t = 0; t < t_count; ++t)
        for (int64_t k = 0; k < k_count; ++k) {
            s.re.at2(k, t) = re.at2(t, k);
            s.im.at2(k, t) = im.at2(t, k);
        }
    return s;
}

// Weighted overlap-add inverse. Interior samples reconstruct within 1e-6 for
// hop = fft_size/2; edges are attenuated by the window normalization guard.
inline AudioClip istft(const ComplexSpectrogram& spec, int sample_rate) {
    int64_t k_count = spec.bins(), t_count = spec.frames();
    TMGAN_CHECK(k_count == spec.fft_size / 2 + 1, ShapeError, "istft: bin count mismatch");
    int64_t n_fft = spec.fft_size, win = spec.win_length, hop = spec.hop;
    std::vector<real_t> w = hann_window(win);
    int64_t length = (t_count - 1) * hop + win;
    std::vector<real_t> acc(size_t(length), 0.0), norm(size_t(length), 0.0);

    // Inverse DFT matrix for the windowed frame: win x K for re and im parts.
    RowMat icos(win, k_count), isin(win, k_count);
    for (int64_t n = 0; n < win; ++n) {
        for (int64_t k = 0; k < k_count; ++k) {
            real_t ang = 2.0 * M_PI * real_t(k) * real_t(n) / real_t(n_fft);
            real_t scale = (k == 0 || (n_fft % 2 == 0 && k == k_count - 1)) ? 1.0 : 2.0;
            icos(n, k) = scale * std::cos(ang) / real_t(n_fft);
            isin(n, k) = -scale * std::sin(ang) / real_t(n_fft);
        }
    }
    RowMat re(k_count, t_count), im(k_count, t_count);
    for (int64_t k = 0; k < k_count; ++k)
        for (int64_t t = 0; t < t_count; ++t) {
            re(k, t) = spec.re.at2(k, t);
            im(k, t) = spec.im.at2(k, t);
        }
    RowMat frames = icos * re + isin * im;  // [win, T], windowed samples

    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t n = 0; n < win; ++n) {
            int64_t idx = t * hop + n;
            acc[size_t(idx)] += w[size_t(n)] * frames(n, t);
            norm[size_t(idx)] += w[size_t(n)] * w[size_t(n)];
        }
    }
    AudioClip out;
    out.sample_rate = sample_rate;
    out.samples.resize(size_t(length));
    for (int64_t i = 0; i < length; ++i)
        out.samples[size_t(i)] = acc[size_t(i)] / std::max(norm[size_t(i)], real_t(1e-8));
    return out;
}

}  // namespace tmgan
