#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tmgan/audio.hpp"
#include "tmgan/framing.hpp"
#include "tmgan/stft.hpp"
#include "tmgan/trace.hpp"

using namespace tmgan;
using Catch::Approx;

namespace {

AudioClip make_clip(std::vector<real_t> samples, int rate = 16000) {
    AudioClip c;
    c.samples = std::move(samples);
    c.sample_rate = rate;
    return c;
}

}  // namespace

TEST_CASE("frame_signal follows the framing index rule", "[signal_core]") {
    AudioClip clip = make_clip({0, 1, 2, 3, 4, 5, 6, 7});
    FrameGrid g = frame_signal(clip, 4);
    REQUIRE(g.frames == 2);
    REQUIRE(g.frame_length == 4);
    for (int64_t j = 0; j < 2; ++j)
        for (int64_t n = 0; n < 4; ++n) REQUIRE(g.at(j, n) == Approx(4.0 * j + n));

    SECTION("20 ms frames at 16 kHz are 320 samples") {
        REQUIRE(samples_per_frame(16000, 20) == 320);
    }
    SECTION("trailing remainder is dropped") {
        AudioClip nine = make_clip({0, 1, 2, 3, 4, 5, 6, 7, 8});
        FrameGrid g9 = frame_signal(nine, 4);
        REQUIRE(g9.frames == 2);
        REQUIRE(g9.at(1, 3) == Approx(7.0));
    }
    SECTION("clip shorter than one frame is a length error") {
        AudioClip tiny = make_clip({1, 2, 3});
        REQUIRE_THROWS_AS(frame_signal(tiny, 4), LengthError);
    }
}

TEST_CASE("apply_trace zeroes exactly the lost frames", "[signal_core]") {
    FrameGrid g;
    g.frames = 2;
    g.frame_length = 2;
    g.samples = {1, 1, 2, 2};

    LossTrace all1{{1, 1}, 20};
    REQUIRE(apply_trace(g, all1).samples == g.samples);

    LossTrace all0{{0, 0}, 20};
    FrameGrid z = apply_trace(g, all0);
    for (real_t v : z.samples) REQUIRE(v == 0.0);

    LossTrace t{{1, 0}, 20};
    FrameGrid m = apply_trace(g, t);
    REQUIRE(m.samples == std::vector<real_t>{1, 1, 0, 0});

    SECTION("short trace is a length error") {
        LossTrace shrt{{1}, 20};
        REQUIRE_THROWS_AS(apply_trace(g, shrt), LengthError);
    }
    SECTION("idempotent") {
        FrameGrid once = apply_trace(g, t);
        FrameGrid twice = apply_trace(once, t);
        REQUIRE(once.samples == twice.samples);
    }
    SECTION("energy never grows") {
        REQUIRE(apply_trace(g, t).energy() <= g.energy());
    }
}

TEST_CASE("unframe inverts framing on multiples of N", "[signal_core]") {
    FrameGrid g;
    g.frames = 2;
    g.frame_length = 2;
    g.samples = {0, 1, 2, 3};
    AudioClip c = unframe(g, 16000);
    REQUIRE(c.samples == std::vector<real_t>{0, 1, 2, 3});

    Rng rng(7);
    std::vector<real_t> samples(64);
    for (real_t& s : samples) s = rng.uniform(-1, 1);
    AudioClip clip = make_clip(samples);
    AudioClip round = unframe(frame_signal(clip, 8), 16000);
    REQUIRE(round.samples == clip.samples);

    AudioClip nine = make_clip({0, 1, 2, 3, 4, 5, 6, 7, 8});
    AudioClip trunc = unframe(frame_signal(nine, 4), 16000);
    REQUIRE(trunc.samples == std::vector<real_t>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("sample_trace respects burst-class bounds", "[signal_core]") {
    SECTION("short class bursts span 1..6 frames") {
        for (uint64_t seed = 0; seed < 50; ++seed) {
            LossTrace t = sample_trace(seed, 200, BurstClass::Short);
            int64_t run = 0;
            for (uint8_t f : t.flags) {
                if (f == 0) {
                    ++run;
                } else {
                    if (run) REQUIRE((run >= 1 && run <= 6));
                    run = 0;
                }
            }
            if (run) REQUIRE((run >= 1 && run <= 6));
        }
    }
    SECTION("long class bursts span 17..50 frames") {
        for (uint64_t seed = 0; seed < 50; ++seed) {
            LossTrace t = sample_trace(seed, 400, BurstClass::Long);
            int64_t run = 0;
            bool any = false;
            for (uint8_t f : t.flags) {
                if (f == 0) {
                    ++run;
                } else {
                    if (run) {
                        REQUIRE((run >= 17 && run <= 50));
                        any = true;
                    }
                    run = 0;
                }
            }
            if (run) {
                REQUIRE((run >= 17 && run <= 50));
                any = true;
            }
            REQUIRE(any);
        }
    }
    SECTION("same seed gives the same trace") {
        LossTrace a = sample_trace(99, 100, BurstClass::Mid);
        LossTrace b = sample_trace(99, 100, BurstClass::Mid);
        REQUIRE(a.flags == b.flags);
    }
    SECTION("burst longer than the trace is a parameter error") {
        REQUIRE_THROWS_AS(sample_trace(1, 5, BurstClass::Long), ParamError);
    }
    SECTION("loss rate zero gives an all-received trace") {
        LossTrace t = sample_trace(3, 50, BurstClass::Short, 0.0);
        for (uint8_t f : t.flags) REQUIRE(f == 1);
    }
}

TEST_CASE("stft basics", "[signal_core]") {
    SECTION("zero signal maps to a zero spectrogram") {
        AudioClip z = make_clip(std::vector<real_t>(2048, 0.0));
        ComplexSpectrogram s = stft(z, 512, 256);
        REQUIRE(s.re.sumsq() == 0.0);
        REQUIRE(s.im.sumsq() == 0.0);
    }
    SECTION("bin-centered sinusoid concentrates in its bin") {
        int64_t n_fft = 256;
        int64_t k_true = 16;
        std::vector<real_t> x(4096);
        for (size_t i = 0; i < x.size(); ++i)
            x[i] = std::sin(2.0 * M_PI * real_t(k_true) * real_t(i) / real_t(n_fft));
        ComplexSpectrogram s = stft(make_clip(x), n_fft, n_fft / 2);
        // oracle: direct DFT of one interior frame
        int64_t t = 3;
        int64_t best = 0;
        real_t best_mag = -1;
        for (int64_t k = 0; k < s.bins(); ++k) {
            real_t re = 0, im = 0;
            for (int64_t n = 0; n < n_fft; ++n) {
                real_t w = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / real_t(n_fft));
                real_t ang = 2.0 * M_PI * k * n / real_t(n_fft);
                re += w * x[size_t(t * n_fft / 2 + n)] * std::cos(ang);
                im -= w * x[size_t(t * n_fft / 2 + n)] * std::sin(ang);
            }
            real_t mag = std::hypot(re, im);
            if (mag > best_mag) {
                best_mag = mag;
                best = k;
            }
            REQUIRE(s.re.at2(k, t) == Approx(re).margin(1e-9));
            REQUIRE(s.im.at2(k, t) == Approx(im).margin(1e-9));
        }
        REQUIRE(best == k_true);
    }
    SECTION("istft(stft(x)) reconstructs the interior") {
        Rng rng(11);
        std::vector<real_t> x(5000);
        for (real_t& v : x) v = rng.uniform(-1, 1);
        AudioClip clip = make_clip(x);
        ComplexSpectrogram s = stft(clip, 512, 256);
        AudioClip back = istft(s, 16000);
        for (int64_t i = 512; i < back.length() - 512; ++i)
            REQUIRE(back.samples[size_t(i)] == Approx(x[size_t(i)]).margin(1e-6));
    }
    SECTION("clip shorter than a window is a length error") {
        AudioClip tiny = make_clip(std::vector<real_t>(100, 0.1));
        REQUIRE_THROWS_AS(stft(tiny, 512, 256), LengthError);
    }
}

TEST_CASE("wav io round trip and format errors", "[signal_core]") {
    std::string dir = testutil::temp_dir("wav");
    SECTION("write/read stays within one quantization step") {
        Rng rng(5);
        std::vector<real_t> x(1000);
        for (real_t& v : x) v = rng.uniform(-1, 1);
        AudioClip clip = make_clip(x);
        write_wav(dir + "/a.wav", clip);
        AudioClip back = read_wav(dir + "/a.wav");
        REQUIRE(back.sample_rate == 16000);
        REQUIRE(back.length() == clip.length());
        for (size_t i = 0; i < x.size(); ++i)
            REQUIRE(back.samples[i] == Approx(x[i]).margin(1.0 / 32768.0));
    }
    SECTION("second read of own output is bit-identical") {
        AudioClip clip = make_clip({0.1, -0.5, 0.9});
        write_wav(dir + "/b.wav", clip);
        AudioClip once = read_wav(dir + "/b.wav");
        write_wav(dir + "/c.wav", once);
        REQUIRE(testutil::slurp(dir + "/b.wav") == testutil::slurp(dir + "/c.wav"));
    }
    SECTION("non-mono and non-16-bit are format errors") {
        // hand-build a stereo header
        AudioClip clip = make_clip({0.0, 0.0});
        write_wav(dir + "/d.wav", clip);
        std::string bytes = testutil::slurp(dir + "/d.wav");
        bytes[22] = 2;  // channels
        std::ofstream(dir + "/stereo.wav", std::ios::binary) << bytes;
        REQUIRE_THROWS_AS(read_wav(dir + "/stereo.wav"), FormatError);
        bytes[22] = 1;
        bytes[34] = 8;  // bits
        std::ofstream(dir + "/8bit.wav", std::ios::binary) << bytes;
        REQUIRE_THROWS_AS(read_wav(dir + "/8bit.wav"), FormatError);
    }
    SECTION("garbage is a format error") {
        std::ofstream(dir + "/junk.wav", std::ios::binary) << "not a wav at all";
        REQUIRE_THROWS_AS(read_wav(dir + "/junk.wav"), FormatError);
    }
}

TEST_CASE("trace file round trip and errors", "[signal_core]") {
    std::string dir = testutil::temp_dir("trace");
    LossTrace t = sample_trace(17, 64, BurstClass::Mid);
    write_trace(dir + "/t.txt", t);
    LossTrace back = read_trace(dir + "/t.txt");
    REQUIRE(back.flags == t.flags);
    REQUIRE(back.frame_length_ms == 20);

    SECTION("flag other than 0/1 is a format error") {
        std::ofstream(dir + "/bad.txt") << "# frame_ms=20\n1\n2\n";
        REQUIRE_THROWS_AS(read_trace(dir + "/bad.txt"), FormatError);
    }
    SECTION("malformed header is a format error") {
        std::ofstream(dir + "/hdr.txt") << "frame_ms=20\n1\n";
        REQUIRE_THROWS_AS(read_trace(dir + "/hdr.txt"), FormatError);
    }
}
