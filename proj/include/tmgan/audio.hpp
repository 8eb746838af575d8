#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tmgan/common.hpp"

namespace tmgan {

// Mono audio, amplitudes nominally in [-1, 1].
struct AudioClip {
    std::vector<real_t> samples;
    int sample_rate = 16000;

    int64_t length() const { return static_cast<int64_t>(samples.size()); }

    real_t duration_seconds() const {
        return sample_rate > 0 ? static_cast<real_t>(samples.size()) / sample_rate : 0.0;
    }

    void validate() const {
        TMGAN_CHECK(sample_rate > 0, FormatError, "AudioClip: sample_rate must be positive");
        for (real_t s : samples)
            TMGAN_CHECK(std::isfinite(s), FormatError, "AudioClip: non-finite sample");
    }
};

// ---------------------------------------------------------------------------
// WAV I/O. 16-bit PCM mono only; anything else is a format error.
// Samples quantize with round(x * 32767) and read back as v / 32767, so a
// write/read round trip stays within 1/32768 of the original.
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t rd_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
inline uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

inline void wr_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void wr_u16(std::ostream& os, uint16_t v) {
    uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

inline AudioClip read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    TMGAN_CHECK(f.good(), FormatError, "read_wav: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    TMGAN_CHECK(buf.size() >= 44, FormatError, "read_wav: file too short: " + path);
    TMGAN_CHECK(std::memcmp(buf.data(), "RIFF", 4) == 0 &&
                    std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
                FormatError, "read_wav: not a RIFF/WAVE file: " + path);

    size_t pos = 12;
    int channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    AudioClip clip;
    bool have_data = false;

    while (pos + 8 <= buf.size()) {
        const uint8_t* hdr = buf.data() + pos;
        uint32_t size = detail::rd_u32(hdr + 4);
        pos += 8;
        if (pos + size > buf.size())
            throw FormatError("read_wav: truncated chunk in " + path);
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            TMGAN_CHECK(size >= 16, FormatError, "read_wav: malformed fmt chunk");
            const uint8_t* p = buf.data() + pos;
            uint16_t fmt = detail::rd_u16(p);
            channels = detail::rd_u16(p + 2);
            rate = detail::rd_u32(p + 4);
            bits = detail::rd_u16(p + 14);
            TMGAN_CHECK(fmt == 1, FormatError, "read_wav: only PCM supported");
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            TMGAN_CHECK(have_fmt, FormatError, "read_wav: data chunk before fmt");
            TMGAN_CHECK(channels == 1, FormatError, "read_wav: mono required");
            TMGAN_CHECK(bits == 16, FormatError, "read_wav: 16-bit PCM required");
            size_t n = size / 2;
            clip.samples.resize(n);
            const uint8_t* p = buf.data() + pos;
            for (size_t i = 0; i < n; ++i) {
                int16_t v = static_cast<int16_t>(detail::rd_u16(p + 2 * i));
                clip.samples[i] = static_cast<real_t>(v) / 32767.0;
            }
            have_data = true;
        }
        pos += size + (size & 1);  // chunks are word-aligned
    }
    TMGAN_CHECK(have_fmt && have_data, FormatError, "read_wav: missing fmt or data chunk");
    clip.sample_rate = static_cast<int>(rate);
    clip.validate();
    return clip;
}

inline void write_wav(const std::string& path, const AudioClip& clip) {
    clip.validate();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    TMGAN_CHECK(f.good(), FormatError, "write_wav: cannot open " + path);
    uint32_t n = static_cast<uint32_t>(clip.samples.size());
    uint32_t data_bytes = n * 2;
    f.write("RIFF", 4);
    detail::wr_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    detail::wr_u32(f, 16);
    detail::wr_u16(f, 1);  // PCM
    detail::wr_u16(f, 1);  // mono
    detail::wr_u32(f, static_cast<uint32_t>(clip.sample_rate));
    detail::wr_u32(f, static_cast<uint32_t>(clip.sample_rate) * 2);
    detail::wr_u16(f, 2);   // block align
    detail::wr_u16(f, 16);  // bits
    f.write("data", 4);
    detail::wr_u32(f, data_bytes);
    for (uint32_t i = 0; i < n; ++i) {
        real_t x = std::clamp(clip.samples[i], real_t(-1.0), real_t(1.0));
        int16_t v = static_cast<int16_t>(std::lround(x * 32767.0));
        detail::wr_u16(f, static_cast<uint16_t>(v));
    }
    TMGAN_CHECK(f.good(), FormatError, "write_wav: write failed for " + path);
}

}  // namespace tmgan
